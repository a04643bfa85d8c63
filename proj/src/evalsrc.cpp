#include "treenas/evalsrc.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "treenas/error.hpp"

namespace treenas {

namespace {


double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

OutputMatrix matrix_from_json(const nlohmann::json& rows) {
  OutputMatrix m;
  m.rows = rows.size();
  m.cols = m.rows ? rows.at(0).size() : 0;
  m.data.reserve(m.rows * m.cols);
  for (const auto& r : rows) {
    if (r.size() != m.cols) throw SchemaError("ragged output matrix in benchmark record");
    for (const auto& v : r) m.data.push_back(v.get<double>());
  }
  return m;
}

nlohmann::json matrix_to_json(const OutputMatrix& m) {
  auto rows = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows; ++r) {
    const auto row = m.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

void softmax_inplace(std::span<double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double& v : logits) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : logits) v /= sum;
}

}  // namespace

double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }

GroundTruth::GroundTruth(std::vector<double> accuracy_percent) : accuracy_(std::move(accuracy_percent)) {
  order_.resize(accuracy_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::stable_sort(order_.begin(), order_.end(),
                   [&](std::size_t a, std::size_t b) { return accuracy_[a] > accuracy_[b]; });
  rank_.resize(accuracy_.size());
  for (std::size_t r = 0; r < order_.size(); ++r) rank_[order_[r]] = r + 1;
}

TabularBenchmark::TabularBenchmark(SearchSpace space, std::vector<BenchmarkRecord> records)
    : space_(std::move(space)), records_(std::move(records)) {
  if (records_.size() != space_.cardinality()) {
    throw CoverageError("benchmark has " + std::to_string(records_.size()) + " records for " +
                        std::to_string(space_.cardinality()) + " architectures");
  }
  std::vector<double> acc;
  acc.reserve(records_.size());
  for (const auto& r : records_) {
    if (!std::isfinite(r.accuracy) || r.accuracy < 0.0 || r.accuracy > 100.0) {
      throw SchemaError("benchmark accuracy must be a percentage in [0, 100]");
    }
    acc.push_back(r.accuracy);
  }
  truth_ = GroundTruth(std::move(acc));
}

bool TabularBenchmark::has_outputs() const {
  return !records_.empty() &&
         std::all_of(records_.begin(), records_.end(), [](const auto& r) { return r.outputs.has_value(); });
}

TabularBenchmark TabularBenchmark::from_json(const nlohmann::json& doc, const SearchSpace& space) {
  if (!doc.is_object() || !doc.contains("records") || !doc.at("records").is_object()) {
    throw SchemaError("benchmark document needs a 'records' object");
  }
  if (doc.contains("space") && doc.at("space").is_string() && doc.at("space").get<std::string>() != space.id()) {
    throw SchemaError("benchmark is for space '" + doc.at("space").get<std::string>() + "', not '" +
                      space.id() + "'");
  }
  const std::size_t n = space.cardinality();
  std::vector<std::optional<BenchmarkRecord>> slots(n);
  for (const auto& [key, rec] : doc.at("records").items()) {
    Architecture arch;
    try {
      arch = Architecture::parse(key);
    } catch (const InvalidArch&) {
      throw SchemaError("benchmark key '" + key + "' is not an architecture string");
    }
    if (!space.satisfies(arch)) throw CoverageError("benchmark record '" + key + "' is not in the space");
    auto& slot = slots[space.index_of(arch)];
    if (slot) throw SchemaError("duplicate benchmark record '" + key + "'");
    try {
      BenchmarkRecord r;
      r.accuracy = rec.at("acc").get<double>();
      if (rec.contains("flops") && !rec.at("flops").is_null()) r.flops = rec.at("flops").get<double>();
      if (rec.contains("params") && !rec.at("params").is_null()) r.params = rec.at("params").get<double>();
      if (rec.contains("curve")) r.curve = rec.at("curve").get<std::vector<double>>();
      if (rec.contains("outputs")) r.outputs = matrix_from_json(rec.at("outputs"));
      slot = std::move(r);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("malformed benchmark record '" + key + "': " + e.what());
    }
  }
  std::vector<BenchmarkRecord> records;
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!slots[i]) throw CoverageError("benchmark has no record for '" + space.arch_at(i).to_string() + "'");
    records.push_back(std::move(*slots[i]));
  }
  return TabularBenchmark(space, std::move(records));
}

TabularBenchmark TabularBenchmark::load(const std::string& path, const SearchSpace& space) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open benchmark file '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("benchmark file '" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(doc, space);
}

nlohmann::json TabularBenchmark::to_json() const {
  nlohmann::json records = nlohmann::json::object();
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    nlohmann::json rec = {{"acc", r.accuracy}};
    if (r.flops) rec["flops"] = *r.flops;
    if (r.params) rec["params"] = *r.params;
    if (!r.curve.empty()) rec["curve"] = r.curve;
    if (r.outputs) rec["outputs"] = matrix_to_json(*r.outputs);
    records[space_.arch_at(i).to_string()] = std::move(rec);
  }
  return {{"space", space_.id()}, {"records", std::move(records)}};
}

void TabularBenchmark::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot write benchmark file '" + path + "'");
  out << to_json().dump(1) << '\n';
}

TabularEvaluator::TabularEvaluator(std::shared_ptr<const TabularBenchmark> table, NoiseModel noise)
    : table_(std::move(table)), noise_(noise) {}

EvalOutcome TabularEvaluator::evaluate(const Architecture& arch, double progress, Rng& rng) const {
  const auto& rec = table_->record(arch);
  EvalOutcome out;
  const double noise = noise_.sigma_acc * rng.normal();
  out.accuracy = clamp01(noise_.ramp(progress) * rec.accuracy / 100.0 + noise);
  out.flops = rec.flops;
  if (!out.flops && space().has_cost_model()) out.flops = space().cost(arch);
  return out;
}

OutputMatrix TabularEvaluator::output_vectors(const Architecture& arch, std::size_t batch_size,
                                              double) const {
  const auto& rec = table_->record(arch);
  if (!rec.outputs) throw OutputsUnavailable("benchmark stores no output vectors");
  if (batch_size > rec.outputs->rows) {
    throw OutputsUnavailable("benchmark stores only " + std::to_string(rec.outputs->rows) + " output rows");
  }
  OutputMatrix m(batch_size, rec.outputs->cols);
  std::copy_n(rec.outputs->data.begin(), batch_size * rec.outputs->cols, m.data.begin());
  return m;
}

nlohmann::json to_json(const SyntheticConfig& cfg) {
  nlohmann::json doc = {{"seed", cfg.seed},
                        {"classes", cfg.classes},
                        {"latent_dim", cfg.latent_dim},
                        {"max_batch", cfg.max_batch},
                        {"interaction_density", cfg.interaction_density},
                        {"linear_scale", cfg.linear_scale},
                        {"interaction_scale", cfg.interaction_scale},
                        {"quality_lo", cfg.quality_lo},
                        {"quality_hi", cfg.quality_hi},
                        {"quality_gain", cfg.quality_gain},
                        {"quality_signal", cfg.quality_signal},
                        {"structure_scale", cfg.structure_scale},
                        {"output_noise", cfg.output_noise}};
  return doc;
}

SyntheticConfig synthetic_config_from_json(const nlohmann::json& doc, const SyntheticConfig& defaults) {
  SyntheticConfig cfg = defaults;
  try {
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.classes = doc.value("classes", cfg.classes);
    cfg.latent_dim = doc.value("latent_dim", cfg.latent_dim);
    cfg.max_batch = doc.value("max_batch", cfg.max_batch);
    cfg.interaction_density = doc.value("interaction_density", cfg.interaction_density);
    cfg.linear_scale = doc.value("linear_scale", cfg.linear_scale);
    cfg.interaction_scale = doc.value("interaction_scale", cfg.interaction_scale);
    cfg.quality_lo = doc.value("quality_lo", cfg.quality_lo);
    cfg.quality_hi = doc.value("quality_hi", cfg.quality_hi);
    cfg.quality_gain = doc.value("quality_gain", cfg.quality_gain);
    cfg.quality_signal = doc.value("quality_signal", cfg.quality_signal);
    cfg.structure_scale = doc.value("structure_scale", cfg.structure_scale);
    cfg.output_noise = doc.value("output_noise", cfg.output_noise);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("malformed synthetic evaluator config: ") + e.what());
  }
  return cfg;
}

SyntheticSupernet::SyntheticSupernet(SearchSpace space, SyntheticConfig config)
    : space_(std::move(space)), config_(std::move(config)) {
  if (config_.classes < 2) throw InvalidConfig("synthetic supernet needs at least 2 classes");
  if (config_.latent_dim < 1) throw InvalidConfig("latent_dim must be positive");
  if (config_.max_batch < 1) throw InvalidConfig("max_batch must be positive");
  if (!(config_.quality_lo < config_.quality_hi) || config_.quality_lo < 0.0 || config_.quality_hi > 1.0) {
    throw InvalidConfig("quality range must satisfy 0 <= lo < hi <= 1");
  }
  const auto& archs = space_.architectures();
  const std::size_t n = archs.size();
  const std::size_t nodes = space_.node_count();

  if (!config_.anchor_accuracy.empty()) {
    if (config_.anchor_accuracy.size() != n) throw InvalidConfig("anchor accuracies do not cover the space");
    quality_.reserve(n);
    for (double a : config_.anchor_accuracy) quality_.push_back(a / 100.0);
  } else {
    Rng rng(derive_seed(config_.seed, stream_tag("quality")));
    std::vector<std::vector<double>> linear(nodes);
    for (std::size_t i = 0; i < nodes; ++i) {
      for (int o = 0; o < space_.arity(i); ++o) linear[i].push_back(config_.linear_scale * rng.normal());
    }
    struct Pair {
      std::size_t i, j;
      std::vector<double> table;  // arity(i) x arity(j)
    };
    std::vector<Pair> pairs;
    for (std::size_t i = 0; i < nodes; ++i) {
      for (std::size_t j = i + 1; j < nodes; ++j) {
        if (rng.uniform() >= config_.interaction_density) continue;
        Pair p{i, j, {}};
        for (int k = 0; k < space_.arity(i) * space_.arity(j); ++k) {
          p.table.push_back(config_.interaction_scale * rng.normal());
        }
        pairs.push_back(std::move(p));
      }
    }
    std::vector<double> score(n, 0.0);
    for (std::size_t a = 0; a < n; ++a) {
      const auto& ops = archs[a].ops;
      double s = 0.0;
      for (std::size_t i = 0; i < nodes; ++i) s += linear[i][ops[i]];
      for (const auto& p : pairs) s += p.table[ops[p.i] * space_.arity(p.j) + ops[p.j]];
      score[a] = s;
    }
    const double mean = std::accumulate(score.begin(), score.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double s : score) var += (s - mean) * (s - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    quality_.reserve(n);
    for (double s : score) {
      const double z = sd > 0.0 ? (s - mean) / sd : 0.0;
      quality_.push_back(config_.quality_lo + (config_.quality_hi - config_.quality_lo) * logistic(config_.quality_gain * z));
    }
  }

  const auto [lo, hi] = std::minmax_element(quality_.begin(), quality_.end());
  quality_norm_.reserve(n);
  for (double q : quality_) quality_norm_.push_back(*hi > *lo ? (q - *lo) / (*hi - *lo) : 0.5);

  std::size_t onehot_dim = 0;
  for (std::size_t i = 0; i < nodes; ++i) onehot_dim += space_.arity(i);
  const auto d = static_cast<std::size_t>(config_.latent_dim);
  const auto c = static_cast<std::size_t>(config_.classes);
  Rng proj_rng(derive_seed(config_.seed, stream_tag("projection")));
  projection_.resize(d * onehot_dim);
  const double proj_scale = 1.0 / std::sqrt(static_cast<double>(nodes));
  for (double& v : projection_) v = proj_scale * proj_rng.normal();

  Rng readout_rng(derive_seed(config_.seed, stream_tag("readout")));
  readout_.resize(config_.max_batch * c * d);
  const double readout_scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (double& v : readout_) v = readout_scale * readout_rng.normal();
  labels_.resize(config_.max_batch);
  for (int& y : labels_) y = static_cast<int>(readout_rng.below(c));

  std::vector<double> acc;
  acc.reserve(n);
  for (double q : quality_) acc.push_back(100.0 * q);
  truth_ = GroundTruth(std::move(acc));
}

EvalOutcome SyntheticSupernet::evaluate(const Architecture& arch, double progress, Rng& rng) const {
  const std::size_t index = space_.index_of(arch);
  EvalOutcome out;
  const double noise = config_.noise.sigma_acc * rng.normal();
  out.accuracy = clamp01(quality_[index] * config_.noise.ramp(progress) + noise);
  if (space_.has_cost_model()) out.flops = space_.cost(arch);
  return out;
}

double SyntheticSupernet::quality_coordinate(std::size_t index, double progress) const {
  return config_.quality_signal * config_.noise.ramp(progress) * quality_norm_[index];
}

double SyntheticSupernet::output_noise(double progress) const {
  return config_.output_noise * (1.0 - config_.noise.ramp(progress));
}

std::vector<double> SyntheticSupernet::latent(const Architecture& arch, double progress) const {
  const std::size_t index = space_.index_of(arch);
  const auto d = static_cast<std::size_t>(config_.latent_dim);
  const std::size_t onehot_dim = projection_.size() / d;
  std::vector<double> z(d + 1, 0.0);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < arch.ops.size(); ++i) {
    const std::size_t col = offset + static_cast<std::size_t>(arch.ops[i]);
    for (std::size_t k = 0; k < d; ++k) z[k] += config_.structure_scale * projection_[k * onehot_dim + col];
    offset += space_.arity(i);
  }
  z[d] = quality_coordinate(index, progress);
  return z;
}

OutputMatrix SyntheticSupernet::output_vectors(const Architecture& arch, std::size_t batch_size,
                                               double progress) const {
  if (batch_size == 0 || batch_size > config_.max_batch) {
    throw InvalidConfig("output batch size must lie in [1, " + std::to_string(config_.max_batch) + "]");
  }
  const std::size_t index = space_.index_of(arch);
  const auto z = latent(arch, progress);
  const auto d = static_cast<std::size_t>(config_.latent_dim);
  const auto c = static_cast<std::size_t>(config_.classes);
  const double eta = output_noise(progress);
  Rng noise_rng(derive_seed(config_.seed, stream_tag("output-noise") + index));

  OutputMatrix out(batch_size, c);
  for (std::size_t b = 0; b < batch_size; ++b) {
    auto row = out.row(b);
    for (std::size_t k = 0; k < c; ++k) {
      const double* w = &readout_[(b * c + k) * d];
      double logit = 0.0;
      for (std::size_t j = 0; j < d; ++j) logit += w[j] * z[j];
      if (static_cast<int>(k) == labels_[b]) logit += z[d];
      if (eta > 0.0) logit += eta * noise_rng.normal();
      row[k] = logit;
    }
    softmax_inplace(row);
  }
  return out;
}

TabularBenchmark synthesize_benchmark(const SearchSpace& space, const SyntheticConfig& config, double acc_lo,
                                      double acc_hi, const std::optional<Architecture>& optimum) {
  if (!(acc_lo < acc_hi)) throw InvalidConfig("synthetic benchmark needs acc_lo < acc_hi");
  const SyntheticSupernet net(space, config);
  const std::size_t n = space.cardinality();
  std::vector<double> q(n);
  for (std::size_t i = 0; i < n; ++i) q[i] = net.quality(i);
  const auto [lo, hi] = std::minmax_element(q.begin(), q.end());
  const double qlo = *lo, qhi = *hi;
  std::vector<BenchmarkRecord> records(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = qhi > qlo ? (q[i] - qlo) / (qhi - qlo) : 1.0;
    // Two decimals like published tables.
    records[i].accuracy = std::round((acc_lo + (acc_hi - acc_lo) * u) * 100.0) / 100.0;
    if (space.has_cost_model()) records[i].flops = space.cost(space.arch_at(i));
  }
  if (optimum) {
    const std::size_t target = space.index_of(*optimum);
    const std::size_t best = net.truth().index_at_rank(1);
    std::swap(records[target].accuracy, records[best].accuracy);
    records[target].accuracy = acc_hi;
    for (std::size_t i = 0; i < n; ++i) {
      if (i != target && records[i].accuracy >= acc_hi) records[i].accuracy = acc_hi - 0.01;
    }
  }
  return TabularBenchmark(space, std::move(records));
}

}  // namespace treenas
