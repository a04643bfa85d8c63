#include "treenas/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "treenas/error.hpp"

namespace treenas {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kStrategyNames[] = {
    "uniform",           "independent",         "boltzmann",    "mcts_default",           "mcts_default_reg",
    "mcts_random",       "mcts_acc_partition",  "mcts_learned", "mcts_learned_zero_cost",
};

std::string resolve(const std::string& path, const fs::path& base_dir) {
  if (path.empty() || base_dir.empty()) return path;
  const fs::path p(path);
  if (p.is_absolute() || fs::exists(p)) return path;
  const fs::path joined = base_dir / p;
  return fs::exists(joined) ? joined.string() : path;
}

bool is_builtin_space(const std::string& id) { return id == "pooling" || id == "bench_macro"; }

void check_keys(const nlohmann::json& doc, std::initializer_list<std::string_view> allowed, std::string_view where) {
  for (const auto& [key, value] : doc.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw InvalidConfig("unknown key '" + key + "' in " + std::string(where));
    }
  }
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  }
  return s;
}

nlohmann::json arch_json(const Architecture& a) { return a.to_string(); }

}  // namespace

Strategy parse_strategy(std::string_view s) {
  for (std::size_t i = 0; i < std::size(kStrategyNames); ++i) {
    if (kStrategyNames[i] == s) return static_cast<Strategy>(i);
  }
  std::string names;
  for (auto n : kStrategyNames) names += (names.empty() ? "" : "|") + std::string(n);
  throw InvalidConfig("unknown strategy '" + std::string(s) + "' (expected " + names + ")");
}

std::string_view to_string(Strategy s) { return kStrategyNames[static_cast<std::size_t>(s)]; }

bool is_tree_strategy(Strategy s) {
  return s != Strategy::uniform && s != Strategy::independent && s != Strategy::boltzmann;
}

bool is_learned(Strategy s) { return s == Strategy::mcts_learned || s == Strategy::mcts_learned_zero_cost; }

void RunConfig::validate() const {
  for (double f : {pretrain_frac, warmup_frac, search_frac}) {
    if (!(f >= 0.0)) throw InvalidConfig("phase fractions must be >= 0");
  }
  if (pretrain_frac + warmup_frac + search_frac > 1.0 + 1e-9) throw InvalidConfig("phase fractions sum above 1");
  const bool explicit_phases = pretrain_steps || warmup_steps || search_steps;
  if (!explicit_phases && total_steps == 0) throw InvalidConfig("total steps must be positive");
  if (!(beta >= 0.0 && beta < 1.0)) throw InvalidConfig("beta must lie in [0, 1)");
  if (!(beta_reg >= 0.0 && beta_reg < 1.0)) throw InvalidConfig("beta_reg must lie in [0, 1)");
  if (!(lambda >= 0.0)) throw InvalidConfig("lambda must be >= 0");
  if (!(sigma_acc >= 0.0)) throw InvalidConfig("sigma_acc must be >= 0");
  if (final_k == 0) throw InvalidConfig("final k must be >= 1");
  if (output_batch == 0) throw InvalidConfig("output batch must be >= 1");
  if (budget && (!(budget->budget_mflops > 0.0) || !(budget->lower_frac > 0.0 && budget->lower_frac <= 1.0))) {
    throw InvalidConfig("budget filter needs mflops > 0 and 0 < lower_frac <= 1");
  }
  if (evaluator.kind == EvaluatorSpec::Kind::tabular && evaluator.benchmark.empty()) {
    throw InvalidConfig("tabular evaluator needs a benchmark path");
  }
}

Phases phases_of(const RunConfig& config) {
  Phases p;
  const auto total = static_cast<double>(config.total_steps);
  const auto at = [&](double frac) { return static_cast<std::size_t>(std::llround(total * frac)); };
  p.pretrain = at(config.pretrain_frac);
  p.warmup = at(config.warmup_frac);
  const std::size_t end = at(config.pretrain_frac + config.warmup_frac + config.search_frac);
  p.search = end > p.pretrain + p.warmup ? end - p.pretrain - p.warmup : 0;
  if (config.pretrain_steps) p.pretrain = *config.pretrain_steps;
  if (config.warmup_steps) p.warmup = *config.warmup_steps;
  if (config.search_steps) p.search = *config.search_steps;
  return p;
}

RunConfig config_from_json(const nlohmann::json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw InvalidConfig("run config must be a JSON object");
  RunConfig c;
  try {
    check_keys(doc,
               {"name", "space", "evaluator", "strategy", "steps", "fractions", "phase_steps", "distance",
                "temperature", "beta", "lambda", "beta_reg", "sigma_acc", "t_ramp", "reward", "final", "budget",
                "seed", "seeds", "log_steps"},
               "run config");
    c.name = doc.value("name", c.name);
    c.space = doc.value("space", c.space);
    if (!is_builtin_space(c.space)) c.space = resolve(c.space, base_dir);
    if (doc.contains("strategy")) c.strategy = parse_strategy(doc.at("strategy").get<std::string>());

    if (doc.contains("evaluator")) {
      const auto& ev = doc.at("evaluator");
      const std::string kind = ev.value("kind", std::string("synthetic"));
      if (kind == "tabular") {
        check_keys(ev, {"kind", "benchmark"}, "evaluator");
        c.evaluator.kind = EvaluatorSpec::Kind::tabular;
        c.evaluator.benchmark = resolve(ev.at("benchmark").get<std::string>(), base_dir);
      } else if (kind == "synthetic") {
        c.evaluator.kind = EvaluatorSpec::Kind::synthetic;
        nlohmann::json params = ev;
        params.erase("kind");
        if (params.contains("anchor_benchmark")) {
          c.evaluator.benchmark = resolve(params.at("anchor_benchmark").get<std::string>(), base_dir);
          params.erase("anchor_benchmark");
        }
        check_keys(params,
                   {"seed", "classes", "latent_dim", "max_batch", "interaction_density", "linear_scale",
                    "interaction_scale", "quality_lo", "quality_hi", "quality_gain", "quality_signal", "structure_scale",
                    "output_noise"},
                   "synthetic evaluator");
        c.evaluator.synthetic_seed_set = params.contains("seed");
        c.evaluator.synthetic = synthetic_config_from_json(params);
      } else {
        throw InvalidConfig("evaluator kind must be tabular|synthetic, got '" + kind + "'");
      }
    }

    c.total_steps = doc.value("steps", c.total_steps);
    if (doc.contains("fractions")) {
      const auto& f = doc.at("fractions");
      check_keys(f, {"pretrain", "warmup", "search"}, "fractions");
      c.pretrain_frac = f.value("pretrain", c.pretrain_frac);
      c.warmup_frac = f.value("warmup", c.warmup_frac);
      c.search_frac = f.value("search", c.search_frac);
    }
    if (doc.contains("phase_steps")) {
      const auto& p = doc.at("phase_steps");
      check_keys(p, {"pretrain", "warmup", "search"}, "phase_steps");
      if (p.contains("pretrain")) c.pretrain_steps = p.at("pretrain").get<std::size_t>();
      if (p.contains("warmup")) c.warmup_steps = p.at("warmup").get<std::size_t>();
      if (p.contains("search")) c.search_steps = p.at("search").get<std::size_t>();
    }
    if (doc.contains("distance")) {
      const auto& d = doc.at("distance");
      check_keys(d, {"measure", "linkage", "batch", "encoding", "weighted"}, "distance");
      if (d.contains("measure")) c.measure = parse_measure(d.at("measure").get<std::string>());
      if (d.contains("linkage")) c.linkage = parse_linkage(d.at("linkage").get<std::string>());
      c.output_batch = d.value("batch", c.output_batch);
      if (d.contains("encoding")) c.encoding = parse_encoding_kind(d.at("encoding").get<std::string>());
      c.encoding_weighted = d.value("weighted", c.encoding_weighted);
    }
    if (doc.contains("temperature")) c.temperature = TemperatureSchedule::from_json(doc.at("temperature"));
    c.beta = doc.value("beta", c.beta);
    c.lambda = doc.value("lambda", c.lambda);
    c.beta_reg = doc.value("beta_reg", c.beta_reg);
    c.sigma_acc = doc.value("sigma_acc", c.sigma_acc);
    c.t_ramp = doc.value("t_ramp", c.t_ramp);
    if (doc.contains("reward")) c.reward = RewardShaper::from_json(doc.at("reward"));
    if (doc.contains("final")) {
      const auto& f = doc.at("final");
      check_keys(f, {"k", "greedy", "eval_batches"}, "final");
      c.final_k = f.value("k", c.final_k);
      c.final_greedy = f.value("greedy", c.final_greedy);
      c.final_eval_batches = f.value("eval_batches", c.final_eval_batches);
    }
    if (doc.contains("budget") && !doc.at("budget").is_null()) {
      const auto& b = doc.at("budget");
      check_keys(b, {"mflops", "lower_frac", "max_attempts"}, "budget");
      BudgetFilter f;
      f.budget_mflops = b.at("mflops").get<double>();
      f.lower_frac = b.value("lower_frac", f.lower_frac);
      f.max_attempts = b.value("max_attempts", f.max_attempts);
      c.budget = f;
    }
    c.seed = doc.value("seed", c.seed);
    if (doc.contains("seeds")) c.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
    c.log_steps = doc.value("log_steps", c.log_steps);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("malformed run config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json ev;
  if (c.evaluator.kind == EvaluatorSpec::Kind::tabular) {
    ev = {{"kind", "tabular"}, {"benchmark", c.evaluator.benchmark}};
  } else {
    ev = to_json(c.evaluator.synthetic);
    ev["kind"] = "synthetic";
    if (!c.evaluator.synthetic_seed_set) ev.erase("seed");
    if (!c.evaluator.benchmark.empty()) ev["anchor_benchmark"] = c.evaluator.benchmark;
  }
  nlohmann::json doc = {
      {"name", c.label()},
      {"space", c.space},
      {"evaluator", ev},
      {"strategy", to_string(c.strategy)},
      {"steps", c.total_steps},
      {"fractions", {{"pretrain", c.pretrain_frac}, {"warmup", c.warmup_frac}, {"search", c.search_frac}}},
      {"distance",
       {{"measure", to_string(c.measure)},
        {"linkage", to_string(c.linkage)},
        {"batch", c.output_batch},
        {"encoding", to_string(c.encoding)},
        {"weighted", c.encoding_weighted}}},
      {"temperature", c.temperature.to_json()},
      {"beta", c.beta},
      {"lambda", c.lambda},
      {"beta_reg", c.beta_reg},
      {"sigma_acc", c.sigma_acc},
      {"t_ramp", c.t_ramp},
      {"reward", c.reward.to_json()},
      {"final", {{"k", c.final_k}, {"greedy", c.final_greedy}, {"eval_batches", c.final_eval_batches}}},
      {"seed", c.seed},
      {"log_steps", c.log_steps},
  };
  if (c.pretrain_steps || c.warmup_steps || c.search_steps) {
    const Phases p = phases_of(c);
    doc["phase_steps"] = {{"pretrain", p.pretrain}, {"warmup", p.warmup}, {"search", p.search}};
  }
  if (c.budget) {
    doc["budget"] = {{"mflops", c.budget->budget_mflops},
                     {"lower_frac", c.budget->lower_frac},
                     {"max_attempts", c.budget->max_attempts}};
  }
  if (!c.seeds.empty()) doc["seeds"] = c.seeds;
  return doc;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot open config '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig("config '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(doc, fs::path(path).parent_path());
}

std::shared_ptr<const Evaluator> make_evaluator(const RunConfig& config, std::uint64_t seed) {
  const SearchSpace space = load_space(config.space);
  const NoiseModel noise{config.sigma_acc, Ramp{config.t_ramp}};
  if (config.evaluator.kind == EvaluatorSpec::Kind::tabular) {
    auto table = std::make_shared<const TabularBenchmark>(TabularBenchmark::load(config.evaluator.benchmark, space));
    return std::make_shared<TabularEvaluator>(std::move(table), noise);
  }
  SyntheticConfig cfg = config.evaluator.synthetic;
  cfg.noise = noise;
  if (!config.evaluator.synthetic_seed_set) cfg.seed = derive_seed(seed, stream_tag("evaluator"));
  if (!config.evaluator.benchmark.empty()) {
    cfg.anchor_accuracy = TabularBenchmark::load(config.evaluator.benchmark, space).truth().accuracies();
  }
  return std::make_shared<SyntheticSupernet>(space, std::move(cfg));
}

SearchTree build_tree(const RunConfig& config, const Evaluator& evaluator, std::uint64_t seed, double progress,
                      std::string* source) {
  const SearchSpace& space = evaluator.space();
  auto note = [&](std::string s) {
    if (source) *source = std::move(s);
  };
  const auto encoding_label = [&] {
    return "encoding:" + std::string(to_string(config.encoding)) + (config.encoding_weighted ? "_weighted" : "");
  };
  switch (config.strategy) {
    case Strategy::mcts_default:
    case Strategy::mcts_default_reg:
      note("default");
      return default_tree(space);
    case Strategy::mcts_random:
      note("random");
      return random_tree(space, derive_seed(seed, stream_tag("random-tree")));
    case Strategy::mcts_acc_partition:
      note("accuracy_partition");
      return accuracy_partition_tree(evaluator.truth().accuracies());
    case Strategy::mcts_learned: {
      if (evaluator.has_outputs()) {
        try {
          const auto& archs = space.architectures();
          std::vector<OutputMatrix> outputs;
          outputs.reserve(archs.size());
          for (const auto& a : archs) outputs.push_back(evaluator.output_vectors(a, config.output_batch, progress));
          const DistanceMatrix d = build_matrix(outputs, config.measure);
          outputs.clear();
          outputs.shrink_to_fit();
          note("outputs:" + std::string(to_string(config.measure)));
          return agglomerative(d, config.linkage);
        } catch (const OutputsUnavailable&) {
        }
      }
      note(encoding_label());
      return agglomerative(encoding_matrix(space, config.encoding, config.encoding_weighted), config.linkage);
    }
    case Strategy::mcts_learned_zero_cost:
      note(encoding_label());
      return agglomerative(encoding_matrix(space, config.encoding, config.encoding_weighted), config.linkage);
    default:
      throw InvalidConfig("strategy '" + std::string(to_string(config.strategy)) + "' does not use a tree");
  }
}

std::string record_file_name(const RunConfig& config, std::uint64_t seed) {
  return sanitize(config.label()) + "_seed" + std::to_string(seed) + ".json";
}

RunRecord run(const RunConfig& config, std::uint64_t seed, const RunOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.config = config_to_json(config);
  rec.seed = seed;
  rec.strategy = config.label();
  rec.space = config.space;
  const std::string stem = sanitize(config.label()) + "_seed" + std::to_string(seed);
  if (options.out_dir) fs::create_directories(*options.out_dir);

  try {
    config.validate();
    const Phases phases = phases_of(config);
    rec.phases = phases;
    const auto evaluator = make_evaluator(config, seed);
    const SearchSpace& space = evaluator->space();
    rec.space = space.id();
    const GroundTruth& truth = evaluator->truth();

    Rng master(seed);
    Rng eval_rng = master.fork("evaluate");
    Rng sample_rng = master.fork("sample");
    Rng final_rng = master.fork("final");
    RewardShaper shaper = config.reward;
    shaper.reset();

    const std::size_t total = phases.total();
    const auto progress = [&](std::size_t step) {
      return total ? static_cast<double>(step) / static_cast<double>(total) : 1.0;
    };
    std::optional<std::size_t> best_index;
    const auto observe = [&](std::size_t step, const Draw& draw) {
      const EvalOutcome out = evaluator->evaluate(draw.arch, progress(step), eval_rng);
      ++rec.evaluations;
      if (step >= phases.pretrain + phases.warmup) ++rec.search_evaluations;
      rec.rejections += draw.rejections;
      const std::size_t idx = space.index_of(draw.arch);
      if (!best_index || truth.rank(idx) < truth.rank(*best_index)) best_index = idx;
      if (config.log_steps) {
        rec.log.push_back({step, draw.arch, out.accuracy, truth.accuracy(*best_index), truth.rank(*best_index)});
      }
      return out.accuracy;
    };

    TemperatureSchedule schedule = config.temperature;
    std::optional<Sampler> sampler;
    if (is_tree_strategy(config.strategy)) {
      const Sampler pretrain = Sampler::uniform(space);
      for (std::size_t step = 0; step < phases.pretrain; ++step) {
        observe(step, pretrain.sample(schedule.t_start, sample_rng, config.budget));
      }
      SearchTree tree = build_tree(config, *evaluator, seed, progress(phases.pretrain), &rec.tree_source);
      if (options.out_dir) {
        rec.tree_file = stem + ".nwk";
        std::ofstream(*options.out_dir / rec.tree_file) << export_newick(tree) << '\n';
      }
      MctsParams params;
      params.lambda = config.lambda;
      params.beta = config.beta;
      params.regularize = config.strategy == Strategy::mcts_default_reg;
      params.beta_reg = config.beta_reg;
      params.warmup_until = phases.warmup;
      sampler = Sampler::mcts(space, std::move(tree), params);
      // The annealing clock starts once warm-up ends.
      schedule.horizon = phases.search;
      for (std::size_t s = 0; s < phases.warmup + phases.search; ++s) {
        const double temp = schedule.at(s >= phases.warmup ? s - phases.warmup : 0);
        const Draw draw = sampler->sample(temp, sample_rng, config.budget);
        const double acc = observe(phases.pretrain + s, draw);
        sampler->update(draw.arch, shaper(acc));
      }
    } else {
      switch (config.strategy) {
        case Strategy::uniform: sampler = Sampler::uniform(space); break;
        case Strategy::independent: sampler = Sampler::independent(space, config.beta); break;
        default: sampler = Sampler::boltzmann(space, config.beta); break;
      }
      schedule.horizon = total;
      for (std::size_t step = 0; step < total; ++step) {
        const Draw draw = sampler->sample(schedule.at(step), sample_rng, config.budget);
        const double acc = observe(step, draw);
        sampler->update(draw.arch, shaper(acc));
      }
    }

    auto choices = select_final(*sampler, *evaluator, config.final_k, schedule.t_end, config.final_greedy,
                                config.final_eval_batches, final_rng);
    if (config.budget) {
      std::erase_if(choices, [&](const FinalChoice& c) {
        return !within_budget(c.arch, space, config.budget->budget_mflops, config.budget->lower_frac);
      });
      if (choices.empty()) throw BudgetExhausted("no final candidate lies within the FLOPs budget");
    }
    for (auto& c : choices) {
      const std::size_t idx = space.index_of(c.arch);
      rec.final.push_back({std::move(c.arch), c.validation_accuracy, truth.accuracy(idx), truth.rank(idx)});
    }
    if (options.out_dir && sampler->kind() == SamplerKind::mcts) {
      std::ofstream(*options.out_dir / (stem + ".stats.json")) << export_stats(sampler->tree()).dump() << '\n';
    }
  } catch (const std::exception& e) {
    rec.error = e.what();
  }
  rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (options.out_dir) write_record(rec, *options.out_dir / (stem + ".json"));
  if (!options.quiet) {
    if (rec.error) {
      std::cerr << rec.strategy << " seed " << seed << ": FAILED: " << *rec.error << '\n';
    } else {
      const auto& f = rec.chosen();
      std::cerr << rec.strategy << " seed " << seed << ": " << f.arch.to_string() << " acc " << fixed(f.true_accuracy, 2)
                << " rank " << f.rank << " (" << fixed(rec.wall_time_s, 2) << " s)\n";
    }
  }
  return rec;
}

nlohmann::json record_to_json(const RunRecord& r, bool include_wall_time) {
  auto log = nlohmann::json::array();
  for (const auto& s : r.log) {
    log.push_back({{"step", s.step},
                   {"arch", arch_json(s.arch)},
                   {"reward", s.reward},
                   {"best_acc", s.best_acc},
                   {"best_rank", s.best_rank}});
  }
  auto final = nlohmann::json::array();
  for (const auto& f : r.final) {
    final.push_back({{"arch", arch_json(f.arch)},
                     {"val_acc", f.validation_accuracy},
                     {"acc", f.true_accuracy},
                     {"rank", f.rank}});
  }
  nlohmann::json doc = {
      {"seed", r.seed},
      {"strategy", r.strategy},
      {"space", r.space},
      {"config", r.config},
      {"phases", {{"pretrain", r.phases.pretrain}, {"warmup", r.phases.warmup}, {"search", r.phases.search}}},
      {"evaluations", {{"total", r.evaluations}, {"search", r.search_evaluations}, {"rejections", r.rejections}}},
      {"tree", {{"file", r.tree_file}, {"source", r.tree_source}}},
      {"final", std::move(final)},
      {"log", std::move(log)},
      {"error", r.error ? nlohmann::json(*r.error) : nlohmann::json(nullptr)},
  };
  if (include_wall_time) doc["wall_time_s"] = r.wall_time_s;
  return doc;
}

RunRecord record_from_json(const nlohmann::json& doc) {
  RunRecord r;
  try {
    r.seed = doc.at("seed").get<std::uint64_t>();
    r.strategy = doc.at("strategy").get<std::string>();
    r.space = doc.at("space").get<std::string>();
    r.config = doc.at("config");
    const auto& p = doc.at("phases");
    r.phases = {p.at("pretrain").get<std::size_t>(), p.at("warmup").get<std::size_t>(), p.at("search").get<std::size_t>()};
    const auto& e = doc.at("evaluations");
    r.evaluations = e.at("total").get<std::size_t>();
    r.search_evaluations = e.at("search").get<std::size_t>();
    r.rejections = e.at("rejections").get<std::size_t>();
    r.tree_file = doc.at("tree").value("file", std::string{});
    r.tree_source = doc.at("tree").value("source", std::string{});
    for (const auto& f : doc.at("final")) {
      r.final.push_back({Architecture::parse(f.at("arch").get<std::string>()), f.at("val_acc").get<double>(),
                         f.at("acc").get<double>(), f.at("rank").get<std::size_t>()});
    }
    for (const auto& s : doc.at("log")) {
      r.log.push_back({s.at("step").get<std::size_t>(), Architecture::parse(s.at("arch").get<std::string>()),
                       s.at("reward").get<double>(), s.at("best_acc").get<double>(), s.at("best_rank").get<std::size_t>()});
    }
    if (!doc.at("error").is_null()) r.error = doc.at("error").get<std::string>();
    r.wall_time_s = doc.value("wall_time_s", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed run record: ") + e.what());
  }
  return r;
}

RunRecord load_record(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open run record '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("run record '" + path + "' is not valid JSON: " + e.what());
  }
  return record_from_json(doc);
}

void write_record(const RunRecord& record, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write run record '" + path.string() + "'");
  out << record_to_json(record).dump(1) << '\n';
}

SummaryRow summarize(const std::string& strategy, const std::vector<RunRecord>& records) {
  SummaryRow row;
  row.strategy = strategy;
  row.runs = records.size();
  std::vector<const FinalEntry*> ok;
  for (const auto& r : records) {
    if (r.ok()) {
      ok.push_back(&r.chosen());
    } else {
      ++row.failures;
    }
  }
  if (ok.empty()) return row;
  const auto n = static_cast<double>(ok.size());
  const FinalEntry* best = ok.front();
  double sum = 0.0, rank_sum = 0.0;
  for (const auto* f : ok) {
    sum += f->true_accuracy;
    rank_sum += static_cast<double>(f->rank);
    if (f->rank < best->rank) best = f;
  }
  row.best_acc = best->true_accuracy;
  row.best_rank = best->rank;
  row.best_arch = best->arch.to_string();
  row.mean_acc = sum / n;
  row.mean_rank = rank_sum / n;
  if (ok.size() > 1) {
    double ss = 0.0;
    for (const auto* f : ok) ss += (f->true_accuracy - row.mean_acc) * (f->true_accuracy - row.mean_acc);
    row.std_acc = std::sqrt(ss / (n - 1.0));
  }
  return row;
}

Comparison compare(const std::vector<RunConfig>& configs, const std::vector<std::uint64_t>& seeds,
                   const RunOptions& options) {
  if (configs.empty()) throw InvalidConfig("compare needs at least one config");
  for (const auto& c : configs) {
    if (c.space != configs.front().space || c.evaluator.kind != configs.front().evaluator.kind ||
        c.evaluator.benchmark != configs.front().evaluator.benchmark) {
      throw InvalidConfig("compared configs must share the space and evaluator ('" + c.label() + "' differs)");
    }
  }
  Comparison out;
  for (const auto& c : configs) {
    std::vector<std::uint64_t> run_seeds = seeds;
    if (run_seeds.empty()) run_seeds = c.seeds.empty() ? std::vector<std::uint64_t>{c.seed} : c.seeds;
    std::vector<RunRecord> records;
    for (std::uint64_t s : run_seeds) records.push_back(run(c, s, options));
    out.rows.push_back(summarize(c.label(), records));
    out.records.push_back(std::move(records));
  }
  return out;
}

std::string comparison_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream os;
  os << "strategy,best_acc,mean_acc,std_acc,best_rank,mean_rank\n";
  for (const auto& r : rows) {
    os << r.strategy << ',' << fixed(r.best_acc, 4) << ',' << fixed(r.mean_acc, 4) << ',' << fixed(r.std_acc, 4)
       << ',' << r.best_rank << ',' << fixed(r.mean_rank, 2) << '\n';
  }
  return os.str();
}

std::string comparison_table(const std::vector<SummaryRow>& rows) {
  std::vector<std::vector<std::string>> cells{
      {"Strategy", "Arch.", "Best Acc.", "Avg. Acc.", "Best Rank", "Avg. Rank", "Runs", "Failed"}};
  for (const auto& r : rows) {
    cells.push_back({r.strategy, r.best_arch.empty() ? "-" : r.best_arch, fixed(r.best_acc, 2),
                     fixed(r.mean_acc, 2) + " ± " + fixed(r.std_acc, 2), std::to_string(r.best_rank),
                     fixed(r.mean_rank, 1), std::to_string(r.runs), std::to_string(r.failures)});
  }
  // Width in code points; "±" is two bytes.
  const auto width = [](const std::string& s) {
    return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) { return (c & 0xC0) != 0x80; }));
  };
  std::vector<std::size_t> w(cells.front().size(), 0);
  for (const auto& row : cells) {
    for (std::size_t i = 0; i < row.size(); ++i) w[i] = std::max(w[i], width(row[i]));
  }
  std::ostringstream os;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t i = 0; i < cells[r].size(); ++i) {
      os << (i ? "  " : "") << cells[r][i] << std::string(w[i] - width(cells[r][i]), ' ');
    }
    os << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t x : w) total += x + 2;
      os << std::string(total - 2, '-') << '\n';
    }
  }
  return os.str();
}

std::vector<SweepPoint> sweep_pretrain(const RunConfig& config, const std::vector<std::size_t>& grid,
                                       const std::vector<std::uint64_t>& seeds, const RunOptions& options) {
  if (grid.empty()) throw InvalidConfig("pretrain sweep needs a non-empty grid");
  if (!is_learned(config.strategy)) throw InvalidConfig("pretrain sweep needs a learned-tree strategy");
  const Phases base = phases_of(config);
  std::vector<std::uint64_t> run_seeds = seeds;
  if (run_seeds.empty()) run_seeds = config.seeds.empty() ? std::vector<std::uint64_t>{config.seed} : config.seeds;
  std::vector<SweepPoint> out;
  for (std::size_t g : grid) {
    RunConfig c = config;
    c.pretrain_steps = g;
    c.warmup_steps = base.warmup;
    c.search_steps = base.search;
    c.name = config.label() + "_pre" + std::to_string(g);
    std::vector<RunRecord> records;
    for (std::uint64_t s : run_seeds) records.push_back(run(c, s, options));
    out.push_back({g, summarize(config.label(), records)});
  }
  return out;
}

std::string sweep_csv(const std::vector<SweepPoint>& points) {
  std::ostringstream os;
  os << "pretrain_steps,strategy,best_acc,mean_acc,std_acc,best_rank,mean_rank\n";
  for (const auto& p : points) {
    const auto& r = p.summary;
    os << p.pretrain_steps << ',' << r.strategy << ',' << fixed(r.best_acc, 4) << ',' << fixed(r.mean_acc, 4) << ','
       << fixed(r.std_acc, 4) << ',' << r.best_rank << ',' << fixed(r.mean_rank, 2) << '\n';
  }
  return os.str();
}

std::string log_csv(const RunRecord& record) {
  std::ostringstream os;
  os << "step,arch,reward,best_acc,best_rank\n";
  for (const auto& s : record.log) {
    std::string arch = s.arch.to_string();
    if (arch.find(',') != std::string::npos) arch = '"' + arch + '"';
    os << s.step << ',' << arch << ',' << fixed(s.reward, 6) << ',' << fixed(s.best_acc, 4) << ','
       << s.best_rank << '\n';
  }
  return os.str();
}

}  // namespace treenas
