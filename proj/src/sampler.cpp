#include "treenas/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "treenas/error.hpp"

namespace treenas {

namespace {

std::vector<double> softmax(const std::vector<double>& values, double temperature) {
  std::vector<double> p(values.size(), 0.0);
  if (values.empty()) return p;
  const auto best = std::max_element(values.begin(), values.end());
  if (temperature <= 0.0) {
    p[static_cast<std::size_t>(best - values.begin())] = 1.0;
    return p;
  }
  const double top = *best;
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    p[i] = std::exp((values[i] - top) / temperature);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

std::size_t draw_categorical(const std::vector<double>& p, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    acc += p[i];
    last = i;
    if (u < acc) return i;
  }
  return last;
}

double ema(double current, double beta, double value) { return beta * current + (1.0 - beta) * value; }

}  // namespace

double TemperatureSchedule::at(std::size_t step) const {
  if (kind == Kind::constant || horizon == 0) return kind == Kind::constant ? t_start : t_end;
  if (step >= horizon) return t_end;
  const double frac = static_cast<double>(step) / static_cast<double>(horizon);
  return t_start + (t_end - t_start) * frac;
}

nlohmann::json TemperatureSchedule::to_json() const {
  return {{"kind", kind == Kind::constant ? "constant" : "linear"}, {"start", t_start}, {"end", t_end}};
}

TemperatureSchedule TemperatureSchedule::from_json(const nlohmann::json& doc) {
  TemperatureSchedule s;
  if (doc.is_number()) {
    s.kind = Kind::constant;
    s.t_start = s.t_end = doc.get<double>();
  } else {
    const std::string kind = doc.value("kind", std::string("linear"));
    if (kind == "constant") {
      s.kind = Kind::constant;
    } else if (kind == "linear") {
      s.kind = Kind::linear;
    } else {
      throw InvalidConfig("temperature kind must be constant|linear, got '" + kind + "'");
    }
    s.t_start = doc.value("start", s.t_start);
    s.t_end = doc.value("end", s.kind == Kind::constant ? s.t_start : s.t_end);
  }
  if (!(s.t_start > 0.0) || !(s.t_end > 0.0)) throw InvalidConfig("temperatures must be positive");
  return s;
}

double RewardShaper::operator()(double accuracy) {
  const double acc = clamp01(accuracy);
  const double loss = -std::log(std::max(acc, 1e-6));
  const double raw = metric == Metric::accuracy ? acc : loss;
  double reward;
  if (mode == Mode::absolute) {
    reward = metric == Metric::accuracy ? acc : 1.0 / (1.0 + loss);
  } else {
    const double base = baseline_.value_or(raw);
    reward = metric == Metric::accuracy ? 0.5 + acc - base : 0.5 * base / std::max(loss, 1e-12);
  }
  baseline_ = baseline_ ? ema(*baseline_, baseline_beta, raw) : raw;
  return clamp01(reward);
}

nlohmann::json RewardShaper::to_json() const {
  return {{"metric", metric == Metric::accuracy ? "accuracy" : "loss"},
          {"mode", mode == Mode::absolute ? "absolute" : "relative"}};
}

RewardShaper RewardShaper::from_json(const nlohmann::json& doc) {
  RewardShaper r;
  const std::string metric = doc.value("metric", std::string("accuracy"));
  const std::string mode = doc.value("mode", std::string("absolute"));
  if (metric == "accuracy") {
    r.metric = Metric::accuracy;
  } else if (metric == "loss") {
    r.metric = Metric::loss;
  } else {
    throw InvalidConfig("reward metric must be accuracy|loss, got '" + metric + "'");
  }
  if (mode == "absolute") {
    r.mode = Mode::absolute;
  } else if (mode == "relative") {
    r.mode = Mode::relative;
  } else {
    throw InvalidConfig("reward mode must be absolute|relative, got '" + mode + "'");
  }
  return r;
}

std::string_view to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::uniform: return "uniform";
    case SamplerKind::independent: return "independent";
    case SamplerKind::boltzmann: return "boltzmann";
    case SamplerKind::mcts: return "mcts";
  }
  return "?";
}

double uct_score(double reward, std::uint64_t visits, std::uint64_t parent_visits, double lambda) {
  if (lambda == 0.0) return reward;
  if (visits == 0) return kUnvisitedScore;
  const double parent = static_cast<double>(std::max<std::uint64_t>(parent_visits, 1));
  return reward + lambda * std::sqrt(std::log(parent) / static_cast<double>(visits));
}

std::vector<double> node_probabilities(const SearchTree& tree, int node, double temperature, double lambda) {
  const auto& nd = tree.node(node);
  const auto& children = nd.children;
  std::vector<double> scores(children.size());
  std::size_t unvisited = 0;
  for (std::size_t c = 0; c < children.size(); ++c) {
    const auto& ch = tree.node(children[c]);
    scores[c] = uct_score(ch.reward, ch.visits, nd.visits, lambda);
    if (std::isinf(scores[c])) ++unvisited;
  }
  if (unvisited > 0) {
    std::vector<double> p(children.size(), 0.0);
    for (std::size_t c = 0; c < children.size(); ++c) {
      if (std::isinf(scores[c])) p[c] = 1.0 / static_cast<double>(unvisited);
    }
    return p;
  }
  return softmax(scores, temperature);
}

Sampler::Sampler(SamplerKind kind, const SearchSpace& space) : kind_(kind), space_(space) {
  space_.cardinality();  // enumerable spaces only
}

Sampler Sampler::uniform(const SearchSpace& space) { return Sampler(SamplerKind::uniform, space); }

Sampler Sampler::independent(const SearchSpace& space, double beta, double prior) {
  Sampler s(SamplerKind::independent, space);
  s.beta_ = beta;
  for (std::size_t i = 0; i < space.node_count(); ++i) {
    s.node_eps_.emplace_back(static_cast<std::size_t>(space.arity(i)), prior);
  }
  return s;
}

Sampler Sampler::boltzmann(const SearchSpace& space, double beta, double prior) {
  Sampler s(SamplerKind::boltzmann, space);
  s.beta_ = beta;
  s.arch_eps_.assign(space.cardinality(), prior);
  return s;
}

Sampler Sampler::mcts(const SearchSpace& space, SearchTree tree, MctsParams params) {
  tree.validate(space.cardinality());
  Sampler s(SamplerKind::mcts, space);
  s.beta_ = params.beta;
  s.tree_ = std::move(tree);
  s.params_ = params;
  return s;
}

std::vector<double> Sampler::independent_marginal(std::size_t node, double temperature) const {
  return softmax(node_eps_[node], temperature);
}

std::vector<double> Sampler::boltzmann_weights(double temperature) const { return softmax(arch_eps_, temperature); }

Architecture Sampler::sample_impl(double temperature, Rng& rng, double lambda, bool allow_warmup) const {
  switch (kind_) {
    case SamplerKind::uniform:
      return space_.arch_at(rng.below(space_.cardinality()));
    case SamplerKind::independent: {
      // On constrained spaces, draw from the product renormalized over the
      // valid set: the limit of rejection sampling, without its stalls.
      if (space_.constrained()) return space_.arch_at(draw_categorical(distribution(temperature), rng));
      Architecture a;
      for (std::size_t i = 0; i < space_.node_count(); ++i) {
        a.ops.push_back(static_cast<int>(draw_categorical(independent_marginal(i, temperature), rng)));
      }
      return a;
    }
    case SamplerKind::boltzmann:
      return space_.arch_at(draw_categorical(boltzmann_weights(temperature), rng));
    case SamplerKind::mcts: {
      const bool uniform_siblings = allow_warmup && warming_up();
      int node = tree_.root();
      while (!tree_.node(node).is_leaf()) {
        const auto& children = tree_.node(node).children;
        if (uniform_siblings) {
          node = children[rng.below(children.size())];
        } else {
          node = children[draw_categorical(node_probabilities(tree_, node, temperature, lambda), rng)];
        }
      }
      return space_.arch_at(static_cast<std::size_t>(tree_.node(node).arch));
    }
  }
  throw Error("unknown sampler kind");
}

Architecture Sampler::sample(double temperature, Rng& rng) const {
  return sample_impl(temperature, rng, params_.lambda, true);
}

Draw Sampler::sample(double temperature, Rng& rng, const std::optional<BudgetFilter>& filter) const {
  if (!filter) return {sample(temperature, rng), 0};
  for (std::size_t attempt = 0; attempt < filter->max_attempts; ++attempt) {
    Architecture a = sample(temperature, rng);
    if (within_budget(a, space_, filter->budget_mflops, filter->lower_frac)) return {std::move(a), attempt};
  }
  throw BudgetExhausted("no architecture within [" + std::to_string(filter->lower_frac * filter->budget_mflops) +
                        ", " + std::to_string(filter->budget_mflops) + "] MFLOPs after " +
                        std::to_string(filter->max_attempts) + " draws");
}

Architecture Sampler::sample_exploit(double temperature, Rng& rng) const {
  return sample_impl(temperature, rng, 0.0, false);
}

Architecture Sampler::greedy() const {
  switch (kind_) {
    case SamplerKind::uniform:
      return space_.arch_at(0);
    case SamplerKind::independent: {
      if (!space_.constrained()) {
        Architecture a;
        for (const auto& eps : node_eps_) {
          a.ops.push_back(static_cast<int>(std::max_element(eps.begin(), eps.end()) - eps.begin()));
        }
        return a;
      }
      // T -> 0 limit of the renormalized product: the largest reward sum.
      std::size_t best = 0;
      double best_sum = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < space_.cardinality(); ++a) {
        const auto& ops = space_.arch_at(a).ops;
        double sum = 0.0;
        for (std::size_t i = 0; i < ops.size(); ++i) sum += node_eps_[i][static_cast<std::size_t>(ops[i])];
        if (sum > best_sum) {
          best_sum = sum;
          best = a;
        }
      }
      return space_.arch_at(best);
    }
    case SamplerKind::boltzmann:
      return space_.arch_at(static_cast<std::size_t>(std::max_element(arch_eps_.begin(), arch_eps_.end()) -
                                                     arch_eps_.begin()));
    case SamplerKind::mcts: {
      int node = tree_.root();
      while (!tree_.node(node).is_leaf()) {
        const auto p = node_probabilities(tree_, node, 0.0, 0.0);
        node = tree_.node(node).children[static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin())];
      }
      return space_.arch_at(static_cast<std::size_t>(tree_.node(node).arch));
    }
  }
  throw Error("unknown sampler kind");
}

void Sampler::update(const Architecture& arch, double reward) {
  const double r = clamp01(reward);
  switch (kind_) {
    case SamplerKind::uniform:
      space_.validate(arch);
      break;
    case SamplerKind::independent:
      space_.validate(arch);
      for (std::size_t i = 0; i < arch.ops.size(); ++i) {
        double& e = node_eps_[i][static_cast<std::size_t>(arch.ops[i])];
        e = ema(e, beta_, r);
      }
      break;
    case SamplerKind::boltzmann: {
      double& e = arch_eps_[space_.index_of(arch)];
      e = ema(e, beta_, r);
      break;
    }
    case SamplerKind::mcts: {
      int leaf = -1;
      if (space_.in_range(arch) && space_.satisfies(arch)) leaf = tree_.leaf_of(space_.index_of(arch));
      if (leaf < 0) throw ForeignArchitecture("architecture " + arch.to_string() + " is not a leaf of the search tree");
      const auto path = tree_.path_to_root(leaf);
      for (int k : path) {
        auto& nd = tree_.node(k);
        nd.reward = ema(nd.reward, params_.beta, r);
        ++nd.visits;
      }
      for (int k : path) {
        auto& nd = tree_.node(k);
        const std::uint64_t parent_visits = nd.parent >= 0 ? tree_.node(nd.parent).visits : nd.visits;
        nd.score = uct_score(nd.reward, nd.visits, parent_visits, params_.lambda);
      }
      if (params_.regularize && tree_.has_tags()) {
        for (int k : path) {
          const auto& tag = tree_.node(k).tag;
          if (!tag) continue;
          for (int e : tree_.equivalents(*tag)) {
            if (e == k) continue;
            auto& eq = tree_.node(e);
            eq.reward = ema(eq.reward, params_.beta_reg, r);
          }
        }
      }
      break;
    }
  }
  ++updates_;
}

std::vector<double> Sampler::distribution(double temperature, bool explore) const {
  const std::size_t n = space_.cardinality();
  std::vector<double> p(n, 0.0);
  switch (kind_) {
    case SamplerKind::uniform:
      std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(n));
      return p;
    case SamplerKind::independent: {
      if (temperature <= 0.0) {
        p[space_.index_of(greedy())] = 1.0;
        return p;
      }
      // Log domain, so the renormalization over a constrained set survives
      // marginals that underflow.
      std::vector<double> log_z(space_.node_count());
      for (std::size_t i = 0; i < space_.node_count(); ++i) {
        const auto& eps = node_eps_[i];
        const double top = *std::max_element(eps.begin(), eps.end());
        double z = 0.0;
        for (double e : eps) z += std::exp((e - top) / temperature);
        log_z[i] = top / temperature + std::log(z);
      }
      std::vector<double> log_p(n);
      for (std::size_t a = 0; a < n; ++a) {
        const auto& ops = space_.arch_at(a).ops;
        double lp = 0.0;
        for (std::size_t i = 0; i < ops.size(); ++i) lp += node_eps_[i][static_cast<std::size_t>(ops[i])] / temperature - log_z[i];
        log_p[a] = lp;
      }
      if (!space_.constrained()) {
        for (std::size_t a = 0; a < n; ++a) p[a] = std::exp(log_p[a]);
        return p;
      }
      return softmax(log_p, 1.0);
    }
    case SamplerKind::boltzmann:
      return boltzmann_weights(temperature);
    case SamplerKind::mcts: {
      const double lambda = explore ? params_.lambda : 0.0;
      const bool uniform_siblings = explore && warming_up();
      std::vector<std::pair<int, double>> stack{{tree_.root(), 1.0}};
      while (!stack.empty()) {
        const auto [k, mass] = stack.back();
        stack.pop_back();
        const auto& nd = tree_.node(k);
        if (nd.is_leaf()) {
          p[static_cast<std::size_t>(nd.arch)] = mass;
          continue;
        }
        std::vector<double> q;
        if (uniform_siblings) {
          q.assign(nd.children.size(), 1.0 / static_cast<double>(nd.children.size()));
        } else {
          q = node_probabilities(tree_, k, temperature, lambda);
        }
        for (std::size_t c = 0; c < nd.children.size(); ++c) stack.push_back({nd.children[c], mass * q[c]});
      }
      return p;
    }
  }
  return p;
}

nlohmann::json Sampler::checkpoint() const {
  nlohmann::json doc = {{"kind", to_string(kind_)}, {"space", space_.id()}, {"beta", beta_}, {"updates", updates_}};
  switch (kind_) {
    case SamplerKind::uniform:
      break;
    case SamplerKind::independent:
      doc["node_rewards"] = node_eps_;
      break;
    case SamplerKind::boltzmann:
      doc["arch_rewards"] = arch_eps_;
      break;
    case SamplerKind::mcts:
      doc["params"] = {{"lambda", params_.lambda},
                       {"beta", params_.beta},
                       {"regularize", params_.regularize},
                       {"beta_reg", params_.beta_reg},
                       {"warmup_until", params_.warmup_until}};
      doc["tree"] = export_newick(tree_);
      doc["stats"] = export_stats(tree_);
      break;
  }
  return doc;
}

void Sampler::load_checkpoint(const nlohmann::json& doc) {
  try {
    if (doc.at("kind").get<std::string>() != to_string(kind_)) throw SchemaError("checkpoint is for a different sampler kind");
    beta_ = doc.at("beta").get<double>();
    updates_ = doc.at("updates").get<std::size_t>();
    switch (kind_) {
      case SamplerKind::uniform:
        break;
      case SamplerKind::independent: {
        auto eps = doc.at("node_rewards").get<std::vector<std::vector<double>>>();
        if (eps.size() != node_eps_.size()) throw SchemaError("checkpoint node table does not match the space");
        node_eps_ = std::move(eps);
        break;
      }
      case SamplerKind::boltzmann: {
        auto eps = doc.at("arch_rewards").get<std::vector<double>>();
        if (eps.size() != arch_eps_.size()) throw SchemaError("checkpoint reward table does not match the space");
        arch_eps_ = std::move(eps);
        break;
      }
      case SamplerKind::mcts: {
        if (doc.at("tree").get<std::string>() != export_newick(tree_)) {
          throw SchemaError("checkpoint tree does not match the sampler's tree");
        }
        const auto& p = doc.at("params");
        params_.lambda = p.at("lambda").get<double>();
        params_.beta = p.at("beta").get<double>();
        params_.regularize = p.at("regularize").get<bool>();
        params_.beta_reg = p.at("beta_reg").get<double>();
        params_.warmup_until = p.at("warmup_until").get<std::size_t>();
        import_stats(tree_, doc.at("stats"));
        break;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed sampler checkpoint: ") + e.what());
  }
}

std::vector<FinalChoice> select_final(const Sampler& sampler, const Evaluator& evaluator, std::size_t k,
                                      double temperature, bool greedy, std::size_t eval_batches, Rng& rng) {
  std::vector<Architecture> candidates;
  if (greedy || k == 0) {
    candidates.push_back(sampler.greedy());
  } else {
    std::set<Architecture> seen;
    for (std::size_t i = 0; i < k; ++i) {
      Architecture a = sampler.sample_exploit(temperature, rng);
      if (seen.insert(a).second) candidates.push_back(std::move(a));
    }
  }
  const std::size_t batches = std::max<std::size_t>(eval_batches, 1);
  std::vector<FinalChoice> out;
  out.reserve(candidates.size());
  for (auto& a : candidates) {
    double sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b) sum += evaluator.evaluate(a, 1.0, rng).accuracy;
    out.push_back({std::move(a), sum / static_cast<double>(batches)});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const FinalChoice& x, const FinalChoice& y) { return x.validation_accuracy > y.validation_accuracy; });
  return out;
}

}  // namespace treenas
