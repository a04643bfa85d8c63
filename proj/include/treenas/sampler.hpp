#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "treenas/evalsrc.hpp"
#include "treenas/hierarchy.hpp"
#include "treenas/rng.hpp"
#include "treenas/space.hpp"

namespace treenas {

struct TemperatureSchedule {
  enum class Kind { constant, linear };

  Kind kind = Kind::linear;
  double t_start = 0.02;
  double t_end = 0.0025;
  std::size_t horizon = 0;  // steps over which t_start -> t_end

  double at(std::size_t step) const;

  nlohmann::json to_json() const;
  static TemperatureSchedule from_json(const nlohmann::json& doc);
};

// Turns a raw mini-batch accuracy into the reward fed to the smoothed
// statistics.
//   accuracy/absolute: acc
//   accuracy/relative: 0.5 + acc - baseline, baseline an EMA of past accuracies
//   loss/absolute:     1 / (1 + L), L = -ln(acc) a cross-entropy proxy
//   loss/relative:     0.5 * baseline_L / L, clamped
struct RewardShaper {
  enum class Metric { accuracy, loss };
  enum class Mode { absolute, relative };

  Metric metric = Metric::accuracy;
  Mode mode = Mode::absolute;
  double baseline_beta = 0.95;

  double operator()(double accuracy);
  void reset() { baseline_.reset(); }
  const std::optional<double>& baseline() const { return baseline_; }
  void set_baseline(std::optional<double> b) { baseline_ = b; }

  nlohmann::json to_json() const;
  static RewardShaper from_json(const nlohmann::json& doc);

 private:
  std::optional<double> baseline_;
};

struct BudgetFilter {
  double budget_mflops = 0.0;
  double lower_frac = 0.99;
  std::size_t max_attempts = 10'000;
};

struct MctsParams {
  double lambda = 0.5;
  double beta = 0.95;
  bool regularize = false;
  double beta_reg = 0.99;
  // Number of tree updates during which siblings are drawn uniformly.
  std::size_t warmup_until = 0;
};

enum class SamplerKind { uniform, independent, boltzmann, mcts };
std::string_view to_string(SamplerKind kind);

struct Draw {
  Architecture arch;
  std::size_t rejections = 0;  // budget-filter retries
};

// Child distribution of an internal node:
//   R(c) = C(c) + lambda * sqrt(ln n(node) / n(c)),  p(c) ∝ exp(R(c) / T).
// With lambda > 0, unvisited children share all the mass uniformly.
// T <= 0 puts all mass on the first maximizer of R.
std::vector<double> node_probabilities(const SearchTree& tree, int node, double temperature, double lambda);

// UCT value; +inf for an unvisited child when lambda > 0.
double uct_score(double reward, std::uint64_t visits, std::uint64_t parent_visits, double lambda);

class Sampler {
 public:
  static Sampler uniform(const SearchSpace& space);
  static Sampler independent(const SearchSpace& space, double beta = 0.95, double prior = 0.5);
  static Sampler boltzmann(const SearchSpace& space, double beta = 0.95, double prior = 0.5);
  static Sampler mcts(const SearchSpace& space, SearchTree tree, MctsParams params = {});

  SamplerKind kind() const { return kind_; }
  const SearchSpace& space() const { return space_; }
  std::size_t updates() const { return updates_; }
  bool warming_up() const { return kind_ == SamplerKind::mcts && updates_ < params_.warmup_until; }

  Architecture sample(double temperature, Rng& rng) const;
  // Rejection-resamples until the architecture is within the budget.
  // Throws BudgetExhausted after filter.max_attempts draws.
  Draw sample(double temperature, Rng& rng, const std::optional<BudgetFilter>& filter) const;
  // Sample with the exploration bonus switched off.
  Architecture sample_exploit(double temperature, Rng& rng) const;
  // Highest-probability architecture as T -> 0 with lambda = 0.
  Architecture greedy() const;

  void update(const Architecture& arch, double reward);

  // Probability of every enumerated architecture in canonical order.
  std::vector<double> distribution(double temperature, bool explore = true) const;

  const std::vector<std::vector<double>>& node_rewards() const { return node_eps_; }
  const std::vector<double>& arch_rewards() const { return arch_eps_; }
  const SearchTree& tree() const { return tree_; }
  SearchTree& tree() { return tree_; }
  const MctsParams& params() const { return params_; }
  double beta() const { return beta_; }

  nlohmann::json checkpoint() const;
  // Restores statistics into a sampler built with the same kind, space and tree.
  void load_checkpoint(const nlohmann::json& doc);

 private:
  Sampler(SamplerKind kind, const SearchSpace& space);

  Architecture sample_impl(double temperature, Rng& rng, double lambda, bool allow_warmup) const;
  std::vector<double> independent_marginal(std::size_t node, double temperature) const;
  std::vector<double> boltzmann_weights(double temperature) const;

  SamplerKind kind_;
  SearchSpace space_;
  double beta_ = 0.95;
  std::vector<std::vector<double>> node_eps_;  // independent: [node][op]
  std::vector<double> arch_eps_;               // boltzmann: [canonical index]
  SearchTree tree_;
  MctsParams params_;
  std::size_t updates_ = 0;
};

struct FinalChoice {
  Architecture arch;
  double validation_accuracy = 0.0;
};

// Draws k architectures with lambda = 0 (k == 1 with greedy: the argmax
// path), deduplicates, scores each by the mean of `eval_batches` noisy
// evaluations at t = 1 and returns them best first.
std::vector<FinalChoice> select_final(const Sampler& sampler, const Evaluator& evaluator, std::size_t k,
                                      double temperature, bool greedy, std::size_t eval_batches, Rng& rng);

}  // namespace treenas
