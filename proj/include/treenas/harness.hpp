#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "treenas/distance.hpp"
#include "treenas/evalsrc.hpp"
#include "treenas/hierarchy.hpp"
#include "treenas/sampler.hpp"
#include "treenas/space.hpp"

namespace treenas {

enum class Strategy {
  uniform,
  independent,
  boltzmann,
  mcts_default,
  mcts_default_reg,
  mcts_random,
  mcts_acc_partition,
  mcts_learned,
  mcts_learned_zero_cost,
};

Strategy parse_strategy(std::string_view s);
std::string_view to_string(Strategy s);
bool is_tree_strategy(Strategy s);
bool is_learned(Strategy s);

struct EvaluatorSpec {
  enum class Kind { tabular, synthetic };

  Kind kind = Kind::synthetic;
  std::string benchmark;  // tabular table, or anchor accuracies for synthetic
  SyntheticConfig synthetic;
  bool synthetic_seed_set = false;  // otherwise derived from the run seed
};

struct RunConfig {
  std::string name;  // row label in comparisons; defaults to the strategy
  std::string space = "bench_macro";
  EvaluatorSpec evaluator;
  Strategy strategy = Strategy::mcts_learned;

  std::size_t total_steps = 10'000;
  double pretrain_frac = 0.40;
  double warmup_frac = 0.25;
  double search_frac = 0.35;
  // Explicit phase lengths override the fractions.
  std::optional<std::size_t> pretrain_steps;
  std::optional<std::size_t> warmup_steps;
  std::optional<std::size_t> search_steps;

  Measure measure = Measure::kl;
  Linkage linkage = Linkage::average;
  std::size_t output_batch = 256;
  EncodingKind encoding = EncodingKind::one_hot;
  bool encoding_weighted = true;

  TemperatureSchedule temperature;
  double beta = 0.95;
  double lambda = 0.5;
  double beta_reg = 0.99;
  double sigma_acc = 0.02;
  double t_ramp = 0.4;
  RewardShaper reward;

  std::size_t final_k = 50;
  bool final_greedy = false;
  std::size_t final_eval_batches = 20;
  std::optional<BudgetFilter> budget;

  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds;  // used by compare when non-empty
  bool log_steps = true;

  std::string label() const { return name.empty() ? std::string(to_string(strategy)) : name; }
  void validate() const;
};

struct Phases {
  std::size_t pretrain = 0;
  std::size_t warmup = 0;
  std::size_t search = 0;

  std::size_t total() const { return pretrain + warmup + search; }
};

Phases phases_of(const RunConfig& config);

// Relative paths inside the document resolve against `base_dir`.
RunConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
nlohmann::json config_to_json(const RunConfig& config);
RunConfig load_config(const std::string& path);

struct StepLog {
  std::size_t step = 0;
  Architecture arch;
  double reward = 0.0;       // observed mini-batch accuracy
  double best_acc = 0.0;     // best ground-truth accuracy sampled so far, percent
  std::size_t best_rank = 0;
};

struct FinalEntry {
  Architecture arch;
  double validation_accuracy = 0.0;
  double true_accuracy = 0.0;  // percent
  std::size_t rank = 0;
};

struct RunRecord {
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::string strategy;
  std::string space;
  Phases phases;
  std::size_t evaluations = 0;        // pretrain + warm-up + search evaluate calls
  std::size_t search_evaluations = 0;
  std::size_t rejections = 0;         // budget-filter retries, not evaluated
  std::string tree_file;              // relative name of the exported tree, if any
  std::string tree_source;            // e.g. "outputs:kl" or "encoding:one_hot_weighted"
  std::vector<StepLog> log;
  std::vector<FinalEntry> final;
  std::optional<std::string> error;
  double wall_time_s = 0.0;

  bool ok() const { return !error && !final.empty(); }
  const FinalEntry& chosen() const { return final.front(); }
};

nlohmann::json record_to_json(const RunRecord& record, bool include_wall_time = true);
RunRecord record_from_json(const nlohmann::json& doc);
RunRecord load_record(const std::string& path);

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;
  bool quiet = true;
};

// Evaluator described by the config, instantiated for one seed.
std::shared_ptr<const Evaluator> make_evaluator(const RunConfig& config, std::uint64_t seed);

// Tree for a tree strategy after `pretrain` steps of supernet training.
// Learned strategies fall back to zero-cost encodings when the evaluator has
// no outputs; `source` receives a description of what was used.
SearchTree build_tree(const RunConfig& config, const Evaluator& evaluator, std::uint64_t seed, double progress,
                      std::string* source = nullptr);

// Executes one seed end to end. Failures are captured in record.error; the
// partial record is still written when an out_dir is given.
RunRecord run(const RunConfig& config, std::uint64_t seed, const RunOptions& options = {});
void write_record(const RunRecord& record, const std::filesystem::path& path);
std::string record_file_name(const RunConfig& config, std::uint64_t seed);

struct SummaryRow {
  std::string strategy;
  std::size_t runs = 0;
  std::size_t failures = 0;
  double best_acc = 0.0;
  double mean_acc = 0.0;
  double std_acc = 0.0;  // sample std, 0 for a single run
  std::size_t best_rank = 0;
  double mean_rank = 0.0;
  std::string best_arch;
};

SummaryRow summarize(const std::string& strategy, const std::vector<RunRecord>& records);

struct Comparison {
  std::vector<SummaryRow> rows;
  std::vector<std::vector<RunRecord>> records;  // per config, per seed
};

Comparison compare(const std::vector<RunConfig>& configs, const std::vector<std::uint64_t>& seeds,
                   const RunOptions& options = {});
std::string comparison_csv(const std::vector<SummaryRow>& rows);
std::string comparison_table(const std::vector<SummaryRow>& rows);

struct SweepPoint {
  std::size_t pretrain_steps = 0;
  SummaryRow summary;
};

std::vector<SweepPoint> sweep_pretrain(const RunConfig& config, const std::vector<std::size_t>& grid,
                                       const std::vector<std::uint64_t>& seeds, const RunOptions& options = {});
std::string sweep_csv(const std::vector<SweepPoint>& points);

std::string log_csv(const RunRecord& record);

}  // namespace treenas
