#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "treenas/matrix.hpp"
#include "treenas/rng.hpp"
#include "treenas/space.hpp"

namespace treenas {

struct EvalOutcome {
  double accuracy = 0.0;                // mini-batch accuracy in [0, 1]
  std::optional<OutputMatrix> outputs;  // row-stochastic, when requested
  std::optional<double> flops;          // MFLOPs, when the space has a cost model
};

// Supernet warm-up: rewards are scaled by r(t) = min(1, t / t_ramp).
// t_ramp <= 0 disables the ramp (r == 1).
struct Ramp {
  double t_ramp = 0.4;

  double operator()(double progress) const {
    if (t_ramp <= 0.0) return 1.0;
    return std::min(1.0, std::max(0.0, progress) / t_ramp);
  }
};

// Ground-truth final accuracies (percent) and the induced rank order:
// higher accuracy first, ties broken by lower canonical index.
class GroundTruth {
 public:
  GroundTruth() = default;
  explicit GroundTruth(std::vector<double> accuracy_percent);

  std::size_t size() const { return accuracy_.size(); }
  double accuracy(std::size_t index) const { return accuracy_.at(index); }
  std::size_t rank(std::size_t index) const { return rank_.at(index); }  // 1 = best
  std::size_t index_at_rank(std::size_t rank) const { return order_.at(rank - 1); }
  const std::vector<double>& accuracies() const { return accuracy_; }

 private:
  std::vector<double> accuracy_;
  std::vector<std::size_t> rank_;
  std::vector<std::size_t> order_;
};

class Evaluator {
 public:
  virtual ~Evaluator() = default;

  virtual const SearchSpace& space() const = 0;
  // One noisy mini-batch validation accuracy at training progress t in [0, 1].
  virtual EvalOutcome evaluate(const Architecture& arch, double progress, Rng& rng) const = 0;
  virtual bool has_outputs() const = 0;
  // B x C class-probability matrix of the architecture on a fixed validation
  // batch, using the supernet as trained up to `progress`.
  // Throws OutputsUnavailable when the backend cannot produce outputs.
  virtual OutputMatrix output_vectors(const Architecture& arch, std::size_t batch_size,
                                      double progress) const = 0;
  virtual const GroundTruth& truth() const = 0;
};

struct BenchmarkRecord {
  double accuracy = 0.0;  // final test accuracy, percent
  std::optional<double> flops;
  std::optional<double> params;
  std::vector<double> curve;
  std::optional<OutputMatrix> outputs;
};

class TabularBenchmark {
 public:
  TabularBenchmark(SearchSpace space, std::vector<BenchmarkRecord> records);

  static TabularBenchmark from_json(const nlohmann::json& doc, const SearchSpace& space);
  static TabularBenchmark load(const std::string& path, const SearchSpace& space);
  nlohmann::json to_json() const;
  void save(const std::string& path) const;

  const SearchSpace& space() const { return space_; }
  const BenchmarkRecord& record(std::size_t index) const { return records_.at(index); }
  const BenchmarkRecord& record(const Architecture& arch) const { return records_.at(space_.index_of(arch)); }
  const GroundTruth& truth() const { return truth_; }
  bool has_outputs() const;

 private:
  SearchSpace space_;
  std::vector<BenchmarkRecord> records_;
  GroundTruth truth_;
};

struct NoiseModel {
  double sigma_acc = 0.02;
  Ramp ramp{};
};

class TabularEvaluator final : public Evaluator {
 public:
  TabularEvaluator(std::shared_ptr<const TabularBenchmark> table, NoiseModel noise);

  const SearchSpace& space() const override { return table_->space(); }
  EvalOutcome evaluate(const Architecture& arch, double progress, Rng& rng) const override;
  bool has_outputs() const override { return table_->has_outputs(); }
  OutputMatrix output_vectors(const Architecture& arch, std::size_t batch_size,
                              double progress) const override;
  const GroundTruth& truth() const override { return table_->truth(); }

  const TabularBenchmark& table() const { return *table_; }

 private:
  std::shared_ptr<const TabularBenchmark> table_;
  NoiseModel noise_;
};

struct SyntheticConfig {
  std::uint64_t seed = 0;
  int classes = 10;
  int latent_dim = 16;
  std::size_t max_batch = 256;
  double interaction_density = 0.5;  // fraction of node pairs with a pairwise term
  double linear_scale = 0.5;
  double interaction_scale = 1.0;
  double quality_lo = 0.80;
  double quality_hi = 0.95;
  // Slope of the logistic applied to the standardized score.
  double quality_gain = 1.5;
  // Weight of the "agrees with the label" direction in the output logits,
  // reached once the ramp saturates.
  double quality_signal = 2.5;
  double structure_scale = 1.0;
  // Logit noise of an untrained supernet; shrinks linearly with the ramp.
  double output_noise = 1.0;
  NoiseModel noise{};
  // Optional per-architecture accuracy (percent) replacing the generated quality.
  std::vector<double> anchor_accuracy;
};

nlohmann::json to_json(const SyntheticConfig& cfg);
SyntheticConfig synthetic_config_from_json(const nlohmann::json& doc, const SyntheticConfig& defaults = {});

// Simulated one-shot supernet. Architecture quality q(a) is a logistic of a
// sparse quadratic over one-hot node features; outputs are
// softmax(W_b z(a) + g(t) q~(a) e_{y_b} + eta(t) xi) per validation sample b,
// with z(a) a seeded random projection of the one-hot encoding.
class SyntheticSupernet final : public Evaluator {
 public:
  SyntheticSupernet(SearchSpace space, SyntheticConfig config);

  const SearchSpace& space() const override { return space_; }
  EvalOutcome evaluate(const Architecture& arch, double progress, Rng& rng) const override;
  bool has_outputs() const override { return true; }
  OutputMatrix output_vectors(const Architecture& arch, std::size_t batch_size,
                              double progress) const override;
  const GroundTruth& truth() const override { return truth_; }

  const SyntheticConfig& config() const { return config_; }
  double quality(std::size_t index) const { return quality_.at(index); }
  // Latent embedding augmented with the progress-dependent quality coordinate.
  std::vector<double> latent(const Architecture& arch, double progress) const;
  double output_noise(double progress) const;

 private:
  double quality_coordinate(std::size_t index, double progress) const;

  SearchSpace space_;
  SyntheticConfig config_;
  std::vector<double> quality_;       // q(a) in [0, 1], canonical order
  std::vector<double> quality_norm_;  // q rescaled to [0, 1] over the space
  std::vector<double> projection_;    // latent_dim x one-hot dim
  std::vector<double> readout_;       // max_batch x classes x latent_dim
  std::vector<int> labels_;           // max_batch
  GroundTruth truth_;
};

// Tabular benchmark whose accuracies come from a synthetic supernet, mapped
// linearly onto [acc_lo, acc_hi]. When `optimum` is given, that architecture
// swaps values with the natural best so it is rank 1 at exactly acc_hi.
TabularBenchmark synthesize_benchmark(const SearchSpace& space, const SyntheticConfig& config,
                                      double acc_lo, double acc_hi,
                                      const std::optional<Architecture>& optimum = std::nullopt);

double clamp01(double x);

}  // namespace treenas
