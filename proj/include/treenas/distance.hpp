#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "treenas/matrix.hpp"
#include "treenas/space.hpp"

namespace treenas {

enum class Measure { l2, kl, cross_entropy };

Measure parse_measure(std::string_view s);
std::string_view to_string(Measure m);

// Probability floor applied (then rows renormalized) before log-based measures.
inline constexpr double kProbabilityFloor = 1e-9;

// Symmetric pairwise dissimilarity between architectures. Stored as the strict
// upper triangle, so symmetry and the zero diagonal hold by construction.
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  explicit DistanceMatrix(std::size_t n, std::string measure = "");

  static DistanceMatrix from_dense(const std::vector<std::vector<double>>& dense, std::string measure = "");

  std::size_t size() const { return n_; }
  const std::string& measure() const { return measure_; }

  double operator()(std::size_t i, std::size_t j) const {
    if (i == j) return 0.0;
    return values_[offset(std::min(i, j), std::max(i, j))];
  }
  void set(std::size_t i, std::size_t j, double value) { values_[offset(std::min(i, j), std::max(i, j))] = value; }

  std::span<const double> condensed() const { return values_; }
  std::span<double> condensed() { return values_; }

  // Throws DegenerateMatrix on negative or non-finite entries, or n < 2.
  void validate() const;

  nlohmann::json to_json() const;
  static DistanceMatrix from_json(const nlohmann::json& doc);
  // Binary layout (little-endian): "TNDM", u32 version, u64 n, u32 measure
  // length, measure bytes, then the strict upper triangle row by row as f64.
  void save(const std::string& path) const;  // .json or binary, by extension
  static DistanceMatrix load(const std::string& path);

  std::size_t offset(std::size_t i, std::size_t j) const {  // requires i < j
    return i * (2 * n_ - i - 1) / 2 + (j - i - 1);
  }

 private:
  std::size_t n_ = 0;
  std::string measure_;
  std::vector<double> values_;
};

// Mean over the B row pairs of the per-row distance.
//   l2:            Euclidean distance
//   kl:            (KL(p||q) + KL(q||p)) / 2
//   cross_entropy: (H(p,q) + H(q,p)) / 2 - (H(p,p) + H(q,q)) / 2
double output_distance(const OutputMatrix& a, const OutputMatrix& b, Measure measure);

// D[i][j] = output_distance(outputs[i], outputs[j]). `threads` == 0 uses the
// hardware concurrency.
DistanceMatrix build_matrix(std::span<const OutputMatrix> outputs, Measure measure, unsigned threads = 0);

// L2 distances between architecture encodings of every enumerated architecture.
DistanceMatrix encoding_matrix(const SearchSpace& space, EncodingKind kind, bool weighted,
                               double weight_base = 2.0);

// Symmetric, zero diagonal, off-diagonal entries i.i.d. uniform(0, 1).
DistanceMatrix random_matrix(std::size_t n, std::uint64_t seed);

}  // namespace treenas
