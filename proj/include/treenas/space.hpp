#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace treenas {

// One operation index per node. Digit-string form ("22212220") is the
// canonical text representation for spaces whose arities are all <= 10.
struct Architecture {
  std::vector<int> ops;

  std::string to_string() const;
  static Architecture parse(std::string_view digits);

  friend auto operator<=>(const Architecture&, const Architecture&) = default;
  friend bool operator==(const Architecture&, const Architecture&) = default;
};

// "exactly `count` nodes choose the operation labelled `op`"
struct ExactCountConstraint {
  std::string op;
  int count = 0;
};

// Static FLOPs model, reported in MFLOPs. Either additive per-op costs or a
// per-architecture table keyed by canonical index.
struct CostModel {
  double base = 0.0;
  std::vector<std::vector<double>> op_costs;  // [node][op], additive form
  std::vector<double> table;                  // [canonical index], table form

  bool is_table() const { return !table.empty(); }
};

class SearchSpace {
 public:
  static constexpr std::size_t kDefaultCap = 1'000'000;

  SearchSpace(std::string id, std::vector<std::vector<std::string>> nodes,
              std::optional<ExactCountConstraint> constraint = std::nullopt,
              std::optional<CostModel> cost_model = std::nullopt,
              std::size_t cap = kDefaultCap);

  const std::string& id() const { return id_; }
  std::size_t node_count() const { return nodes_.size(); }
  int arity(std::size_t node) const { return static_cast<int>(nodes_.at(node).size()); }
  const std::vector<std::string>& labels(std::size_t node) const { return nodes_.at(node); }
  const std::vector<std::vector<std::string>>& nodes() const { return nodes_; }
  const std::optional<ExactCountConstraint>& constraint() const { return constraint_; }
  bool constrained() const { return constraint_.has_value(); }

  // Product of arities, ignoring the constraint. Saturates at SIZE_MAX.
  std::size_t product_size() const { return product_size_; }

  bool enumerable() const { return enumeration_ != nullptr; }
  // Number of constraint-satisfying architectures. Throws CapacityExceeded
  // when the space was too large to enumerate.
  std::size_t cardinality() const;
  const std::vector<Architecture>& architectures() const;
  const Architecture& arch_at(std::size_t index) const;
  // Inverse of arch_at. Throws InvalidArch for architectures outside the space.
  std::size_t index_of(const Architecture& arch) const;

  bool in_range(const Architecture& arch) const;
  bool satisfies(const Architecture& arch) const;
  void validate(const Architecture& arch) const;

  bool has_cost_model() const { return cost_model_.has_value(); }
  const std::optional<CostModel>& cost_model() const { return cost_model_; }
  double cost(const Architecture& arch) const;

 private:
  std::string id_;
  std::vector<std::vector<std::string>> nodes_;
  std::optional<ExactCountConstraint> constraint_;
  std::optional<CostModel> cost_model_;
  std::size_t product_size_ = 1;
  std::shared_ptr<const std::vector<Architecture>> enumeration_;
};

// All constraint-satisfying architectures in canonical (lexicographic) order.
std::vector<Architecture> enumerate(const SearchSpace& space,
                                    std::size_t cap = SearchSpace::kDefaultCap);

// Layers per feature-map size [high, mid, low] of a pooling-space architecture
// (9 pool/identity gaps between 10 layers, exactly two pools).
std::array<int, 3> pooling_repr(const Architecture& arch);
Architecture from_pooling_repr(const std::array<int, 3>& layers);

enum class EncodingKind { one_hot, vector };

std::vector<double> encode(const SearchSpace& space, const Architecture& arch, EncodingKind kind,
                           bool weighted, double weight_base = 2.0);

bool within_budget(const Architecture& arch, const SearchSpace& space, double budget_mflops,
                   double lower_frac);

// Built-in spaces.
SearchSpace pooling_space();
SearchSpace bench_macro_space();
SearchSpace product_space(std::string id, std::size_t nodes, int arity);

SearchSpace space_from_json(const nlohmann::json& doc, std::string id = "custom");
nlohmann::json space_to_json(const SearchSpace& space);
// Resolves a built-in id ("pooling", "bench_macro") or loads a JSON file.
SearchSpace load_space(const std::string& id_or_path);

EncodingKind parse_encoding_kind(std::string_view s);
std::string_view to_string(EncodingKind kind);

}  // namespace treenas
