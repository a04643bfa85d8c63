#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "treenas/distance.hpp"
#include "treenas/space.hpp"

namespace treenas {

enum class Linkage { average, ward, single, complete };

Linkage parse_linkage(std::string_view s);
std::string_view to_string(Linkage l);

// One agglomeration step. Cluster ids follow the usual convention: leaves are
// 0..n-1, the cluster created by merge s gets id n+s. left < right.
struct Merge {
  std::size_t left = 0;
  std::size_t right = 0;
  double height = 0.0;
  std::size_t size = 0;

  friend bool operator==(const Merge&, const Merge&) = default;
};

struct Dendrogram {
  std::size_t leaves = 0;
  std::vector<Merge> merges;
};

// Lance-Williams update of d(i ∪ j, k).
double lance_williams(Linkage linkage, double d_ik, double d_jk, double d_ij, std::size_t n_i, std::size_t n_j,
                      std::size_t n_k);

// Repeatedly merges the globally closest pair of clusters; ties go to the
// lexicographically smallest (left id, right id) pair. Uses per-row nearest
// neighbour caches and a lazy heap, so the merge order is exactly that of a
// full re-scan.
Dendrogram cluster(const DistanceMatrix& d, Linkage linkage);

// Node of a default (layer-order) tree: the level (1-based depth) and the
// operation chosen on the edge into it.
struct EquivalenceTag {
  int level = 0;
  int op = 0;

  friend auto operator<=>(const EquivalenceTag&, const EquivalenceTag&) = default;
};

inline constexpr double kUnvisitedScore = std::numeric_limits<double>::infinity();

struct TreeNode {
  int parent = -1;
  std::vector<int> children;
  int arch = -1;  // canonical architecture index at leaves
  double height = std::numeric_limits<double>::quiet_NaN();
  std::optional<EquivalenceTag> tag;

  std::uint64_t visits = 0;  // n(a_i)
  double reward = 0.5;       // smoothed accuracy C(a_i)
  double score = kUnvisitedScore;  // UCT value R(a_i) from the last update

  bool is_leaf() const { return children.empty(); }
};

// Pre-expanded search tree whose leaves biject onto architectures.
class SearchTree {
 public:
  SearchTree() = default;
  SearchTree(std::vector<TreeNode> nodes, int root);

  int root() const { return root_; }
  std::size_t size() const { return nodes_.size(); }
  std::size_t leaf_count() const { return leaf_count_; }
  const TreeNode& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  TreeNode& node(int id) { return nodes_.at(static_cast<std::size_t>(id)); }
  const std::vector<TreeNode>& nodes() const { return nodes_; }

  // Leaf node holding the architecture, or -1.
  int leaf_of(std::size_t arch) const {
    return arch < leaf_of_arch_.size() ? leaf_of_arch_[arch] : -1;
  }
  std::vector<std::size_t> leaf_archs(int node) const;
  // Nodes from the leaf up to and including the root.
  std::vector<int> path_to_root(int node) const;
  std::vector<int> preorder() const;
  std::size_t depth() const;

  bool has_tags() const { return !equivalents_.empty(); }
  const std::vector<int>& equivalents(const EquivalenceTag& tag) const;

  void reset_stats(double prior = 0.5);
  // Checks structural invariants and the visit-count inequality; `arch_count`
  // is the size of the architecture set the leaves must cover.
  void validate(std::size_t arch_count) const;

 private:
  std::vector<TreeNode> nodes_;
  int root_ = -1;
  std::size_t leaf_count_ = 0;
  std::vector<int> leaf_of_arch_;
  std::map<EquivalenceTag, std::vector<int>> equivalents_;
};

SearchTree tree_from_dendrogram(const Dendrogram& dendrogram);
SearchTree agglomerative(const DistanceMatrix& d, Linkage linkage = Linkage::average);
// Level t branches on node t's operations, in label order. Unconstrained spaces only.
SearchTree default_tree(const SearchSpace& space);
SearchTree random_tree(const SearchSpace& space, std::uint64_t seed);
// Recursive split: top ceil(k/2) by accuracy form the first ("good") child.
// Ties favour the lower canonical index.
SearchTree accuracy_partition_tree(const std::vector<double>& accuracy);

// Newick-style text: leaves are architecture indices, internal nodes carry
// their merge height (when defined) as a label, e.g. "(0,1)0.5;".
std::string export_newick(const SearchTree& tree);
SearchTree parse_newick(std::string_view text);
bool structurally_equal(const SearchTree& a, const SearchTree& b);

// Per-node statistics (n, C, R) in preorder, for checkpoints and plotting.
nlohmann::json export_stats(const SearchTree& tree);
void import_stats(SearchTree& tree, const nlohmann::json& doc);

}  // namespace treenas
