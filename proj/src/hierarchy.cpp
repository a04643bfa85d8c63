#include "treenas/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

#include "treenas/error.hpp"

namespace treenas {

Linkage parse_linkage(std::string_view s) {
  if (s == "average") return Linkage::average;
  if (s == "ward") return Linkage::ward;
  if (s == "single") return Linkage::single;
  if (s == "complete") return Linkage::complete;
  throw InvalidConfig("unknown linkage '" + std::string(s) + "' (expected average|ward|single|complete)");
}

std::string_view to_string(Linkage l) {
  switch (l) {
    case Linkage::average: return "average";
    case Linkage::ward: return "ward";
    case Linkage::single: return "single";
    case Linkage::complete: return "complete";
  }
  return "?";
}

double lance_williams(Linkage linkage, double d_ik, double d_jk, double d_ij, std::size_t n_i, std::size_t n_j,
                      std::size_t n_k) {
  switch (linkage) {
    case Linkage::single: return std::min(d_ik, d_jk);
    case Linkage::complete: return std::max(d_ik, d_jk);
    case Linkage::average: {
      const double ni = static_cast<double>(n_i), nj = static_cast<double>(n_j);
      return (ni * d_ik + nj * d_jk) / (ni + nj);
    }
    case Linkage::ward: {
      // Recurrence on squared dissimilarities, reported as a distance.
      const double ni = static_cast<double>(n_i), nj = static_cast<double>(n_j), nk = static_cast<double>(n_k);
      const double sq = ((ni + nk) * d_ik * d_ik + (nj + nk) * d_jk * d_jk - nk * d_ij * d_ij) / (ni + nj + nk);
      return std::sqrt(std::max(0.0, sq));
    }
  }
  return 0.0;
}

namespace {

struct PairKey {
  double dist;
  std::size_t lo;
  std::size_t hi;

  bool operator<(const PairKey& o) const {
    if (dist != o.dist) return dist < o.dist;
    if (lo != o.lo) return lo < o.lo;
    return hi < o.hi;
  }
};

struct HeapEntry {
  PairKey key;
  std::size_t row;
  std::uint32_t version;

  bool operator>(const HeapEntry& o) const { return o.key < key; }
};

constexpr std::size_t kNone = static_cast<std::size_t>(-1);

}  // namespace

Dendrogram cluster(const DistanceMatrix& d, Linkage linkage) {
  d.validate();
  const std::size_t n = d.size();
  std::vector<double> work(d.condensed().begin(), d.condensed().end());
  auto at = [&](std::size_t a, std::size_t b) -> double& {
    return a < b ? work[d.offset(a, b)] : work[d.offset(b, a)];
  };

  std::vector<std::size_t> id(n), size(n, 1), nn(n, kNone);
  std::iota(id.begin(), id.end(), std::size_t{0});
  std::vector<char> active(n, 1);
  std::vector<std::uint32_t> version(n, 0);
  std::priority_queue<HeapEntry, std::vector<HeapEntry>, std::greater<>> heap;

  auto key = [&](std::size_t a, std::size_t b) {
    return PairKey{at(a, b), std::min(id[a], id[b]), std::max(id[a], id[b])};
  };
  // Nearest neighbour of row r among active slots above it.
  auto recompute = [&](std::size_t r) {
    std::size_t best = kNone;
    PairKey best_key{};
    for (std::size_t k = r + 1; k < n; ++k) {
      if (!active[k]) continue;
      const PairKey kk = key(r, k);
      if (best == kNone || kk < best_key) {
        best = k;
        best_key = kk;
      }
    }
    nn[r] = best;
    ++version[r];
    if (best != kNone) heap.push({best_key, r, version[r]});
  };

  for (std::size_t r = 0; r + 1 < n; ++r) recompute(r);

  Dendrogram out;
  out.leaves = n;
  out.merges.reserve(n - 1);
  for (std::size_t step = 0; step + 1 < n; ++step) {
    HeapEntry top = heap.top();
    heap.pop();
    while (!active[top.row] || top.version != version[top.row]) {
      top = heap.top();
      heap.pop();
    }
    const std::size_t i = top.row;
    const std::size_t j = nn[i];
    const double d_ij = at(i, j);
    out.merges.push_back({std::min(id[i], id[j]), std::max(id[i], id[j]), d_ij, size[i] + size[j]});

    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == i || k == j) continue;
      at(i, k) = lance_williams(linkage, at(i, k), at(j, k), d_ij, size[i], size[j], size[k]);
    }
    active[j] = 0;
    size[i] += size[j];
    id[i] = n + step;

    recompute(i);
    for (std::size_t r = 0; r < j; ++r) {
      if (!active[r] || r == i || nn[r] == kNone) continue;
      if (nn[r] == i || nn[r] == j) {
        recompute(r);
      } else if (r < i) {
        const PairKey candidate = key(r, i);
        if (candidate < key(r, nn[r])) {
          nn[r] = i;
          ++version[r];
          heap.push({candidate, r, version[r]});
        }
      }
    }
  }
  return out;
}

SearchTree::SearchTree(std::vector<TreeNode> nodes, int root) : nodes_(std::move(nodes)), root_(root) {
  if (root_ < 0 || static_cast<std::size_t>(root_) >= nodes_.size()) throw Error("tree root out of range");
  int max_arch = -1;
  for (const auto& node : nodes_) {
    if (node.is_leaf()) {
      ++leaf_count_;
      max_arch = std::max(max_arch, node.arch);
    }
  }
  leaf_of_arch_.assign(static_cast<std::size_t>(max_arch + 1), -1);
  for (std::size_t k = 0; k < nodes_.size(); ++k) {
    const auto& node = nodes_[k];
    if (node.is_leaf() && node.arch >= 0) {
      if (leaf_of_arch_[node.arch] != -1) throw Error("architecture appears at two leaves");
      leaf_of_arch_[node.arch] = static_cast<int>(k);
    }
    if (node.tag) equivalents_[*node.tag].push_back(static_cast<int>(k));
  }
}

std::vector<std::size_t> SearchTree::leaf_archs(int start) const {
  std::vector<std::size_t> out;
  std::vector<int> stack{start};
  while (!stack.empty()) {
    const int k = stack.back();
    stack.pop_back();
    const auto& nd = node(k);
    if (nd.is_leaf()) {
      out.push_back(static_cast<std::size_t>(nd.arch));
    } else {
      for (auto it = nd.children.rbegin(); it != nd.children.rend(); ++it) stack.push_back(*it);
    }
  }
  return out;
}

std::vector<int> SearchTree::path_to_root(int start) const {
  std::vector<int> path;
  for (int k = start; k != -1; k = node(k).parent) path.push_back(k);
  return path;
}

std::vector<int> SearchTree::preorder() const {
  std::vector<int> out;
  out.reserve(nodes_.size());
  std::vector<int> stack{root_};
  while (!stack.empty()) {
    const int k = stack.back();
    stack.pop_back();
    out.push_back(k);
    const auto& ch = node(k).children;
    for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
  }
  return out;
}

std::size_t SearchTree::depth() const {
  std::size_t best = 0;
  std::vector<std::pair<int, std::size_t>> stack{{root_, 0}};
  while (!stack.empty()) {
    const auto [k, dpt] = stack.back();
    stack.pop_back();
    best = std::max(best, dpt);
    for (int c : node(k).children) stack.push_back({c, dpt + 1});
  }
  return best;
}

const std::vector<int>& SearchTree::equivalents(const EquivalenceTag& tag) const {
  static const std::vector<int> empty;
  const auto it = equivalents_.find(tag);
  return it == equivalents_.end() ? empty : it->second;
}

void SearchTree::reset_stats(double prior) {
  for (auto& nd : nodes_) {
    nd.visits = 0;
    nd.reward = prior;
    nd.score = kUnvisitedScore;
  }
}

void SearchTree::validate(std::size_t arch_count) const {
  if (node(root_).parent != -1) throw Error("tree root has a parent");
  std::vector<char> seen(nodes_.size(), 0);
  std::vector<char> arch_seen(arch_count, 0);
  std::vector<int> stack{root_};
  std::size_t leaves = 0;
  while (!stack.empty()) {
    const int k = stack.back();
    stack.pop_back();
    if (seen[k]) throw Error("tree contains a cycle or shared child");
    seen[k] = 1;
    const auto& nd = node(k);
    if (nd.is_leaf()) {
      if (nd.arch < 0 || static_cast<std::size_t>(nd.arch) >= arch_count) throw Error("leaf without a valid architecture");
      if (arch_seen[nd.arch]) throw Error("architecture appears at two leaves");
      arch_seen[nd.arch] = 1;
      ++leaves;
      continue;
    }
    if (nd.children.size() < 2 && k != root_) throw Error("internal node with fewer than 2 children");
    if (nd.children.size() < 2 && nodes_.size() > 1) throw Error("root with fewer than 2 children");
    if (nd.arch != -1) throw Error("internal node carries an architecture");
    std::uint64_t child_visits = 0;
    for (int c : nd.children) {
      if (node(c).parent != k) throw Error("child/parent links disagree");
      child_visits += node(c).visits;
      stack.push_back(c);
    }
    if (nd.visits < child_visits) throw Error("node visits below the sum of its children's visits");
  }
  if (leaves != arch_count) throw Error("leaves do not cover every architecture");
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) throw Error("tree has unreachable nodes");
}

SearchTree tree_from_dendrogram(const Dendrogram& dendrogram) {
  const std::size_t n = dendrogram.leaves;
  if (n == 0) throw Error("empty dendrogram");
  std::vector<TreeNode> nodes(2 * n - 1);
  for (std::size_t i = 0; i < n; ++i) nodes[i].arch = static_cast<int>(i);
  for (std::size_t s = 0; s < dendrogram.merges.size(); ++s) {
    const auto& m = dendrogram.merges[s];
    const auto k = static_cast<int>(n + s);
    auto& nd = nodes[n + s];
    nd.children = {static_cast<int>(m.left), static_cast<int>(m.right)};
    nd.height = m.height;
    nodes[m.left].parent = k;
    nodes[m.right].parent = k;
  }
  return SearchTree(std::move(nodes), static_cast<int>(2 * n - 2));
}

SearchTree agglomerative(const DistanceMatrix& d, Linkage linkage) {
  return tree_from_dendrogram(cluster(d, linkage));
}

SearchTree default_tree(const SearchSpace& space) {
  if (space.constrained()) {
    throw ConstraintUnsupported("default tree needs an unconstrained product space; '" + space.id() +
                                "' has a constraint");
  }
  const std::size_t levels = space.node_count();
  std::vector<TreeNode> nodes(1);
  // (node id, level, canonical index prefix)
  struct Frame {
    int node;
    std::size_t level;
    std::size_t prefix;
  };
  std::vector<Frame> stack{{0, 0, 0}};
  while (!stack.empty()) {
    const Frame f = stack.back();
    stack.pop_back();
    if (f.level == levels) {
      nodes[f.node].arch = static_cast<int>(f.prefix);
      continue;
    }
    const int arity = space.arity(f.level);
    std::vector<int> kids;
    for (int o = 0; o < arity; ++o) {
      TreeNode child;
      child.parent = f.node;
      child.tag = EquivalenceTag{static_cast<int>(f.level) + 1, o};
      kids.push_back(static_cast<int>(nodes.size()));
      nodes.push_back(std::move(child));
    }
    nodes[f.node].children = kids;
    for (int o = arity; o-- > 0;) {
      stack.push_back({kids[o], f.level + 1, f.prefix * static_cast<std::size_t>(arity) + static_cast<std::size_t>(o)});
    }
  }
  return SearchTree(std::move(nodes), 0);
}

SearchTree random_tree(const SearchSpace& space, std::uint64_t seed) {
  return agglomerative(random_matrix(space.cardinality(), seed), Linkage::average);
}

SearchTree accuracy_partition_tree(const std::vector<double>& accuracy) {
  if (accuracy.empty()) throw Error("accuracy partition needs at least one architecture");
  std::vector<std::size_t> order(accuracy.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return accuracy[a] > accuracy[b]; });

  // Sorting once suffices: every split keeps its range sorted.
  std::vector<TreeNode> nodes(1);
  struct Frame {
    int node;
    std::size_t begin, end;
  };
  std::vector<Frame> stack{{0, 0, order.size()}};
  while (!stack.empty()) {
    const Frame f = stack.back();
    stack.pop_back();
    const std::size_t k = f.end - f.begin;
    if (k == 1) {
      nodes[f.node].arch = static_cast<int>(order[f.begin]);
      continue;
    }
    const std::size_t mid = f.begin + (k + 1) / 2;
    const int good = static_cast<int>(nodes.size());
    const int bad = good + 1;
    nodes.emplace_back().parent = f.node;
    nodes.emplace_back().parent = f.node;
    nodes[f.node].children = {good, bad};
    stack.push_back({bad, mid, f.end});
    stack.push_back({good, f.begin, mid});
  }
  return SearchTree(std::move(nodes), 0);
}

nlohmann::json export_stats(const SearchTree& tree) {
  auto rows = nlohmann::json::array();
  for (int k : tree.preorder()) {
    const auto& nd = tree.node(k);
    nlohmann::json row = {{"n", nd.visits}, {"C", nd.reward}};
    row["R"] = std::isfinite(nd.score) ? nlohmann::json(nd.score) : nlohmann::json(nullptr);
    rows.push_back(std::move(row));
  }
  return {{"nodes", std::move(rows)}};
}

void import_stats(SearchTree& tree, const nlohmann::json& doc) {
  const auto order = tree.preorder();
  const auto& rows = doc.at("nodes");
  if (rows.size() != order.size()) throw SchemaError("stats sidecar does not match the tree size");
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& nd = tree.node(order[i]);
    const auto& row = rows[i];
    nd.visits = row.at("n").get<std::uint64_t>();
    nd.reward = row.at("C").get<double>();
    nd.score = row.at("R").is_null() ? kUnvisitedScore : row.at("R").get<double>();
  }
}

}  // namespace treenas
