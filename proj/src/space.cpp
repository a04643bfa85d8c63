#include "treenas/space.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "treenas/error.hpp"

namespace treenas {

std::string Architecture::to_string() const {
  const bool digits = std::all_of(ops.begin(), ops.end(), [](int o) { return o >= 0 && o < 10; });
  std::string out;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (digits) {
      out.push_back(static_cast<char>('0' + ops[i]));
    } else {
      if (i) out.push_back(',');
      out += std::to_string(ops[i]);
    }
  }
  return out;
}

Architecture Architecture::parse(std::string_view text) {
  Architecture arch;
  if (text.find(',') != std::string_view::npos) {
    std::size_t start = 0;
    while (start <= text.size()) {
      const std::size_t end = std::min(text.find(',', start), text.size());
      const auto token = text.substr(start, end - start);
      if (token.empty()) throw InvalidArch("empty operation in architecture '" + std::string(text) + "'");
      int value = 0;
      for (char c : token) {
        if (c < '0' || c > '9') throw InvalidArch("bad architecture string '" + std::string(text) + "'");
        value = value * 10 + (c - '0');
      }
      arch.ops.push_back(value);
      start = end + 1;
    }
    return arch;
  }
  for (char c : text) {
    if (c < '0' || c > '9') throw InvalidArch("bad architecture string '" + std::string(text) + "'");
    arch.ops.push_back(c - '0');
  }
  if (arch.ops.empty()) throw InvalidArch("empty architecture string");
  return arch;
}

SearchSpace::SearchSpace(std::string id, std::vector<std::vector<std::string>> nodes,
                         std::optional<ExactCountConstraint> constraint,
                         std::optional<CostModel> cost_model, std::size_t cap)
    : id_(std::move(id)),
      nodes_(std::move(nodes)),
      constraint_(std::move(constraint)),
      cost_model_(std::move(cost_model)) {
  if (nodes_.empty()) throw SchemaError("search space '" + id_ + "' has no nodes");
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].size() < 2) {
      throw SchemaError("node " + std::to_string(i) + " of space '" + id_ + "' has fewer than 2 operations");
    }
  }
  if (constraint_) {
    const bool known = std::any_of(nodes_.begin(), nodes_.end(), [&](const auto& labels) {
      return std::find(labels.begin(), labels.end(), constraint_->op) != labels.end();
    });
    if (!known) throw SchemaError("constraint references unknown operation '" + constraint_->op + "'");
  }
  for (const auto& labels : nodes_) {
    const auto arity = labels.size();
    if (product_size_ > std::numeric_limits<std::size_t>::max() / arity) {
      product_size_ = std::numeric_limits<std::size_t>::max();
      break;
    }
    product_size_ *= arity;
  }
  if (cost_model_ && !cost_model_->is_table()) {
    const auto& costs = cost_model_->op_costs;
    bool ok = costs.size() == nodes_.size();
    for (std::size_t i = 0; ok && i < costs.size(); ++i) ok = costs[i].size() == nodes_[i].size();
    if (!ok) throw SchemaError("additive cost model does not match node arities");
  }

  if (product_size_ <= cap) {
    auto all = std::make_shared<std::vector<Architecture>>();
    Architecture cur{std::vector<int>(nodes_.size(), 0)};
    while (true) {
      if (satisfies(cur)) all->push_back(cur);
      bool wrapped = true;
      for (std::size_t pos = nodes_.size(); pos-- > 0;) {
        if (++cur.ops[pos] < arity(pos)) {
          wrapped = false;
          break;
        }
        cur.ops[pos] = 0;
      }
      if (wrapped) break;
    }
    enumeration_ = std::move(all);
  }
  if (cost_model_ && cost_model_->is_table()) {
    if (!enumeration_ || cost_model_->table.size() != enumeration_->size()) {
      throw SchemaError("cost table does not cover the enumerated space");
    }
  }
}

std::size_t SearchSpace::cardinality() const { return architectures().size(); }

const std::vector<Architecture>& SearchSpace::architectures() const {
  if (!enumeration_) {
    throw CapacityExceeded("space '" + id_ + "' with " + std::to_string(product_size_) +
                           " raw assignments exceeds the enumeration cap");
  }
  return *enumeration_;
}

const Architecture& SearchSpace::arch_at(std::size_t index) const {
  const auto& all = architectures();
  if (index >= all.size()) throw InvalidArch("architecture index out of range: " + std::to_string(index));
  return all[index];
}

std::size_t SearchSpace::index_of(const Architecture& arch) const {
  validate(arch);
  const auto& all = architectures();
  if (!constrained()) {
    std::size_t index = 0;
    for (std::size_t i = 0; i < arch.ops.size(); ++i) index = index * arity(i) + arch.ops[i];
    return index;
  }
  const auto it = std::lower_bound(all.begin(), all.end(), arch);
  return static_cast<std::size_t>(it - all.begin());
}

bool SearchSpace::in_range(const Architecture& arch) const {
  if (arch.ops.size() != nodes_.size()) return false;
  for (std::size_t i = 0; i < arch.ops.size(); ++i) {
    if (arch.ops[i] < 0 || arch.ops[i] >= arity(i)) return false;
  }
  return true;
}

bool SearchSpace::satisfies(const Architecture& arch) const {
  if (!in_range(arch)) return false;
  if (!constraint_) return true;
  int count = 0;
  for (std::size_t i = 0; i < arch.ops.size(); ++i) {
    if (nodes_[i][arch.ops[i]] == constraint_->op) ++count;
  }
  return count == constraint_->count;
}

void SearchSpace::validate(const Architecture& arch) const {
  if (arch.ops.size() != nodes_.size()) {
    throw InvalidArch("architecture '" + arch.to_string() + "' has " + std::to_string(arch.ops.size()) +
                      " nodes, space '" + id_ + "' has " + std::to_string(nodes_.size()));
  }
  if (!in_range(arch)) throw InvalidArch("operation index out of range in '" + arch.to_string() + "'");
  if (!satisfies(arch)) throw InvalidArch("architecture '" + arch.to_string() + "' violates the space constraint");
}

double SearchSpace::cost(const Architecture& arch) const {
  if (!cost_model_) throw NoCostModel("space '" + id_ + "' has no cost model");
  if (cost_model_->is_table()) return cost_model_->table[index_of(arch)];
  validate(arch);
  double total = cost_model_->base;
  for (std::size_t i = 0; i < arch.ops.size(); ++i) total += cost_model_->op_costs[i][arch.ops[i]];
  return total;
}

std::vector<Architecture> enumerate(const SearchSpace& space, std::size_t cap) {
  const auto& all = space.architectures();
  if (all.size() > cap) {
    throw CapacityExceeded("space '" + space.id() + "' has " + std::to_string(all.size()) +
                           " architectures, cap is " + std::to_string(cap));
  }
  return all;
}

std::array<int, 3> pooling_repr(const Architecture& arch) {
  if (arch.ops.size() != 9) throw InvalidArch("pooling architecture must have 9 gap decisions");
  std::vector<int> pools;
  for (int gap = 0; gap < 9; ++gap) {
    const int op = arch.ops[gap];
    if (op != 0 && op != 1) throw InvalidArch("pooling gap decisions are binary");
    if (op == 1) pools.push_back(gap + 1);
  }
  if (pools.size() != 2) throw InvalidArch("pooling architecture must contain exactly 2 pools");
  return {pools[0], pools[1] - pools[0], 10 - pools[1]};
}

Architecture from_pooling_repr(const std::array<int, 3>& layers) {
  if (layers[0] < 1 || layers[1] < 1 || layers[2] < 1 || layers[0] + layers[1] + layers[2] != 10) {
    throw InvalidArch("pooling representation must be three positive counts summing to 10");
  }
  Architecture arch{std::vector<int>(9, 0)};
  arch.ops[layers[0] - 1] = 1;
  arch.ops[layers[0] + layers[1] - 1] = 1;
  return arch;
}

std::vector<double> encode(const SearchSpace& space, const Architecture& arch, EncodingKind kind,
                           bool weighted, double weight_base) {
  space.validate(arch);
  std::vector<double> out;
  double weight = 1.0;
  for (std::size_t i = 0; i < arch.ops.size(); ++i) {
    const double w = weighted ? weight : 1.0;
    if (kind == EncodingKind::one_hot) {
      for (int o = 0; o < space.arity(i); ++o) out.push_back(o == arch.ops[i] ? w : 0.0);
    } else {
      out.push_back(w * arch.ops[i]);
    }
    weight /= weight_base;
  }
  return out;
}

bool within_budget(const Architecture& arch, const SearchSpace& space, double budget_mflops,
                   double lower_frac) {
  if (!(lower_frac > 0.0 && lower_frac <= 1.0)) throw InvalidConfig("lower_frac must lie in (0, 1]");
  const double cost = space.cost(arch);
  return cost >= lower_frac * budget_mflops && cost <= budget_mflops;
}

SearchSpace pooling_space() {
  return SearchSpace("pooling", std::vector<std::vector<std::string>>(9, {"id", "pool"}),
                     ExactCountConstraint{"pool", 2});
}

SearchSpace bench_macro_space() {
  return SearchSpace("bench_macro", std::vector<std::vector<std::string>>(8, {"id", "mb3_k3", "mb6_k5"}));
}

SearchSpace product_space(std::string id, std::size_t nodes, int arity) {
  std::vector<std::string> labels;
  for (int o = 0; o < arity; ++o) labels.push_back("op" + std::to_string(o));
  return SearchSpace(std::move(id), std::vector<std::vector<std::string>>(nodes, labels));
}

SearchSpace space_from_json(const nlohmann::json& doc, std::string id) {
  try {
    if (doc.contains("id")) id = doc.at("id").get<std::string>();
    auto nodes = doc.at("nodes").get<std::vector<std::vector<std::string>>>();
    std::optional<ExactCountConstraint> constraint;
    if (doc.contains("constraint") && !doc.at("constraint").is_null()) {
      const auto& c = doc.at("constraint");
      if (c.at("kind").get<std::string>() != "exact_count") {
        throw SchemaError("unsupported constraint kind '" + c.at("kind").get<std::string>() + "'");
      }
      constraint = ExactCountConstraint{c.at("op").get<std::string>(), c.at("count").get<int>()};
    }
    std::optional<CostModel> cost;
    std::optional<nlohmann::json> table_doc;
    if (doc.contains("cost_model") && !doc.at("cost_model").is_null()) {
      const auto& c = doc.at("cost_model");
      const auto kind = c.at("kind").get<std::string>();
      CostModel model;
      if (kind == "additive") {
        model.base = c.value("base", 0.0);
        model.op_costs = c.at("op_costs").get<std::vector<std::vector<double>>>();
        cost = model;
      } else if (kind == "table") {
        table_doc = c.at("flops");
      } else {
        throw SchemaError("unsupported cost model kind '" + kind + "'");
      }
    }
    if (!table_doc) return SearchSpace(std::move(id), std::move(nodes), constraint, cost);

    // Table costs are keyed by digit string; resolve against the enumeration.
    SearchSpace bare(id, nodes, constraint);
    CostModel model;
    model.table.assign(bare.cardinality(), std::numeric_limits<double>::quiet_NaN());
    for (const auto& [key, value] : table_doc->items()) {
      model.table.at(bare.index_of(Architecture::parse(key))) = value.get<double>();
    }
    for (double v : model.table) {
      if (std::isnan(v)) throw CoverageError("cost table misses architectures");
    }
    return SearchSpace(std::move(id), std::move(nodes), constraint, model);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed space definition: ") + e.what());
  }
}

nlohmann::json space_to_json(const SearchSpace& space) {
  nlohmann::json doc;
  doc["id"] = space.id();
  doc["nodes"] = space.nodes();
  if (space.constraint()) {
    doc["constraint"] = {{"kind", "exact_count"}, {"op", space.constraint()->op}, {"count", space.constraint()->count}};
  }
  if (const auto& cost = space.cost_model()) {
    if (cost->is_table()) {
      nlohmann::json flops = nlohmann::json::object();
      for (std::size_t i = 0; i < cost->table.size(); ++i) flops[space.arch_at(i).to_string()] = cost->table[i];
      doc["cost_model"] = {{"kind", "table"}, {"flops", flops}};
    } else {
      doc["cost_model"] = {{"kind", "additive"}, {"base", cost->base}, {"op_costs", cost->op_costs}};
    }
  }
  return doc;
}

SearchSpace load_space(const std::string& id_or_path) {
  if (id_or_path == "pooling") return pooling_space();
  if (id_or_path == "bench_macro") return bench_macro_space();
  std::ifstream in(id_or_path);
  if (!in) throw SchemaError("cannot open space file '" + id_or_path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("space file '" + id_or_path + "' is not valid JSON: " + e.what());
  }
  return space_from_json(doc, id_or_path);
}

EncodingKind parse_encoding_kind(std::string_view s) {
  if (s == "one_hot") return EncodingKind::one_hot;
  if (s == "vector") return EncodingKind::vector;
  throw InvalidConfig("unknown encoding kind '" + std::string(s) + "' (expected one_hot|vector)");
}

std::string_view to_string(EncodingKind kind) {
  return kind == EncodingKind::one_hot ? "one_hot" : "vector";
}

}  // namespace treenas
