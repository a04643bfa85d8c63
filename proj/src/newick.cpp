#include <cctype>
#include <charconv>
#include <cmath>
#include <string>

#include "treenas/error.hpp"
#include "treenas/hierarchy.hpp"

namespace treenas {

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

class NewickParser {
 public:
  explicit NewickParser(std::string_view text) : text_(text) {}

  SearchTree parse() {
    skip_ws();
    const int root = parse_node(-1);
    skip_ws();
    expect(';');
    skip_ws();
    if (pos_ != text_.size()) fail("trailing characters after ';'");
    return SearchTree(std::move(nodes_), root);
  }

 private:
  int parse_node(int parent) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back().parent = parent;
    skip_ws();
    if (peek() == '(') {
      ++pos_;
      std::vector<int> kids;
      for (;;) {
        kids.push_back(parse_node(id));
        skip_ws();
        if (peek() == ',') {
          ++pos_;
          continue;
        }
        expect(')');
        break;
      }
      nodes_[id].children = std::move(kids);
      skip_ws();
      if (starts_number()) nodes_[id].height = read_double();
      skip_ws();
      if (peek() == ':') fail("branch lengths are not supported");
    } else {
      if (!starts_number()) fail("expected an architecture index");
      const double v = read_double();
      if (v < 0 || v != std::floor(v)) fail("leaf label must be a nonnegative integer");
      nodes_[id].arch = static_cast<int>(v);
    }
    return id;
  }

  bool starts_number() const {
    const char c = peek();
    return (c >= '0' && c <= '9') || c == '-' || c == '+' || c == '.' || c == 'i' || c == 'n';
  }

  double read_double() {
    const char* first = text_.data() + pos_;
    const char* last = text_.data() + text_.size();
    double v = 0.0;
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{}) fail("malformed number");
    pos_ += static_cast<std::size_t>(res.ptr - first);
    return v;
  }

  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw SchemaError("newick parse error at offset " + std::to_string(pos_) + ": " + what);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::vector<TreeNode> nodes_;
};

bool same_height(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

}  // namespace

std::string export_newick(const SearchTree& tree) {
  std::string out;
  // Explicit stack of (node, next child); emits ')' and the label on exit.
  std::vector<std::pair<int, std::size_t>> stack{{tree.root(), 0}};
  while (!stack.empty()) {
    auto& [k, next] = stack.back();
    const auto& nd = tree.node(k);
    if (nd.is_leaf()) {
      out += std::to_string(nd.arch);
      stack.pop_back();
      continue;
    }
    if (next == nd.children.size()) {
      out += ')';
      if (!std::isnan(nd.height)) append_double(out, nd.height);
      stack.pop_back();
      continue;
    }
    out += next == 0 ? '(' : ',';
    const int child = nd.children[next++];
    stack.push_back({child, 0});
  }
  out += ';';
  return out;
}

SearchTree parse_newick(std::string_view text) { return NewickParser(text).parse(); }

bool structurally_equal(const SearchTree& a, const SearchTree& b) {
  if (a.size() != b.size()) return false;
  std::vector<std::pair<int, int>> stack{{a.root(), b.root()}};
  while (!stack.empty()) {
    const auto [x, y] = stack.back();
    stack.pop_back();
    const auto& nx = a.node(x);
    const auto& ny = b.node(y);
    if (nx.children.size() != ny.children.size()) return false;
    if (nx.is_leaf()) {
      if (nx.arch != ny.arch) return false;
      continue;
    }
    if (!same_height(nx.height, ny.height)) return false;
    for (std::size_t c = 0; c < nx.children.size(); ++c) stack.push_back({nx.children[c], ny.children[c]});
  }
  return true;
}

}  // namespace treenas
