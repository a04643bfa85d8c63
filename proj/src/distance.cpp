#include "treenas/distance.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <thread>

#include "treenas/error.hpp"
#include "treenas/rng.hpp"

namespace treenas {

namespace {

// Output matrix prepared for the pairwise kernel: floored/renormalized
// probabilities and their logs for the log-based measures.
struct Prepared {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> p;
  std::vector<double> logp;
};

Prepared prepare(const OutputMatrix& m, Measure measure) {
  if (m.data.size() != m.rows * m.cols) throw ShapeMismatch("output matrix storage does not match its shape");
  for (double v : m.data) {
    if (!std::isfinite(v)) throw NonFinite("output matrix contains NaN or infinity");
  }
  Prepared out{m.rows, m.cols, m.data, {}};
  if (measure == Measure::l2) return out;
  out.logp.resize(out.p.size());
  for (std::size_t r = 0; r < m.rows; ++r) {
    double* row = out.p.data() + r * m.cols;
    double sum = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) {
      row[c] = std::max(row[c], kProbabilityFloor);
      sum += row[c];
    }
    for (std::size_t c = 0; c < m.cols; ++c) {
      row[c] /= sum;
      out.logp[r * m.cols + c] = std::log(row[c]);
    }
  }
  return out;
}

double pair_distance(const Prepared& a, const Prepared& b, Measure measure) {
  const std::size_t cols = a.cols;
  double total = 0.0;
  for (std::size_t r = 0; r < a.rows; ++r) {
    const double* p = a.p.data() + r * cols;
    const double* q = b.p.data() + r * cols;
    double d = 0.0;
    switch (measure) {
      case Measure::l2: {
        for (std::size_t c = 0; c < cols; ++c) d += (p[c] - q[c]) * (p[c] - q[c]);
        d = std::sqrt(d);
        break;
      }
      case Measure::kl: {
        const double* lp = a.logp.data() + r * cols;
        const double* lq = b.logp.data() + r * cols;
        // p log(p/q) + q log(q/p) summed over classes
        for (std::size_t c = 0; c < cols; ++c) d += (p[c] - q[c]) * (lp[c] - lq[c]);
        d *= 0.5;
        break;
      }
      case Measure::cross_entropy: {
        const double* lp = a.logp.data() + r * cols;
        const double* lq = b.logp.data() + r * cols;
        double h_pq = 0.0, h_qp = 0.0, h_pp = 0.0, h_qq = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          h_pq -= p[c] * lq[c];
          h_qp -= q[c] * lp[c];
          h_pp -= p[c] * lp[c];
          h_qq -= q[c] * lq[c];
        }
        d = 0.5 * (h_pq + h_qp) - 0.5 * (h_pp + h_qq);
        break;
      }
    }
    total += std::max(0.0, d);
  }
  return a.rows ? total / static_cast<double>(a.rows) : 0.0;
}

void check_shapes(const OutputMatrix& a, const OutputMatrix& b) {
  if (a.rows != b.rows || a.cols != b.cols) {
    throw ShapeMismatch("output matrices differ in shape: " + std::to_string(a.rows) + "x" +
                        std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
  }
}

template <typename PairFn>
void fill_pairs(DistanceMatrix& d, unsigned threads, PairFn&& fn) {
  const std::size_t n = d.size();
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  auto values = d.condensed();
  auto work = [&](unsigned worker) {
    // Interleaved rows balance the triangular workload.
    for (std::size_t i = worker; i < n; i += threads) {
      std::size_t k = d.offset(i, i + 1);
      for (std::size_t j = i + 1; j < n; ++j, ++k) values[k] = fn(i, j);
    }
  };
  if (threads <= 1) {
    work(0);
    return;
  }
  std::vector<std::jthread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
}

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "binary matrix format assumes little-endian host");
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw SchemaError("truncated distance matrix file");
  return value;
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

Measure parse_measure(std::string_view s) {
  if (s == "l2") return Measure::l2;
  if (s == "kl") return Measure::kl;
  if (s == "cross_entropy" || s == "ce") return Measure::cross_entropy;
  throw InvalidConfig("unknown distance measure '" + std::string(s) + "' (expected l2|kl|cross_entropy)");
}

std::string_view to_string(Measure m) {
  switch (m) {
    case Measure::l2: return "l2";
    case Measure::kl: return "kl";
    case Measure::cross_entropy: return "cross_entropy";
  }
  return "?";
}

DistanceMatrix::DistanceMatrix(std::size_t n, std::string measure)
    : n_(n), measure_(std::move(measure)), values_(n > 1 ? n * (n - 1) / 2 : 0, 0.0) {}

DistanceMatrix DistanceMatrix::from_dense(const std::vector<std::vector<double>>& dense, std::string measure) {
  const std::size_t n = dense.size();
  DistanceMatrix d(n, std::move(measure));
  for (std::size_t i = 0; i < n; ++i) {
    if (dense[i].size() != n) throw DegenerateMatrix("distance matrix is not square");
    if (dense[i][i] != 0.0) throw DegenerateMatrix("distance matrix has a nonzero diagonal");
    for (std::size_t j = i + 1; j < n; ++j) {
      if (dense[i][j] != dense[j][i]) {
        throw DegenerateMatrix("distance matrix is not symmetric at (" + std::to_string(i) + "," +
                               std::to_string(j) + ")");
      }
      d.set(i, j, dense[i][j]);
    }
  }
  return d;
}

void DistanceMatrix::validate() const {
  if (n_ < 2) throw DegenerateMatrix("distance matrix needs at least 2 points");
  for (double v : values_) {
    if (!std::isfinite(v)) throw DegenerateMatrix("distance matrix has non-finite entries");
    if (v < 0.0) throw DegenerateMatrix("distance matrix has negative entries");
  }
}

nlohmann::json DistanceMatrix::to_json() const {
  auto rows = nlohmann::json::array();
  for (std::size_t i = 0; i < n_; ++i) {
    std::vector<double> row(n_);
    for (std::size_t j = 0; j < n_; ++j) row[j] = (*this)(i, j);
    rows.push_back(std::move(row));
  }
  return {{"n", n_}, {"measure", measure_}, {"values", std::move(rows)}};
}

DistanceMatrix DistanceMatrix::from_json(const nlohmann::json& doc) {
  try {
    auto dense = doc.at("values").get<std::vector<std::vector<double>>>();
    if (doc.contains("n") && doc.at("n").get<std::size_t>() != dense.size()) {
      throw SchemaError("distance matrix 'n' does not match its values");
    }
    return from_dense(dense, doc.value("measure", std::string{}));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed distance matrix: ") + e.what());
  }
}

void DistanceMatrix::save(const std::string& path) const {
  if (ends_with(path, ".json")) {
    std::ofstream out(path);
    if (!out) throw SchemaError("cannot write '" + path + "'");
    out << to_json().dump() << '\n';
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot write '" + path + "'");
  out.write("TNDM", 4);
  write_le<std::uint32_t>(out, 1);
  write_le<std::uint64_t>(out, n_);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(measure_.size()));
  out.write(measure_.data(), static_cast<std::streamsize>(measure_.size()));
  out.write(reinterpret_cast<const char*>(values_.data()), static_cast<std::streamsize>(values_.size() * sizeof(double)));
}

DistanceMatrix DistanceMatrix::load(const std::string& path) {
  if (ends_with(path, ".json")) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open distance matrix '" + path + "'");
    nlohmann::json doc;
    try {
      in >> doc;
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("distance matrix '" + path + "' is not valid JSON: " + e.what());
    }
    return from_json(doc);
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open distance matrix '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "TNDM", 4) != 0) throw SchemaError("'" + path + "' is not a distance matrix file");
  if (read_le<std::uint32_t>(in) != 1) throw SchemaError("unsupported distance matrix version");
  const auto n = read_le<std::uint64_t>(in);
  const auto len = read_le<std::uint32_t>(in);
  std::string measure(len, '\0');
  in.read(measure.data(), len);
  DistanceMatrix d(static_cast<std::size_t>(n), measure);
  in.read(reinterpret_cast<char*>(d.values_.data()), static_cast<std::streamsize>(d.values_.size() * sizeof(double)));
  if (!in) throw SchemaError("truncated distance matrix file");
  return d;
}

double output_distance(const OutputMatrix& a, const OutputMatrix& b, Measure measure) {
  check_shapes(a, b);
  return pair_distance(prepare(a, measure), prepare(b, measure), measure);
}

DistanceMatrix build_matrix(std::span<const OutputMatrix> outputs, Measure measure, unsigned threads) {
  if (outputs.empty()) return DistanceMatrix(0, std::string(to_string(measure)));
  std::vector<Prepared> prepared;
  prepared.reserve(outputs.size());
  for (const auto& m : outputs) {
    check_shapes(outputs.front(), m);
    prepared.push_back(prepare(m, measure));
  }
  DistanceMatrix d(outputs.size(), std::string(to_string(measure)));
  fill_pairs(d, threads, [&](std::size_t i, std::size_t j) { return pair_distance(prepared[i], prepared[j], measure); });
  return d;
}

DistanceMatrix encoding_matrix(const SearchSpace& space, EncodingKind kind, bool weighted, double weight_base) {
  const auto& archs = space.architectures();
  std::vector<std::vector<double>> enc;
  enc.reserve(archs.size());
  for (const auto& a : archs) enc.push_back(encode(space, a, kind, weighted, weight_base));
  std::string label = std::string(to_string(kind)) + (weighted ? "_weighted" : "");
  DistanceMatrix d(archs.size(), std::move(label));
  fill_pairs(d, 1, [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < enc[i].size(); ++k) s += (enc[i][k] - enc[j][k]) * (enc[i][k] - enc[j][k]);
    return std::sqrt(s);
  });
  return d;
}

DistanceMatrix random_matrix(std::size_t n, std::uint64_t seed) {
  if (n < 2) throw InvalidConfig("random matrix needs n >= 2");
  DistanceMatrix d(n, "random");
  Rng rng(derive_seed(seed, stream_tag("random-matrix")));
  for (double& v : d.condensed()) {
    do {
      v = rng.uniform();
    } while (v == 0.0);
  }
  return d;
}

}  // namespace treenas
