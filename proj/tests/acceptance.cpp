// Acceptance checks: one PASS/FAIL line per criterion, details indented below.
// Exit status is nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "treenas/distance.hpp"
#include "treenas/error.hpp"
#include "treenas/harness.hpp"

using namespace treenas;
namespace fs = std::filesystem;

namespace {

const std::string kData = TREENAS_DATA_DIR;
const std::string kConfigs = kData + "/../configs";

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void expect(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "    failed: " << what << '\n';
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> draw_frequencies(const Sampler& s, double temperature, int draws, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> f(s.space().cardinality(), 0.0);
  for (int i = 0; i < draws; ++i) f[s.space().index_of(s.sample(temperature, rng))] += 1.0;
  for (double& v : f) v /= draws;
  return f;
}

// ---------------------------------------------------------------------------

void distribution_correctness(Outcome& o) {
  const auto space = product_space("p64", 3, 4);
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(0.80, 0.95);
  const int draws = 100'000;
  const double t = 0.05;

  {  // Boltzmann over all 64 architectures
    const auto t0 = std::chrono::steady_clock::now();
    auto s = Sampler::boltzmann(space);
    auto doc = s.checkpoint();
    std::vector<double> eps(64);
    for (double& e : eps) e = u(gen);
    doc["arch_rewards"] = eps;
    s.load_checkpoint(doc);
    const double err = oracle::max_abs_diff(draw_frequencies(s, t, draws, 2), oracle::softmax(eps, t));
    const double secs = seconds_since(t0);
    o.detail << "    boltzmann   L_inf " << err << "  (" << secs << " s)\n";
    o.expect(err < 0.01 && secs < 10.0, "boltzmann");
  }
  {  // independent: product of per-node softmaxes
    const auto t0 = std::chrono::steady_clock::now();
    auto s = Sampler::independent(space);
    auto doc = s.checkpoint();
    std::vector<std::vector<double>> eps(3, std::vector<double>(4));
    for (auto& row : eps)
      for (double& e : row) e = u(gen);
    doc["node_rewards"] = eps;
    s.load_checkpoint(doc);
    std::vector<double> expect(64);
    for (std::size_t a = 0; a < 64; ++a) {
      double p = 1.0;
      for (std::size_t i = 0; i < 3; ++i) p *= oracle::softmax(eps[i], t)[static_cast<std::size_t>(space.arch_at(a).ops[i])];
      expect[a] = p;
    }
    const double err = oracle::max_abs_diff(draw_frequencies(s, t, draws, 3), expect);
    const double secs = seconds_since(t0);
    o.detail << "    independent L_inf " << err << "  (" << secs << " s)\n";
    o.expect(err < 0.01 && secs < 10.0, "independent");
  }
  {  // frozen MCTS on a learned-style binary tree: path products of node softmaxes over UCT scores, by hand
    const auto t0 = std::chrono::steady_clock::now();
    auto tree = agglomerative(random_matrix(64, 9), Linkage::average);
    std::uniform_int_distribution<int> extra(1, 30);
    auto order = tree.preorder();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      auto& nd = tree.node(*it);
      nd.reward = u(gen);
      std::uint64_t sum = 0;
      for (int c : nd.children) sum += tree.node(c).visits;
      nd.visits = sum + static_cast<std::uint64_t>(extra(gen));
    }
    const double lambda = 0.5;
    const auto s = Sampler::mcts(space, tree, MctsParams{lambda, 0.95, false, 0.99, 0});
    std::vector<double> expect(64);
    for (std::size_t a = 0; a < 64; ++a) {
      double p = 1.0;
      for (int k = tree.leaf_of(a); tree.node(k).parent != -1; k = tree.node(k).parent) {
        const auto& parent = tree.node(tree.node(k).parent);
        std::vector<double> r;
        std::size_t pos = 0;
        for (std::size_t c = 0; c < parent.children.size(); ++c) {
          const auto& ch = tree.node(parent.children[c]);
          if (parent.children[c] == k) pos = c;
          r.push_back(ch.reward + lambda * std::sqrt(std::log(static_cast<double>(parent.visits)) / ch.visits));
        }
        p *= oracle::softmax(r, t)[pos];
      }
      expect[a] = p;
    }
    const double err = oracle::max_abs_diff(draw_frequencies(s, t, draws, 4), expect);
    const double secs = seconds_since(t0);
    o.detail << "    frozen mcts L_inf " << err << "  (" << secs << " s)\n";
    o.expect(err < 0.01 && secs < 10.0, "frozen mcts");
  }
}

void clustering_oracle(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 gen(2);
  std::size_t mismatches = 0;
  for (auto linkage : {Linkage::average, Linkage::ward, Linkage::single, Linkage::complete}) {
    for (int trial = 0; trial < 100; ++trial) {
      const auto dense = oracle::random_dense(8, gen);
      const auto got = cluster(DistanceMatrix::from_dense(dense), linkage).merges;
      const auto want = oracle::naive_cluster(dense, linkage);
      bool same = got.size() == want.size();
      for (std::size_t s = 0; same && s < got.size(); ++s) {
        same = got[s].left == want[s].left && got[s].right == want[s].right && got[s].size == want[s].size &&
               std::abs(got[s].height - want[s].height) <= 1e-12 * (1.0 + want[s].height);
      }
      if (!same) ++mismatches;
    }
  }
  const double secs = seconds_since(t0);
  o.detail << "    400 matrices, " << mismatches << " mismatches (" << secs << " s)\n";
  o.expect(mismatches == 0, "merge sequences differ from the oracle");
  o.expect(secs < 5.0, "runtime");
}

void unit_values(Outcome& o) {
  const double r = uct_score(0.9, 10, 20, 0.5);
  o.detail << "    R = " << r << '\n';
  o.expect(std::abs(r - 1.1737) <= 1e-4, "R(C=0.9, n=10, parent n=20, lambda=0.5)");

  const auto space = product_space("p", 2, 2);
  auto s = Sampler::mcts(space, default_tree(space));
  const auto arch = Architecture::parse("10");
  const int leaf = s.tree().leaf_of(space.index_of(arch));
  const double c0 = s.tree().node(leaf).reward, target = 0.83, beta = 0.95;
  double worst = 0.0;
  for (int k = 1; k <= 300; ++k) {
    s.update(arch, target);
    worst = std::max(worst, std::abs(std::abs(s.tree().node(leaf).reward - target) - std::pow(beta, k) * std::abs(c0 - target)));
  }
  o.detail << "    EMA max deviation " << worst << '\n';
  o.expect(worst <= 1e-12, "EMA closed form");
}

void cardinalities(Outcome& o) {
  const auto pooling = pooling_space();
  o.expect(pooling.cardinality() == 36, "pooling cardinality");
  o.expect(product_space("p", 8, 3).cardinality() == 6561, "8-node 3-op cardinality");
  o.expect(bench_macro_space().cardinality() == 6561, "bench_macro cardinality");
  for (auto layers : {std::array<int, 3>{7, 1, 2}, std::array<int, 3>{6, 2, 2}}) {
    const auto a = from_pooling_repr(layers);
    o.expect(pooling.satisfies(a) && pooling_repr(a) == layers, "pooling_repr round trip");
  }
  o.detail << "    pooling " << pooling.cardinality() << ", bench_macro " << bench_macro_space().cardinality() << '\n';
}

void table_ground_truth(Outcome& o) {
  const auto space = bench_macro_space();
  const std::string path = kData + "/bench_macro_synthetic.json";
  const auto table = std::make_shared<const TabularBenchmark>(TabularBenchmark::load(path, space));
  const auto best = Architecture::parse("22212220");
  const std::size_t top = table->truth().index_at_rank(1);
  o.detail << "    rank 1: " << space.arch_at(top).to_string() << " at " << table->truth().accuracy(top) << "%"
           << " (synthetic substitute table)\n";
  o.expect(top == space.index_of(best), "rank-1 architecture");
  o.expect(std::abs(table->truth().accuracy(top) - 93.13) < 1e-9, "rank-1 accuracy");

  const TabularEvaluator exact(table, NoiseModel{0.0, Ramp{0.4}});
  const auto sampler = Sampler::mcts(space, accuracy_partition_tree(table->truth().accuracies()),
                                     MctsParams{0.0, 0.95, false, 0.99, 0});
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const auto greedy = select_final(sampler, exact, 1, 0.0025, true, 20, rng);
    const auto sampled = select_final(sampler, exact, 50, 0.0, false, 20, rng);
    o.expect(greedy.front().arch == best && sampled.front().arch == best, "select_final seed " + std::to_string(seed));
    o.expect(std::abs(greedy.front().validation_accuracy - 0.9313) < 1e-12, "validation accuracy");
  }
}

struct StrategyRuns {
  std::vector<RunRecord> records;
  double seconds = 0.0;
};

StrategyRuns run_all(const std::string& config_file, const std::vector<std::uint64_t>& seeds) {
  const auto config = load_config(kConfigs + "/" + config_file);
  StrategyRuns out;
  const auto t0 = std::chrono::steady_clock::now();
  for (auto s : seeds) out.records.push_back(run(config, s));
  out.seconds = seconds_since(t0);
  return out;
}

double mean_rank(const StrategyRuns& r) {
  double s = 0.0;
  for (const auto& rec : r.records) s += rec.ok() ? static_cast<double>(rec.chosen().rank) : 6561.0;
  return s / static_cast<double>(r.records.size());
}

std::string rank_list(const StrategyRuns& r) {
  std::string s;
  for (const auto& rec : r.records) s += (rec.ok() ? std::to_string(rec.chosen().rank) : "x") + " ";
  return s;
}

// Wins of `a` over `b` (lower final rank), ties dropped.
std::pair<int, int> sign_wins(const StrategyRuns& a, const StrategyRuns& b) {
  int wins = 0, n = 0;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    const auto ra = a.records[i].ok() ? a.records[i].chosen().rank : 6562;
    const auto rb = b.records[i].ok() ? b.records[i].chosen().rank : 6562;
    if (ra == rb) continue;
    ++n;
    wins += ra < rb;
  }
  return {wins, n};
}

void strategy_ordering(Outcome& o, const StrategyRuns& learned, const StrategyRuns& dflt, const StrategyRuns& uniform) {
  const double total = learned.seconds + dflt.seconds + uniform.seconds;
  o.detail << "    mean final rank: mcts_learned " << mean_rank(learned) << ", mcts_default " << mean_rank(dflt)
           << ", uniform " << mean_rank(uniform) << '\n';
  o.detail << "    per seed: learned [ " << rank_list(learned) << "] default [ " << rank_list(dflt) << "] uniform [ "
           << rank_list(uniform) << "]\n";
  for (const auto* other : {&dflt, &uniform}) {
    const auto [wins, n] = sign_wins(learned, *other);
    const double p = oracle::sign_test_p(wins, n);
    const std::string name = other == &dflt ? "mcts_default" : "uniform";
    o.detail << "    learned vs " << name << ": " << wins << "/" << n << " wins, sign test p = " << p << '\n';
    o.expect(mean_rank(learned) < mean_rank(*other), "mean rank learned < " + name);
    o.expect(p < 0.05, "sign test learned vs " + name);
  }
  o.detail << "    runtime " << total << " s\n";
  o.expect(total < 300.0, "runtime under 5 min");
}

void branching_quality(Outcome& o, const StrategyRuns& learned, const StrategyRuns& random) {
  int at_least = 0;
  std::string detail;
  for (std::size_t i = 0; i < learned.records.size(); ++i) {
    const auto& a = learned.records[i];
    const auto& b = random.records[i];
    if (a.log.empty() || b.log.empty()) continue;
    const double x = a.log.back().best_acc, y = b.log.back().best_acc;
    at_least += x >= y;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f/%.2f ", x, y);
    detail += buf;
  }
  o.detail << "    best-so-far learned/random: " << detail << '\n';
  o.detail << "    learned >= random in " << at_least << " of " << learned.records.size() << " seeds\n";
  o.expect(at_least >= 8, "learned >= random in at least 8 of 10 seeds");
}

void invariant_suites(Outcome& o) {
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int bad_tree = 0, bad_matrix = 0, bad_softmax = 0, bad_kl = 0, bad_encoding = 0;
  const int cases = 1000;
  for (int trial = 0; trial < cases; ++trial) {
    // tree bijection and partition
    const std::size_t n = 2 + trial % 30;
    const auto tree = agglomerative(DistanceMatrix::from_dense(oracle::random_dense(n, gen)),
                                    static_cast<Linkage>(trial % 4));
    const auto sets = oracle::leaf_sets(tree);
    bool ok = sets[static_cast<std::size_t>(tree.root())].size() == n;
    for (std::size_t a = 0; ok && a < n; ++a) ok = sets[static_cast<std::size_t>(tree.root())][a] == a &&
                                                   tree.node(tree.leaf_of(a)).arch == static_cast<int>(a);
    for (std::size_t k = 0; ok && k < tree.size(); ++k) {
      const auto& nd = tree.node(static_cast<int>(k));
      if (nd.is_leaf()) continue;
      auto joined = sets[static_cast<std::size_t>(nd.children[0])];
      const auto& right = sets[static_cast<std::size_t>(nd.children[1])];
      joined.insert(joined.end(), right.begin(), right.end());
      std::sort(joined.begin(), joined.end());
      ok = nd.children.size() == 2 && joined == sets[k] &&
           std::adjacent_find(joined.begin(), joined.end()) == joined.end();
    }
    bad_tree += !ok;

    // distance matrix invariants from random output vectors
    std::vector<OutputMatrix> outs;
    for (int i = 0; i < 5; ++i) {
      OutputMatrix m(3, 4);
      for (std::size_t r = 0; r < 3; ++r) {
        double z = 0.0;
        for (std::size_t c = 0; c < 4; ++c) z += m(r, c) = u(gen) + 1e-3;
        for (std::size_t c = 0; c < 4; ++c) m(r, c) /= z;
      }
      outs.push_back(m);
    }
    const auto d = build_matrix(outs, static_cast<Measure>(trial % 3), 1);
    ok = true;
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j)
        ok = ok && d(i, j) == d(j, i) && d(i, j) >= 0.0 && std::isfinite(d(i, j)) && (i != j || d(i, j) == 0.0);
    bad_matrix += !ok;

    // KL nonnegative, zero iff equal
    bad_kl += !(output_distance(outs[0], outs[1], Measure::kl) > 0.0 && output_distance(outs[2], outs[2], Measure::kl) == 0.0);

    // softmax shift invariance at a node
    auto t2 = default_tree(product_space("p", 1, 2 + trial % 4));
    t2.node(0).visits = 50;
    for (int c : t2.node(0).children) {
      t2.node(c).reward = u(gen);
      t2.node(c).visits = 1 + static_cast<std::uint64_t>(trial % 7);
    }
    const double temp = 0.002 + u(gen) * 0.2;
    const auto before = node_probabilities(t2, 0, temp, 0.5);
    const double shift = 100.0 * (u(gen) - 0.5);
    for (int c : t2.node(0).children) t2.node(c).reward += shift;
    bad_softmax += oracle::max_abs_diff(before, node_probabilities(t2, 0, temp, 0.5)) > 1e-9;

    // weighted encoding: node l scaled by 2^-l
    const auto space = product_space("p", 1 + trial % 6, 2 + trial % 3);
    const auto& arch = space.arch_at(static_cast<std::size_t>(trial) % space.cardinality());
    const auto plain = encode(space, arch, EncodingKind::one_hot, false);
    const auto weighted = encode(space, arch, EncodingKind::one_hot, true);
    const auto width = static_cast<std::size_t>(space.arity(0));
    ok = plain.size() == weighted.size();
    for (std::size_t k = 0; ok && k < plain.size(); ++k) {
      ok = weighted[k] == std::ldexp(plain[k], -static_cast<int>(k / width));
    }
    bad_encoding += !ok;
  }
  o.detail << "    " << cases << " cases each; failures: tree " << bad_tree << ", matrix " << bad_matrix << ", softmax "
           << bad_softmax << ", kl " << bad_kl << ", encoding " << bad_encoding << '\n';
  o.expect(bad_tree + bad_matrix + bad_softmax + bad_kl + bad_encoding == 0, "property cases");
}

std::string strip_wall_time(const fs::path& path) {
  std::ifstream in(path);
  auto doc = nlohmann::json::parse(in);
  doc.erase("wall_time_s");
  return doc.dump(1);
}

void reproducibility(Outcome& o) {
  // in-process
  for (const char* file : {"pooling_learned_kl.json", "pooling_boltzmann.json"}) {
    const auto config = load_config(kConfigs + "/" + file);
    const auto a = record_to_json(run(config, 5), false).dump(1);
    const auto b = record_to_json(run(config, 5), false).dump(1);
    o.expect(a == b, std::string("in-process records differ for ") + file);
  }
  // two consecutive invocations of the command-line tool
  const fs::path work = fs::temp_directory_path() / "treenas_acceptance_repro";
  fs::remove_all(work);
  int failures = 0;
  for (const char* sub : {"a", "b"}) {
    const std::string cmd = std::string("\"") + TREENAS_CLI + "\" -q --out-dir \"" + (work / sub).string() + "\" run \"" +
                            kConfigs + "/pooling_learned_kl.json\" --seeds 2";
    failures += std::system(cmd.c_str()) != 0;
  }
  o.expect(failures == 0, "command-line runs");
  std::size_t compared = 0;
  if (failures == 0) {
    for (const auto& entry : fs::directory_iterator(work / "a")) {
      if (entry.path().extension() != ".json" || entry.path().string().ends_with(".stats.json")) continue;
      ++compared;
      o.expect(strip_wall_time(entry.path()) == strip_wall_time(work / "b" / entry.path().filename()),
               "record " + entry.path().filename().string());
    }
  }
  o.detail << "    " << compared << " CLI records compared byte for byte (wall time removed)\n";
  o.expect(compared == 2, "expected two records per invocation");
  fs::remove_all(work);
}

}  // namespace

int main() {
  int failed = 0;
  const auto report = [&](int id, const std::string& title, const std::function<void(Outcome&)>& body) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      body(o);
    } catch (const std::exception& e) {
      o.expect(false, std::string("exception: ") + e.what());
    }
    std::printf("%s %d. %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), seconds_since(t0));
    std::fputs(o.detail.str().c_str(), stdout);
    std::fflush(stdout);
    failed += !o.pass;
  };

  report(1, "distribution correctness", distribution_correctness);
  report(2, "clustering oracle equivalence", clustering_oracle);
  report(3, "UCT and EMA unit values", unit_values);
  report(4, "space cardinalities", cardinalities);
  report(5, "Bench-Macro ground truth", table_ground_truth);

  const std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  StrategyRuns learned, dflt, uniform, random;
  report(6, "strategy ordering (synthetic Bench-Macro, 10 seeds)", [&](Outcome& o) {
    learned = run_all("bench_macro_learned.json", seeds);
    dflt = run_all("bench_macro_mcts_default.json", seeds);
    uniform = run_all("bench_macro_uniform.json", seeds);
    strategy_ordering(o, learned, dflt, uniform);
  });
  report(7, "branching quality, learned vs random tree", [&](Outcome& o) {
    if (learned.records.empty()) learned = run_all("bench_macro_learned.json", seeds);
    random = run_all("bench_macro_mcts_random.json", seeds);
    branching_quality(o, learned, random);
  });
  report(8, "invariant suites", invariant_suites);
  report(9, "reproducibility", reproducibility);

  std::printf("%s: %d of 9 criteria failed\n", failed ? "FAIL" : "PASS", failed);
  return failed ? 1 : 0;
}
