#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "treenas/error.hpp"
#include "treenas/harness.hpp"

using namespace treenas;
namespace fs = std::filesystem;

namespace {

const std::string kData = TREENAS_DATA_DIR;

RunConfig small_config(Strategy strategy) {
  auto doc = nlohmann::json::parse(R"({
    "space": "pooling",
    "evaluator": {"kind": "tabular", "benchmark": "pooling_benchmark.json"},
    "steps": 400,
    "sigma_acc": 0.02,
    "final": {"k": 5, "eval_batches": 4},
    "distance": {"measure": "kl", "batch": 16}
  })");
  auto c = config_from_json(doc, kData);
  c.strategy = strategy;
  return c;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("treenas_test_harness_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("strategy names") {
  for (auto s : {Strategy::uniform, Strategy::mcts_learned_zero_cost, Strategy::mcts_default_reg}) {
    CHECK(parse_strategy(to_string(s)) == s);
  }
  CHECK_THROWS_AS(parse_strategy("darts"), InvalidConfig);
  CHECK(is_tree_strategy(Strategy::mcts_random));
  CHECK_FALSE(is_tree_strategy(Strategy::boltzmann));
  CHECK(is_learned(Strategy::mcts_learned_zero_cost));
}

TEST_CASE("phase split") {
  RunConfig c;
  c.total_steps = 10'000;
  const auto p = phases_of(c);
  CHECK(p.pretrain == 4000);
  CHECK(p.warmup == 2500);
  CHECK(p.search == 3500);
  c.total_steps = 7;
  CHECK(phases_of(c).total() == 7);
  c.search_steps = 100;
  CHECK(phases_of(c).search == 100);
}

TEST_CASE("config parsing") {
  const auto c = load_config(kData + "/../configs/pooling_learned_kl.json");
  CHECK(c.strategy == Strategy::mcts_learned);
  CHECK(c.measure == Measure::kl);
  CHECK(c.final_greedy);
  CHECK(fs::exists(c.evaluator.benchmark));
  CHECK(c.evaluator.synthetic_seed_set);

  const auto back = config_from_json(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));

  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"stepz", 3}}), InvalidConfig);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"distance", {{"metric", "kl"}}}}), InvalidConfig);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"strategy", "nope"}}), InvalidConfig);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"evaluator", {{"kind", "oracle"}}}}), InvalidConfig);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), InvalidConfig);

  auto bad = small_config(Strategy::uniform);
  bad.pretrain_frac = 0.8;
  CHECK_THROWS_AS(bad.validate(), InvalidConfig);
  bad = small_config(Strategy::uniform);
  bad.beta = 1.0;
  CHECK_THROWS_AS(bad.validate(), InvalidConfig);
}

TEST_CASE("every strategy runs on the pooling table") {
  for (auto s : {Strategy::uniform, Strategy::independent, Strategy::boltzmann, Strategy::mcts_random,
                 Strategy::mcts_acc_partition, Strategy::mcts_learned, Strategy::mcts_learned_zero_cost}) {
    const auto rec = run(small_config(s), 3);
    INFO(to_string(s));
    REQUIRE_FALSE(rec.error);
    CHECK(rec.evaluations == 400);
    CHECK(rec.log.size() == 400);
    CHECK_FALSE(rec.final.empty());
    for (std::size_t i = 1; i < rec.log.size(); ++i) {
      CHECK(rec.log[i].best_acc >= rec.log[i - 1].best_acc);
      CHECK(pooling_space().satisfies(rec.log[i].arch));
    }
    for (std::size_t i = 1; i < rec.final.size(); ++i) {
      CHECK(rec.final[i - 1].validation_accuracy >= rec.final[i].validation_accuracy);
    }
  }
  // tabular data without stored outputs: the learned tree falls back to encodings
  CHECK(run(small_config(Strategy::mcts_learned), 0).tree_source == "encoding:one_hot_weighted");
  CHECK(run(small_config(Strategy::mcts_acc_partition), 0).tree_source == "accuracy_partition");
}

TEST_CASE("failures are captured in the record") {
  const auto rec = run(small_config(Strategy::mcts_default), 0);
  REQUIRE(rec.error);
  CHECK(rec.error->find("constraint") != std::string::npos);
  CHECK_FALSE(rec.ok());

  auto budgeted = small_config(Strategy::uniform);
  budgeted.budget = BudgetFilter{100.0, 0.99, 50};
  const auto r2 = run(budgeted, 0);
  REQUIRE(r2.error);  // the pooling space has no cost model
}

TEST_CASE("synthetic learned runs use output vectors") {
  auto c = load_config(kData + "/../configs/pooling_learned_kl.json");
  c.total_steps = 300;
  const auto rec = run(c, 1);
  REQUIRE_FALSE(rec.error);
  CHECK(rec.tree_source == "outputs:kl");
  CHECK(rec.search_evaluations == rec.phases.search);
  CHECK(rec.final.size() == 1);
}

TEST_CASE("records are reproducible and round-trip") {
  const auto c = small_config(Strategy::mcts_learned);
  const auto a = run(c, 11);
  const auto b = run(c, 11);
  CHECK(record_to_json(a, false).dump() == record_to_json(b, false).dump());
  CHECK(record_to_json(a, false).dump() != record_to_json(run(c, 12), false).dump());

  const auto dir = scratch("records");
  const auto on_disk = run(c, 11, RunOptions{dir, true});
  const auto path = dir / record_file_name(c, 11);
  REQUIRE(fs::exists(path));
  CHECK(fs::exists(dir / on_disk.tree_file));
  const auto loaded = load_record(path.string());
  CHECK(record_to_json(loaded, false) == record_to_json(on_disk, false));
  CHECK_THROWS_AS(record_from_json(nlohmann::json{{"seed", 1}}), SchemaError);
  fs::remove_all(dir);
}

TEST_CASE("summaries and CSV") {
  std::vector<RunRecord> recs(3);
  const double accs[] = {91.0, 92.0, 90.0};
  const std::size_t ranks[] = {5, 1, 20};
  for (int i = 0; i < 3; ++i) recs[i].final.push_back({Architecture::parse("01"), 0.9, accs[i], ranks[i]});
  RunRecord failed;
  failed.error = "boom";
  recs.push_back(failed);
  const auto row = summarize("x", recs);
  CHECK(row.runs == 4);
  CHECK(row.failures == 1);
  CHECK(row.best_acc == 92.0);
  CHECK(row.best_rank == 1);
  CHECK(row.mean_acc == doctest::Approx(91.0));
  CHECK(row.std_acc == doctest::Approx(1.0));
  CHECK(row.mean_rank == doctest::Approx(26.0 / 3));
  const auto csv = comparison_csv({row});
  CHECK(csv == "strategy,best_acc,mean_acc,std_acc,best_rank,mean_rank\nx,92.0000,91.0000,1.0000,1,8.67\n");
  const auto table = comparison_table({row});
  CHECK(table.find("Avg. Rank") != std::string::npos);
  CHECK(table.find("91.00 ± 1.00") != std::string::npos);
}

TEST_CASE("compare and sweep") {
  auto a = small_config(Strategy::uniform);
  auto b = small_config(Strategy::mcts_learned_zero_cost);
  b.name = "zero_cost";
  const auto cmp = compare({a, b}, {0, 1});
  REQUIRE(cmp.rows.size() == 2);
  CHECK(cmp.rows[1].strategy == "zero_cost");
  CHECK(cmp.records[0].size() == 2);

  auto other = small_config(Strategy::uniform);
  other.space = "bench_macro";
  CHECK_THROWS_AS(compare({a, other}, {0}), InvalidConfig);

  const auto points = sweep_pretrain(b, {0, 100}, {0});
  REQUIRE(points.size() == 2);
  CHECK(points[1].pretrain_steps == 100);
  CHECK(sweep_csv(points).rfind("pretrain_steps,strategy,", 0) == 0);
  CHECK_THROWS_AS(sweep_pretrain(a, {10}, {0}), InvalidConfig);
  CHECK_THROWS_AS(sweep_pretrain(b, {}, {0}), InvalidConfig);
}

TEST_CASE("log export") {
  RunRecord r;
  r.log.push_back({0, Architecture::parse("1,12"), 0.5, 90.0, 3});
  r.log.push_back({1, Architecture::parse("01"), 0.75, 91.5, 1});
  const auto csv = log_csv(r);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "step,arch,reward,best_acc,best_rank");
  std::getline(in, line);
  CHECK(line == "0,\"1,12\",0.500000,90.0000,3");
  std::getline(in, line);
  CHECK(line == "1,01,0.750000,91.5000,1");
}
