// treenas: command-line front end for searches, comparisons and tree building.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "treenas/distance.hpp"
#include "treenas/error.hpp"
#include "treenas/evalsrc.hpp"
#include "treenas/harness.hpp"
#include "treenas/hierarchy.hpp"
#include "treenas/space.hpp"

namespace fs = std::filesystem;
using namespace treenas;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kRuntime = 2;

constexpr const char* kConfigSchema = R"(run config (JSON object, every key optional):
  name         string, row label (default: strategy)
  space        "pooling" | "bench_macro" | path to a space JSON
  evaluator    {"kind":"tabular","benchmark":PATH}
               {"kind":"synthetic", seed, classes, latent_dim, max_batch, interaction_density,
                linear_scale, interaction_scale, quality_lo, quality_hi, quality_signal,
                structure_scale, output_noise, anchor_benchmark:PATH}
  strategy     uniform | independent | boltzmann | mcts_default | mcts_default_reg |
               mcts_random | mcts_acc_partition | mcts_learned | mcts_learned_zero_cost
  steps        total evaluation budget (default 10000)
  fractions    {"pretrain":0.40,"warmup":0.25,"search":0.35}
  phase_steps  {"pretrain":N,"warmup":N,"search":N}, overrides fractions
  distance     {"measure":"kl|l2|cross_entropy","linkage":"average|ward|single|complete",
                "batch":256,"encoding":"one_hot|vector","weighted":true}
  temperature  {"kind":"linear|constant","start":0.02,"end":0.0025}
  beta, lambda, beta_reg, sigma_acc, t_ramp     numbers
  reward       {"metric":"accuracy|loss","mode":"absolute|relative"}
  final        {"k":50,"greedy":false,"eval_batches":20}
  budget       {"mflops":280,"lower_frac":0.99,"max_attempts":10000}
  seed, seeds, log_steps
)";

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool quiet = false;
};

fs::path out_dir_of(const Globals& g) {
  if (!g.out_dir.empty()) return g.out_dir;
  if (const char* env = std::getenv("TREENAS_OUT_DIR"); env && *env) return env;
  return "results";
}

RunOptions options_of(const Globals& g) { return {out_dir_of(g), g.quiet}; }

std::vector<std::uint64_t> seed_list(const Globals& g, std::size_t count, std::uint64_t fallback) {
  std::vector<std::uint64_t> seeds(count);
  std::iota(seeds.begin(), seeds.end(), g.seed.value_or(fallback));
  return seeds;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

int cmd_run(const Globals& g, const std::string& config_path, std::size_t seeds) {
  RunConfig config = load_config(config_path);
  if (g.seed) config.seed = *g.seed;
  const auto opts = options_of(g);
  int status = kOk;
  const auto list = seeds > 0 ? seed_list(g, seeds, config.seed) : std::vector<std::uint64_t>{config.seed};
  for (std::uint64_t s : list) {
    const RunRecord rec = run(config, s, opts);
    const auto path = *opts.out_dir / record_file_name(config, s);
    if (rec.error) {
      std::cerr << "error: " << *rec.error << " (partial record: " << path.string() << ")\n";
      status = kRuntime;
      continue;
    }
    if (!g.quiet) {
      const auto& f = rec.chosen();
      std::cout << config.label() << " seed " << s << ": " << f.arch.to_string() << "  acc " << f.true_accuracy
                << "  rank " << f.rank << "  -> " << path.string() << '\n';
    }
  }
  return status;
}

int cmd_compare(const Globals& g, const std::vector<std::string>& paths, std::size_t seeds) {
  std::vector<RunConfig> configs;
  for (const auto& p : paths) configs.push_back(load_config(p));
  std::vector<std::uint64_t> list;
  if (seeds > 0) list = seed_list(g, seeds, 0);
  const auto opts = options_of(g);
  const Comparison cmp = compare(configs, list, opts);
  const std::string csv = comparison_csv(cmp.rows);
  const std::string table = comparison_table(cmp.rows);
  write_text(*opts.out_dir / "compare.csv", csv);
  write_text(*opts.out_dir / "compare.txt", table);
  if (!g.quiet) std::cout << table;
  std::size_t failures = 0;
  for (const auto& r : cmp.rows) failures += r.failures;
  if (failures > 0) {
    std::cerr << failures << " run(s) failed; see the records under " << opts.out_dir->string() << '\n';
    return kRuntime;
  }
  return kOk;
}

int cmd_sweep(const Globals& g, const std::string& config_path, const std::vector<std::size_t>& grid,
              std::size_t seeds) {
  RunConfig config = load_config(config_path);
  if (g.seed) config.seed = *g.seed;
  std::vector<std::uint64_t> list;
  if (seeds > 0) list = seed_list(g, seeds, config.seed);
  const auto opts = options_of(g);
  const auto points = sweep_pretrain(config, grid, list, opts);
  const std::string csv = sweep_csv(points);
  write_text(*opts.out_dir / "sweep_pretrain.csv", csv);
  if (!g.quiet) std::cout << csv;
  for (const auto& p : points) {
    if (p.summary.failures > 0) return kRuntime;
  }
  return kOk;
}

int cmd_build_tree(const Globals& g, const std::string& space_arg, const std::string& source,
                   const std::string& out, const std::string& linkage_name, const std::string& from_run,
                   const std::string& config_path, bool unweighted, bool with_stats) {
  const SearchSpace space = load_space(space_arg);
  const Linkage linkage = parse_linkage(linkage_name);
  SearchTree tree;
  if (fs::exists(source)) {
    const DistanceMatrix d = DistanceMatrix::load(source);
    if (d.size() != space.cardinality()) {
      throw ShapeMismatch("matrix has " + std::to_string(d.size()) + " rows, space has " +
                          std::to_string(space.cardinality()) + " architectures");
    }
    tree = agglomerative(d, linkage);
  } else if (source == "one_hot" || source == "vector") {
    tree = agglomerative(encoding_matrix(space, parse_encoding_kind(source), !unweighted), linkage);
  } else if (source == "default") {
    tree = default_tree(space);
  } else if (source == "random") {
    tree = random_tree(space, g.seed.value_or(0));
  } else {
    RunConfig config;
    std::uint64_t seed = g.seed.value_or(0);
    double progress = 0.0;
    if (!from_run.empty()) {
      const RunRecord rec = load_record(from_run);
      config = config_from_json(rec.config, fs::path(from_run).parent_path());
      seed = g.seed.value_or(rec.seed);
      const Phases p = phases_of(config);
      progress = p.total() ? static_cast<double>(p.pretrain) / static_cast<double>(p.total()) : 1.0;
    } else if (!config_path.empty()) {
      config = load_config(config_path);
      seed = g.seed.value_or(config.seed);
      const Phases p = phases_of(config);
      progress = p.total() ? static_cast<double>(p.pretrain) / static_cast<double>(p.total()) : 1.0;
    }
    config.space = space_arg;
    config.strategy = Strategy::mcts_learned;
    config.measure = parse_measure(source);
    config.linkage = linkage;
    const auto evaluator = make_evaluator(config, seed);
    std::string used;
    tree = build_tree(config, *evaluator, seed, progress, &used);
    if (!g.quiet) std::cerr << "distances from " << used << '\n';
  }
  write_text(out, export_newick(tree) + "\n");
  if (with_stats) write_text(out + ".stats.json", export_stats(tree).dump() + "\n");
  if (!g.quiet) std::cout << out << ": " << tree.leaf_count() << " leaves, depth " << tree.depth() << '\n';
  return kOk;
}

int cmd_export(const std::string& record_path, const std::string& format, const std::string& out) {
  const RunRecord rec = load_record(record_path);
  const std::string text = format == "csv" ? log_csv(rec) : record_to_json(rec).dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text(out, text);
  }
  return kOk;
}

int cmd_synth_benchmark(const Globals& g, const std::string& space_arg, const std::string& out, double lo, double hi,
                        const std::string& optimum) {
  const SearchSpace space = load_space(space_arg);
  SyntheticConfig cfg;
  cfg.seed = g.seed.value_or(0);
  std::optional<Architecture> opt;
  if (!optimum.empty()) opt = Architecture::parse(optimum);
  synthesize_benchmark(space, cfg, lo, hi, opt).save(out);
  if (!g.quiet) std::cout << out << ": " << space.cardinality() << " records\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"treenas: architecture sampling strategies and tree search on tabular or synthetic supernets"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "base seed (overrides the config)");
  app.add_option("--out-dir", g.out_dir, "output directory (default: $TREENAS_OUT_DIR or ./results)");
  app.add_flag("--quiet,-q", g.quiet, "suppress progress output");

  std::string config_path;
  std::size_t seeds = 0;
  auto* run_cmd = app.add_subcommand("run", "run one search and write its record");
  run_cmd->add_option("config", config_path, "run config JSON")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--seeds", seeds, "run seeds seed..seed+N-1 instead of the config seed");

  std::vector<std::string> config_paths;
  auto* compare_cmd = app.add_subcommand("compare", "multi-seed comparison table (CSV + text)");
  compare_cmd->add_option("configs", config_paths, "run configs")->required()->check(CLI::ExistingFile);
  compare_cmd->add_option("--seeds", seeds, "number of seeds per config (default: the configs' own seeds)");

  std::string space_arg, source, out = "tree.nwk", linkage = "average", from_run, tree_config;
  bool unweighted = false, with_stats = false;
  auto* tree_cmd = app.add_subcommand("build-tree", "build a search tree and export it as Newick");
  tree_cmd->add_option("space", space_arg, "pooling | bench_macro | space JSON")->required();
  tree_cmd->add_option("source", source,
                       "distance matrix file, measure (l2|kl|cross_entropy), encoding (one_hot|vector), "
                       "default or random")
      ->required();
  tree_cmd->add_option("--out", out, "Newick output path");
  tree_cmd->add_option("--linkage", linkage, "average|ward|single|complete");
  tree_cmd->add_option("--from-run", from_run, "take the evaluator and pretrain progress from a run record")
      ->check(CLI::ExistingFile);
  tree_cmd->add_option("--config", tree_config, "take the evaluator and pretrain progress from a run config")
      ->check(CLI::ExistingFile);
  tree_cmd->add_flag("--unweighted", unweighted, "disable 1/2^l layer weighting of encodings");
  tree_cmd->add_flag("--stats", with_stats, "also write the per-node stats sidecar");

  std::string record_path, format = "json", export_out;
  auto* export_cmd = app.add_subcommand("export", "export a run record");
  export_cmd->add_option("record", record_path, "run record JSON")->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--format", format, "csv (step log) or json")->check(CLI::IsMember({"csv", "json"}));
  export_cmd->add_option("--out", export_out, "output path (default: stdout)");

  std::vector<std::size_t> grid;
  auto* sweep_cmd = app.add_subcommand("sweep-pretrain", "final accuracy versus pretraining steps");
  sweep_cmd->add_option("config", config_path, "learned-tree run config")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--grid", grid, "pretraining step counts")->required()->delimiter(',');
  sweep_cmd->add_option("--seeds", seeds, "number of seeds per grid point");

  std::string bench_out = "benchmark.json", optimum;
  double acc_lo = 85.0, acc_hi = 93.13;
  auto* synth_cmd = app.add_subcommand("synth-benchmark", "write a synthetic tabular benchmark");
  synth_cmd->add_option("space", space_arg, "pooling | bench_macro | space JSON")->required();
  synth_cmd->add_option("--out", bench_out, "benchmark JSON path");
  synth_cmd->add_option("--lo", acc_lo, "lowest accuracy (percent)");
  synth_cmd->add_option("--hi", acc_hi, "highest accuracy (percent)");
  synth_cmd->add_option("--optimum", optimum, "architecture forced to rank 1 (digit string)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*run_cmd) return cmd_run(g, config_path, seeds);
    if (*compare_cmd) return cmd_compare(g, config_paths, seeds);
    if (*tree_cmd) {
      return cmd_build_tree(g, space_arg, source, out, linkage, from_run, tree_config, unweighted, with_stats);
    }
    if (*export_cmd) return cmd_export(record_path, format, export_out);
    if (*sweep_cmd) return cmd_sweep(g, config_path, grid, seeds);
    if (*synth_cmd) return cmd_synth_benchmark(g, space_arg, bench_out, acc_lo, acc_hi, optimum);
  } catch (const InvalidConfig& e) {
    std::cerr << "usage error: " << e.what() << "\n\n" << kConfigSchema;
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
