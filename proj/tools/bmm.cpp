// bmm: training-set search by bipartite mode matching.
//
//   bmm build-server --server-features s.bmmf --leaves 128 --out tree.json
//   bmm match --tree tree.json --server-features s.bmmf --target-features t.bmmf --out sel.txt
//   bmm evaluate --manifest sel.txt --server-features s.bmmf --target-features t.bmmf
//   bmm prune --manifest sel.txt --budget-frac 0.05 --out pruned.txt
//   bmm bench --world world.json --sweep-leaves 16,32,64,128 --sweep-targets 8
//   bmm generate --preset granularity --out-dir data/

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "bmm/error.hpp"
#include "bmm/pipeline.hpp"

namespace {

enum ExitCode : int {
  kOk = 0,
  kUnexpected = 1,
  kParameter = 2,
  kIo = 3,
  kFormat = 4,
  kValidation = 5,
  kNumerical = 6,
};

struct Flags {
  std::string server_features, target_features, tree, manifest, out, world, cost_csv, out_dir;
  std::string linkage = "centroid";
  std::string strategy = "stratified";
  std::string preset;
  std::string format = "binary";
  std::size_t leaves = 128;
  std::size_t target_clusters = 20;
  std::uint64_t seed = 0;
  double eps_cov = bmm::kDefaultCovEpsilon;
  double warn_fid = -1.0;
  std::optional<double> budget_frac;
  std::optional<std::size_t> budget_n;
  std::vector<std::size_t> sweep_leaves{16, 32, 64, 128};
  std::vector<std::size_t> sweep_targets{20};
};

bmm::PipelineConfig make_config(const Flags& f) {
  bmm::PipelineConfig c;
  c.leaves = f.leaves;
  c.target_clusters = f.target_clusters;
  c.seed = f.seed;
  c.linkage = bmm::linkage_from_name(f.linkage);
  c.eps_cov = f.eps_cov;
  c.strategy = bmm::strategy_from_name(f.strategy);
  if (f.budget_frac) c.budget = bmm::Budget::fraction(*f.budget_frac);
  if (f.budget_n) c.budget = bmm::Budget::absolute(*f.budget_n);
  if (f.warn_fid >= 0.0) c.warn_fid = f.warn_fid;
  return c;
}

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--seed", f.seed, "RNG seed")->capture_default_str();
  cmd->add_option("--eps-cov", f.eps_cov, "covariance regularization epsilon")->capture_default_str();
}

void add_budget(CLI::App* cmd, Flags& f) {
  auto* frac = cmd->add_option("--budget-frac", f.budget_frac, "keep this fraction of rows (0, 1]");
  auto* n = cmd->add_option("--budget-n", f.budget_n, "keep exactly this many rows");
  frac->excludes(n);
  cmd->add_option("--strategy", f.strategy, "uniform | stratified")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training-set search by bipartite mode matching"};
  app.require_subcommand(1);
  Flags f;

  auto* build = app.add_subcommand("build-server", "cluster the server and persist the mode tree");
  build->add_option("--server-features", f.server_features)->required();
  build->add_option("--leaves", f.leaves, "J, balanced leaf clusters")->capture_default_str();
  build->add_option("--linkage", f.linkage, "centroid | ward")->capture_default_str();
  build->add_option("--out", f.out, "tree file")->required();
  add_common(build, f);

  auto* match = app.add_subcommand("match", "match target modes to tree nodes, write a manifest");
  match->add_option("--tree", f.tree)->required();
  match->add_option("--server-features", f.server_features)->required();
  match->add_option("--target-features", f.target_features)->required();
  match->add_option("--target-clusters", f.target_clusters, "L, target modes")->capture_default_str();
  match->add_option("--out", f.out, "manifest file")->required();
  match->add_option("--cost-csv", f.cost_csv, "also dump the cost matrix");
  match->add_option("--warn-fid", f.warn_fid, "flag matches with a larger fid");
  add_common(match, f);
  add_budget(match, f);

  auto* eval = app.add_subcommand("evaluate", "fid of a manifest against the target");
  eval->add_option("--manifest", f.manifest)->required();
  eval->add_option("--server-features", f.server_features)->required();
  eval->add_option("--target-features", f.target_features)->required();
  eval->add_option("--out", f.out, "JSON gap report");
  eval->add_option("--eps-cov", f.eps_cov)->capture_default_str();

  auto* prune = app.add_subcommand("prune", "subsample a manifest to a budget");
  prune->add_option("--manifest", f.manifest)->required();
  prune->add_option("--out", f.out)->required();
  prune->add_option("--seed", f.seed)->capture_default_str();
  add_budget(prune, f);

  auto* bench = app.add_subcommand("bench", "hierarchical vs flat vs direct match on a planted world");
  bench->add_option("--world", f.world)->required();
  bench->add_option("--sweep-leaves", f.sweep_leaves)->delimiter(',')->capture_default_str();
  bench->add_option("--sweep-targets", f.sweep_targets)->delimiter(',')->capture_default_str();
  bench->add_option("--linkage", f.linkage)->capture_default_str();
  bench->add_option("--out", f.out, "CSV file (default stdout)");
  add_common(bench, f);

  auto* gen = app.add_subcommand("generate", "write a synthetic world as feature files");
  auto* world_opt = gen->add_option("--world", f.world, "world config JSON");
  gen->add_option("--preset", f.preset, "random | granularity | duplicate")->excludes(world_opt);
  gen->add_option("--seed", f.seed)->capture_default_str();
  gen->add_option("--format", f.format, "binary | csv")->capture_default_str();
  gen->add_option("--out-dir", f.out_dir)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*build) {
      bmm::cmd_build_server({f.server_features, f.out, make_config(f)}, std::cout);
    } else if (*match) {
      bmm::MatchArgs args{f.tree, f.server_features, f.target_features, f.out, std::nullopt,
                          make_config(f)};
      if (!f.cost_csv.empty()) args.cost_csv = f.cost_csv;
      bmm::cmd_match(args, std::cout);
    } else if (*eval) {
      bmm::EvaluateArgs args{f.manifest, f.server_features, f.target_features, std::nullopt,
                             f.eps_cov};
      if (!f.out.empty()) args.out = f.out;
      bmm::cmd_evaluate(args, std::cout);
    } else if (*prune) {
      if (!f.budget_frac && !f.budget_n) throw bmm::ParameterError("prune needs --budget-frac or --budget-n");
      auto config = make_config(f);
      bmm::cmd_prune({f.manifest, f.out, *config.budget, config.strategy, f.seed}, std::cout);
    } else if (*bench) {
      bmm::BenchArgs args{f.world, {f.sweep_leaves, f.sweep_targets}, std::nullopt, make_config(f)};
      if (!f.out.empty()) args.out = f.out;
      bmm::cmd_bench(args, std::cout);
    } else if (*gen) {
      bmm::GenerateArgs args;
      if (!f.world.empty()) args.world = f.world;
      if (!f.preset.empty()) args.preset = f.preset;
      args.seed = f.seed;
      args.out_dir = f.out_dir;
      if (f.format == "csv") {
        args.format = bmm::FeatureFormat::csv;
      } else if (f.format != "binary") {
        throw bmm::ParameterError("--format must be binary or csv");
      }
      bmm::cmd_generate(args, std::cout);
    }
  } catch (const bmm::ParameterError& e) {
    std::cerr << "parameter error: " << e.what() << '\n';
    return kParameter;
  } catch (const bmm::IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const bmm::FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kFormat;
  } catch (const bmm::VersionError& e) {
    std::cerr << "version error: " << e.what() << '\n';
    return kFormat;
  } catch (const bmm::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kValidation;
  } catch (const bmm::InsufficientSamplesError& e) {
    std::cerr << "insufficient samples: " << e.what() << '\n';
    return kValidation;
  } catch (const bmm::InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return kNumerical;
  } catch (const bmm::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUnexpected;
  }
  return kOk;
}
