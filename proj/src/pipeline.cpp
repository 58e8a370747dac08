#include "bmm/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string_view>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "bmm/error.hpp"

namespace bmm {
namespace {

using json = nlohmann::json;

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << text;
  out.flush();
  if (!out) throw IoError(path.string() + ": write failed");
}

std::filesystem::path with_suffix(const std::filesystem::path& p, const std::string& suffix) {
  return std::filesystem::path(p.string() + suffix);
}

// Shortest text that parses back to the same double.
std::string fmt_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void require_same_dim(const FeatureMatrix& a, const FeatureMatrix& b, const char* what) {
  if (a.d != b.d) {
    throw ValidationError(std::string(what) + ": feature dimensions differ (" + std::to_string(a.d) +
                          " vs " + std::to_string(b.d) + ")");
  }
}

double selection_fid(const FeatureMatrix& server, std::span<const std::size_t> rows,
                     const ModeStats& target_stats, double eps) {
  return fid(gaussian_stats(server, rows), target_stats, eps);
}

}  // namespace

void PipelineConfig::validate() const {
  if (leaves == 0) throw ParameterError("--leaves (J) must be at least 1");
  if (target_clusters == 0) throw ParameterError("--target-clusters (L) must be at least 1");
  if (!(eps_cov > 0.0) || !std::isfinite(eps_cov)) throw ParameterError("--eps-cov must be positive");
  if (budget) {
    bool ok = budget->kind == Budget::Kind::fraction
                  ? budget->value > 0.0 && budget->value <= 1.0
                  : budget->value >= 1.0 && budget->value == std::floor(budget->value);
    if (!ok) throw ParameterError("invalid budget " + budget->describe());
  }
}

Linkage linkage_from_name(const std::string& name) {
  if (name == "centroid") return Linkage::centroid;
  if (name == "ward") return Linkage::ward;
  throw ParameterError("unknown linkage '" + name + "' (centroid|ward)");
}

const char* linkage_name(Linkage linkage) {
  return linkage == Linkage::ward ? "ward" : "centroid";
}

ModeTree build_server_tree(const FeatureMatrix& server, const PipelineConfig& config) {
  config.validate();
  if (config.leaves > server.n) {
    throw ParameterError("J = " + std::to_string(config.leaves) + " leaves exceeds the " +
                         std::to_string(server.n) + " server rows");
  }
  auto leaves = fit_balanced_kmeans(server, config.leaves, config.seed);
  return build_hierarchy(leaves, server, config.linkage);
}

std::vector<ModeStats> target_mode_stats(const FeatureMatrix& target,
                                         const FlatClustering& clusters) {
  auto members = clusters.members();
  std::vector<ModeStats> stats;
  stats.reserve(members.size());
  for (std::size_t c = 0; c < members.size(); ++c) {
    if (members[c].size() < 2) {
      throw InsufficientSamplesError("target mode " + std::to_string(c) + " has " +
                                     std::to_string(members[c].size()) +
                                     " row(s); at least 2 are needed, try a smaller L "
                                     "(--target-clusters)");
    }
    stats.push_back(gaussian_stats(target, members[c]));
  }
  return stats;
}

AssignmentProblem build_problem(const ModeTree& tree, std::span<const ModeStats> targets,
                                CandidateSet candidates, double eps_cov) {
  std::vector<std::size_t> node_ids;
  std::vector<ModeStats> columns;
  std::size_t count = candidates == CandidateSet::leaves_only ? tree.leaf_count : tree.node_count();
  for (std::size_t id = 0; id < count; ++id) {
    node_ids.push_back(id);
    columns.push_back(tree.nodes[id].stats);
  }
  auto problem = make_problem(cost_matrix(targets, columns, eps_cov), std::move(node_ids));
  for (std::size_t y = 0; y < problem.target_ids.size(); ++y) {
    problem.target_ids[y] = "target_mode_" + std::to_string(y);
  }
  return problem;
}

MatchOutcome match_target(const ModeTree& tree, const FeatureMatrix& server,
                          const FeatureMatrix& target, const PipelineConfig& config,
                          CandidateSet candidates) {
  config.validate();
  validate(server);
  validate(target);
  require_same_dim(server, target, "match");
  if (server.n != tree.server_rows || server.d != tree.dim) {
    throw ValidationError("server features do not match the tree (tree built over " +
                          std::to_string(tree.server_rows) + " x " + std::to_string(tree.dim) +
                          ", features are " + std::to_string(server.n) + " x " +
                          std::to_string(server.d) + ")");
  }
  if (config.target_clusters > tree.leaf_count) {
    throw ParameterError("L = " + std::to_string(config.target_clusters) +
                         " target clusters exceeds J = " + std::to_string(tree.leaf_count) +
                         " server leaves");
  }
  if (config.target_clusters > target.n) {
    throw ParameterError("L = " + std::to_string(config.target_clusters) +
                         " exceeds the number of target rows");
  }
  MatchOutcome out;
  out.target_clusters = fit_kmeans(target, config.target_clusters, config.seed);
  out.target_modes = target_mode_stats(target, out.target_clusters);
  out.problem = build_problem(tree, out.target_modes, candidates, config.eps_cov);
  out.assignment = solve_assignment(out.problem);
  out.selection = select_training_set(tree, out.assignment, out.problem, server.dataset_labels);
  if (config.budget) {
    out.selection = prune(out.selection, *config.budget, config.strategy, config.seed);
  }
  return out;
}

Manifest selection_manifest(const SelectionResult& selection, const FeatureMatrix& server,
                            std::map<std::string, std::string> metadata) {
  Manifest m;
  m.metadata = std::move(metadata);
  m.entries.reserve(selection.sample_rows.size());
  for (auto r : selection.sample_rows) {
    m.entries.emplace_back(server.sample_ids.at(r), server.dataset_labels.at(r));
  }
  return m;
}

MatchReport make_match_report(const ModeTree& tree, const MatchOutcome& outcome, double warn_fid) {
  MatchReport report;
  report.warn_fid = warn_fid;
  for (const auto& [target, match] : outcome.selection.per_target) {
    MatchReportRow row;
    row.target = target;
    row.node_id = match.node_id;
    row.fid = match.fid;
    row.node_size = tree.nodes.at(match.node_id).members.size();
    row.node_depth = tree.depth(match.node_id);
    row.above_warning = match.fid > warn_fid;
    report.rows.push_back(row);
  }
  report.total_cost = outcome.assignment.total_cost;
  report.selected_nodes = outcome.selection.selected_nodes.size();
  report.selected_rows = outcome.selection.sample_rows.size();
  report.composition = outcome.selection.composition;
  return report;
}

std::string report_text(const MatchReport& report) {
  std::ostringstream os;
  os << "target  node  fid                 size    depth\n";
  for (const auto& r : report.rows) {
    os << std::left << std::setw(8) << r.target << std::setw(6) << r.node_id << std::setw(20)
       << std::setprecision(10) << r.fid << std::setw(8) << r.node_size << r.node_depth
       << (r.above_warning ? "  WARN fid above threshold" : "") << '\n';
  }
  os << "total_cost " << fmt_double(report.total_cost) << '\n';
  os << "selected_nodes " << report.selected_nodes << '\n';
  os << "selected_rows " << report.selected_rows << '\n';
  os << "composition\n";
  for (const auto& [label, count] : report.composition) {
    double share = report.selected_rows ? 100.0 * static_cast<double>(count) /
                                              static_cast<double>(report.selected_rows)
                                        : 0.0;
    os << "  " << label << ' ' << count << " (" << std::setprecision(4) << share << "%)\n";
  }
  return os.str();
}

std::string report_json(const MatchReport& report) {
  json j;
  json matches = json::array();
  for (const auto& r : report.rows) {
    matches.push_back({{"target_mode", r.target},
                       {"node_id", r.node_id},
                       {"fid", r.fid},
                       {"node_size", r.node_size},
                       {"node_depth", r.node_depth},
                       {"above_warning", r.above_warning}});
  }
  j["matches"] = std::move(matches);
  j["total_cost"] = report.total_cost;
  j["selected_nodes"] = report.selected_nodes;
  j["selected_rows"] = report.selected_rows;
  j["composition"] = report.composition;
  if (std::isfinite(report.warn_fid)) j["warn_fid"] = report.warn_fid;
  return j.dump(1) + "\n";
}

std::string tree_summary(const ModeTree& tree) {
  struct Level {
    std::size_t nodes = 0;
    std::size_t min_size = std::numeric_limits<std::size_t>::max();
    std::size_t max_size = 0;
  };
  std::map<std::size_t, Level> levels;
  for (const auto& node : tree.nodes) {
    auto& lv = levels[tree.depth(node.id)];
    ++lv.nodes;
    lv.min_size = std::min(lv.min_size, node.members.size());
    lv.max_size = std::max(lv.max_size, node.members.size());
  }
  std::ostringstream os;
  os << "J " << tree.leaf_count << "\nH " << tree.node_count() << "\nlinkage "
     << linkage_name(tree.linkage) << "\nrows " << tree.server_rows << "\ndim " << tree.dim
     << "\ndepth  nodes  min_size  max_size\n";
  for (const auto& [depth, lv] : levels) {
    os << std::left << std::setw(7) << depth << std::setw(7) << lv.nodes << std::setw(10)
       << lv.min_size << lv.max_size << '\n';
  }
  return os.str();
}

GapReport evaluate_manifest(const Manifest& manifest, const FeatureMatrix& server,
                            const FeatureMatrix& target, double eps_cov) {
  validate(server);
  validate(target);
  require_same_dim(server, target, "evaluate");
  std::unordered_map<std::string_view, std::size_t> index;
  index.reserve(server.n);
  for (std::size_t i = 0; i < server.n; ++i) index.emplace(server.sample_ids[i], i);
  std::vector<std::size_t> rows;
  rows.reserve(manifest.entries.size());
  for (const auto& [id, label] : manifest.entries) {
    auto it = index.find(id);
    if (it == index.end()) {
      throw ValidationError("manifest sample_id '" + id + "' is not in the server features");
    }
    rows.push_back(it->second);
  }
  std::sort(rows.begin(), rows.end());
  auto target_stats = gaussian_stats(target);
  GapReport g;
  g.selected_rows = rows.size();
  g.server_rows = server.n;
  g.target_rows = target.n;
  g.selected_fid = selection_fid(server, rows, target_stats, eps_cov);
  g.server_fid = fid(gaussian_stats(server), target_stats, eps_cov);
  return g;
}

std::vector<BenchRow> run_bench(const PlantedWorld& world, const BenchSweep& sweep,
                                const PipelineConfig& config) {
  using clock = std::chrono::steady_clock;
  auto generated = generate(world);
  const auto& server = generated.server;
  const auto& target = generated.target;
  auto target_stats = gaussian_stats(target);
  std::vector<BenchRow> rows;
  for (auto j : sweep.leaves) {
    PipelineConfig cfg = config;
    cfg.leaves = j;
    cfg.budget.reset();
    auto tree = build_server_tree(server, cfg);
    for (auto l : sweep.target_clusters) {
      cfg.target_clusters = l;
      if (l > j) {
        throw ParameterError("bench cell J = " + std::to_string(j) + ", L = " + std::to_string(l) +
                             " violates L <= J");
      }
      auto clusters = fit_kmeans(target, l, cfg.seed);
      auto modes = target_mode_stats(target, clusters);
      auto truth = correspondence_for_clusters(generated, clusters);

      auto record = [&](const char* name, const SelectionResult& sel, clock::time_point start,
                        std::size_t unmatched) {
        double elapsed = std::chrono::duration<double, std::milli>(clock::now() - start).count();
        BenchRow row;
        row.variant = name;
        row.leaves = j;
        row.target_clusters = l;
        row.fid = selection_fid(server, sel.sample_rows, target_stats, cfg.eps_cov);
        row.precision = matching_precision(sel, truth, tree);
        row.runtime_ms = elapsed;
        row.distinct_nodes = sel.selected_nodes.size();
        row.unmatched = unmatched;
        rows.push_back(row);
      };

      auto t0 = clock::now();
      auto hp = build_problem(tree, modes, CandidateSet::all_nodes, cfg.eps_cov);
      auto ha = solve_assignment(hp);
      record("hierarchical", select_training_set(tree, ha, hp, server.dataset_labels), t0, 0);

      t0 = clock::now();
      auto fp = build_problem(tree, modes, CandidateSet::leaves_only, cfg.eps_cov);
      auto fa = solve_assignment(fp);
      record("flat", select_training_set(tree, fa, fp, server.dataset_labels), t0, 0);

      t0 = clock::now();
      auto dp = build_problem(tree, modes, CandidateSet::all_nodes, cfg.eps_cov);
      auto dm = direct_match(dp, true);
      record("direct", select_training_set(tree, dm, dp, server.dataset_labels), t0,
             dm.unmatched());
    }
  }
  return rows;
}

std::string bench_csv(std::span<const BenchRow> rows) {
  std::ostringstream os;
  os << "variant,J,L,fid,precision,runtime_ms\n";
  for (const auto& r : rows) {
    os << r.variant << ',' << r.leaves << ',' << r.target_clusters << ',' << fmt_double(r.fid) << ','
       << fmt_double(r.precision) << ',' << std::fixed << std::setprecision(3) << r.runtime_ms
       << std::defaultfloat << '\n';
  }
  return os.str();
}

// --- commands ----------------------------------------------------------------

void cmd_build_server(const BuildServerArgs& args, std::ostream& log) {
  auto server = read_features(args.server_features);
  auto tree = build_server_tree(server, args.config);
  persist_tree(tree, args.out);
  log << tree_summary(tree) << "tree written to " << args.out.string() << '\n';
}

void cmd_match(const MatchArgs& args, std::ostream& log) {
  auto tree = load_tree(args.tree);
  auto server = read_features(args.server_features);
  auto target = read_features(args.target_features);
  auto outcome = match_target(tree, server, target, args.config);

  std::map<std::string, std::string> meta{
      {"tool", kToolVersion},
      {"command", "match"},
      {"seed", std::to_string(args.config.seed)},
      {"leaves", std::to_string(tree.leaf_count)},
      {"target_clusters", std::to_string(args.config.target_clusters)},
      {"eps_cov", fmt_double(args.config.eps_cov)},
  };
  if (args.config.budget) {
    meta["budget"] = args.config.budget->describe();
    meta["strategy"] = strategy_name(args.config.strategy);
  }
  write_manifest(selection_manifest(outcome.selection, server, meta), args.out);

  auto report = make_match_report(tree, outcome, args.config.warn_fid);
  auto text = report_text(report);
  write_text(with_suffix(args.out, ".report.txt"), text);
  write_text(with_suffix(args.out, ".report.json"), report_json(report));
  if (args.cost_csv) write_cost_csv(outcome.problem.cost, outcome.problem.node_ids, *args.cost_csv);
  log << text << "manifest written to " << args.out.string() << '\n';
}

GapReport cmd_evaluate(const EvaluateArgs& args, std::ostream& log) {
  auto manifest = read_manifest(args.manifest);
  auto server = read_features(args.server_features);
  auto target = read_features(args.target_features);
  auto gap = evaluate_manifest(manifest, server, target, args.eps_cov);
  log << std::setprecision(10) << "fid_selected_vs_target " << gap.selected_fid << '\n'
      << "fid_server_vs_target   " << gap.server_fid << '\n'
      << "selected_rows " << gap.selected_rows << " / " << gap.server_rows << '\n';
  if (args.out) {
    json j{{"fid_selected_vs_target", gap.selected_fid},
           {"fid_server_vs_target", gap.server_fid},
           {"selected_rows", gap.selected_rows},
           {"server_rows", gap.server_rows},
           {"target_rows", gap.target_rows}};
    write_text(*args.out, j.dump(1) + "\n");
  }
  return gap;
}

void cmd_prune(const PruneArgs& args, std::ostream& log) {
  auto manifest = read_manifest(args.manifest);
  // Manifests carry no node ids, so strata are the dataset labels in order
  // of first appearance.
  std::map<std::string, std::size_t> stratum_of;
  std::vector<std::size_t> strata;
  for (const auto& [id, label] : manifest.entries) {
    auto [it, inserted] = stratum_of.emplace(label, stratum_of.size());
    strata.push_back(it->second);
  }
  auto kept = subsample(strata, args.budget, args.strategy, args.seed);
  Manifest out;
  out.metadata = manifest.metadata;
  out.metadata["prune_budget"] = args.budget.describe();
  out.metadata["prune_strategy"] = strategy_name(args.strategy);
  out.metadata["prune_seed"] = std::to_string(args.seed);
  for (auto pos : kept) out.entries.push_back(manifest.entries[pos]);
  write_manifest(out, args.out);
  log << "kept " << out.entries.size() << " of " << manifest.entries.size() << " rows\n";
}

void cmd_bench(const BenchArgs& args, std::ostream& log) {
  auto world = load_world(args.world);
  auto rows = run_bench(world, args.sweep, args.config);
  auto csv = bench_csv(rows);
  if (args.out) {
    write_text(*args.out, csv);
    log << rows.size() << " rows written to " << args.out->string() << '\n';
  } else {
    log << csv;
  }
}

void cmd_generate(const GenerateArgs& args, std::ostream& log) {
  PlantedWorld world;
  if (args.world) {
    world = load_world(*args.world);
  } else {
    std::string preset = args.preset.value_or("random");
    if (preset == "random") {
      world = random_world({}, args.seed);
    } else if (preset == "granularity") {
      world = granularity_probe_world(args.seed);
    } else if (preset == "duplicate") {
      world = duplicate_world(args.seed);
    } else {
      throw ParameterError("unknown preset '" + preset + "' (random|granularity|duplicate)");
    }
  }
  auto gen = generate(world);
  std::filesystem::create_directories(args.out_dir);
  const char* ext = args.format == FeatureFormat::csv ? ".csv" : ".bmmf";
  save_world(world, args.out_dir / "world.json");
  write_features(gen.server, args.out_dir / (std::string("server") + ext), args.format);
  write_features(gen.target, args.out_dir / (std::string("target") + ext), args.format);
  log << "server " << gen.server.n << " x " << gen.server.d << ", target " << gen.target.n
      << " rows written to " << args.out_dir.string() << '\n';
}

}  // namespace bmm
