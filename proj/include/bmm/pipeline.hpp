#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bmm/clustering.hpp"
#include "bmm/dataset_io.hpp"
#include "bmm/domain_gap.hpp"
#include "bmm/matching.hpp"
#include "bmm/mode_tree.hpp"
#include "bmm/pruning.hpp"
#include "bmm/synth.hpp"

namespace bmm {

inline constexpr const char* kToolVersion = "bmm 1.0.0";

struct PipelineConfig {
  std::size_t leaves = 128;          // J
  std::size_t target_clusters = 20;  // L
  std::uint64_t seed = 0;
  Linkage linkage = Linkage::centroid;
  double eps_cov = kDefaultCovEpsilon;
  std::optional<Budget> budget;
  PruneStrategy strategy = PruneStrategy::stratified;
  /// Matches above this fid are flagged in reports; never changes results.
  double warn_fid = std::numeric_limits<double>::infinity();

  /// J >= 1, L >= 1, eps_cov > 0. The J >= L relation is checked where both
  /// are known (match, bench).
  void validate() const;
};

Linkage linkage_from_name(const std::string& name);
const char* linkage_name(Linkage linkage);

/// Balanced k-means into J leaves, then agglomeration into 2J - 1 nodes.
ModeTree build_server_tree(const FeatureMatrix& server, const PipelineConfig& config);

enum class CandidateSet { all_nodes, leaves_only };

/// Stats of every target cluster; a cluster with fewer than two rows is an
/// InsufficientSamplesError that advises a smaller L.
std::vector<ModeStats> target_mode_stats(const FeatureMatrix& target,
                                         const FlatClustering& clusters);

AssignmentProblem build_problem(const ModeTree& tree, std::span<const ModeStats> targets,
                                CandidateSet candidates, double eps_cov);

struct MatchOutcome {
  FlatClustering target_clusters;
  std::vector<ModeStats> target_modes;
  AssignmentProblem problem;
  Assignment assignment;
  SelectionResult selection;
};

/// Clusters the target into L modes, matches them one-to-one to tree nodes
/// by minimum total fid and materializes the deduplicated selection.
MatchOutcome match_target(const ModeTree& tree, const FeatureMatrix& server,
                          const FeatureMatrix& target, const PipelineConfig& config,
                          CandidateSet candidates = CandidateSet::all_nodes);

Manifest selection_manifest(const SelectionResult& selection, const FeatureMatrix& server,
                            std::map<std::string, std::string> metadata = {});

struct MatchReportRow {
  std::size_t target = 0;
  std::size_t node_id = 0;
  double fid = 0.0;
  std::size_t node_size = 0;
  std::size_t node_depth = 0;
  bool above_warning = false;
};

struct MatchReport {
  std::vector<MatchReportRow> rows;
  double total_cost = 0.0;
  std::size_t selected_nodes = 0;
  std::size_t selected_rows = 0;
  std::map<std::string, std::size_t> composition;
  double warn_fid = std::numeric_limits<double>::infinity();
};

MatchReport make_match_report(const ModeTree& tree, const MatchOutcome& outcome, double warn_fid);
std::string report_text(const MatchReport& report);
std::string report_json(const MatchReport& report);

/// Per-depth node counts and member-size ranges.
std::string tree_summary(const ModeTree& tree);

struct GapReport {
  double selected_fid = 0.0;
  double server_fid = 0.0;
  std::size_t selected_rows = 0;
  std::size_t server_rows = 0;
  std::size_t target_rows = 0;
};

/// fid(selected, target) beside fid(full server, target). Every manifest id
/// must exist in the server features.
GapReport evaluate_manifest(const Manifest& manifest, const FeatureMatrix& server,
                            const FeatureMatrix& target, double eps_cov = kDefaultCovEpsilon);

struct BenchRow {
  std::string variant;  // hierarchical | flat | direct
  std::size_t leaves = 0;
  std::size_t target_clusters = 0;
  double fid = 0.0;
  double precision = 0.0;
  double runtime_ms = 0.0;
  std::size_t distinct_nodes = 0;
  std::size_t unmatched = 0;
};

struct BenchSweep {
  std::vector<std::size_t> leaves;
  std::vector<std::size_t> target_clusters;
};

/// Every (J, L) cell runs three variants on the generated world:
/// hierarchical BMM over all tree nodes, flat BMM over the J leaves only,
/// and direct match (duplicates allowed) over all tree nodes. runtime_ms
/// covers cost matrix, matching and selection; the shared tree build is
/// excluded.
std::vector<BenchRow> run_bench(const PlantedWorld& world, const BenchSweep& sweep,
                                const PipelineConfig& config);
std::string bench_csv(std::span<const BenchRow> rows);

// --- commands ----------------------------------------------------------------

struct BuildServerArgs {
  std::filesystem::path server_features;
  std::filesystem::path out;
  PipelineConfig config;
};

struct MatchArgs {
  std::filesystem::path tree;
  std::filesystem::path server_features;
  std::filesystem::path target_features;
  std::filesystem::path out;  // manifest; reports go to <out>.report.{txt,json}
  std::optional<std::filesystem::path> cost_csv;
  PipelineConfig config;
};

struct EvaluateArgs {
  std::filesystem::path manifest;
  std::filesystem::path server_features;
  std::filesystem::path target_features;
  std::optional<std::filesystem::path> out;  // JSON gap report
  double eps_cov = kDefaultCovEpsilon;
};

struct PruneArgs {
  std::filesystem::path manifest;
  std::filesystem::path out;
  Budget budget;
  PruneStrategy strategy = PruneStrategy::stratified;
  std::uint64_t seed = 0;
};

struct BenchArgs {
  std::filesystem::path world;
  BenchSweep sweep;
  std::optional<std::filesystem::path> out;  // CSV; stdout when absent
  PipelineConfig config;
};

struct GenerateArgs {
  std::optional<std::filesystem::path> world;
  std::optional<std::string> preset;  // random | granularity | duplicate
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  FeatureFormat format = FeatureFormat::binary;
};

void cmd_build_server(const BuildServerArgs& args, std::ostream& log);
void cmd_match(const MatchArgs& args, std::ostream& log);
GapReport cmd_evaluate(const EvaluateArgs& args, std::ostream& log);
void cmd_prune(const PruneArgs& args, std::ostream& log);
void cmd_bench(const BenchArgs& args, std::ostream& log);
void cmd_generate(const GenerateArgs& args, std::ostream& log);

}  // namespace bmm
