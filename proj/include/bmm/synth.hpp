#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bmm/clustering.hpp"
#include "bmm/feature_matrix.hpp"
#include "bmm/matching.hpp"
#include "bmm/mode_tree.hpp"

namespace bmm {

struct SubMode {
  Eigen::VectorXd offset;  // relative to the super-mode centre
  double scale = 1.0;      // isotropic standard deviation
  std::size_t n = 0;
  std::string dataset;     // label of the generated server rows
};

struct SuperMode {
  Eigen::VectorXd center;
  std::vector<SubMode> sub_modes;
};

/// A target mode drawn from one planted sub mode, or from a whole super mode
/// when `sub` is empty, with a mean shift and a covariance scale multiplier.
struct TargetSpec {
  std::size_t super = 0;
  std::optional<std::size_t> sub;
  Eigen::VectorXd shift;
  double scale_multiplier = 1.0;
  std::size_t n = 0;
};

struct PlantedWorld {
  std::size_t d = 0;
  std::vector<SuperMode> super_modes;
  std::vector<TargetSpec> targets;
  std::uint64_t seed = 0;
};

/// (super, sub) position in the planted hierarchy; no sub means the whole
/// super mode.
struct PlantedRef {
  std::size_t super = 0;
  std::optional<std::size_t> sub;

  bool operator==(const PlantedRef&) const = default;
};

struct GeneratedWorld {
  FeatureMatrix server;
  FeatureMatrix target;
  /// Planted (super, sub) of each server row.
  std::vector<PlantedRef> server_origin;
  /// Index into PlantedWorld::targets of each target row.
  std::vector<std::size_t> target_origin;
  /// Planted reference of each TargetSpec.
  std::vector<PlantedRef> truth;
};

/// Throws ParameterError on a degenerate world: non-positive scales,
/// counts below 2, mismatched dimensions, super centres closer than 8x the
/// largest sub-mode scale, shifts above half the sub-mode scale, or scale
/// multipliers outside [0.8, 1.25].
void validate(const PlantedWorld& world);

/// Isotropic Gaussian samples of every sub mode (server) and every
/// TargetSpec (target). Deterministic in world.seed.
GeneratedWorld generate(const PlantedWorld& world);

PlantedWorld world_from_json(const std::string& text);
std::string world_to_json(const PlantedWorld& world);
PlantedWorld load_world(const std::filesystem::path& path);
void save_world(const PlantedWorld& world, const std::filesystem::path& path);

struct RandomWorldSpec {
  std::size_t d = 16;
  std::size_t supers = 5;
  std::size_t subs_per_super = 4;
  std::size_t rows_per_sub = 250;
  double sub_scale = 1.0;
  double sub_radius = 4.0;      // distance of sub centres from their super centre
  double super_separation = 30.0;
  std::size_t whole_super_targets = 1;
  std::size_t single_sub_targets = 2;
  std::size_t rows_per_target = 300;
};

/// Random well-separated world whose targets cover a strict subset of the
/// server's super modes.
PlantedWorld random_world(const RandomWorldSpec& spec, std::uint64_t seed);

/// Target = one whole super mode plus single sub modes of two others.
PlantedWorld granularity_probe_world(std::uint64_t seed);

/// Two target modes drawn from the same server sub mode, so both share one
/// nearest server mode.
PlantedWorld duplicate_world(std::uint64_t seed);

/// Exhaustive minimum over injective maps, enumerated in lexicographic order
/// with strict improvement (so the lexicographically smallest optimum wins).
/// Refuses L > 7 or H > 10.
Assignment oracle_assignment(const Eigen::MatrixXd& cost);

/// Exact minimum SSE over all partitions with sizes floor(n/k) / ceil(n/k).
/// Refuses n > 8 or k > 3.
double oracle_balanced_partition(const FeatureMatrix& features, std::size_t k);

/// Planted reference per target mode and per server row.
struct Correspondence {
  std::vector<PlantedRef> target_modes;
  std::vector<PlantedRef> server_rows;
};

/// Labels every target cluster with the planted TargetSpec that generated
/// most of its rows (lowest TargetSpec index on ties).
Correspondence correspondence_for_clusters(const GeneratedWorld& world,
                                           const FlatClustering& target_clusters);

/// Fraction of target modes whose matched node is dominated (> 50% of its
/// members) by rows of the planted mode, or of a planted grouping above or
/// below it. Unmatched targets count as misses.
double matching_precision(const SelectionResult& result, const Correspondence& truth,
                          const ModeTree& tree);

}  // namespace bmm
