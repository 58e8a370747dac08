#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "bmm/feature_matrix.hpp"
#include "bmm/mode_tree.hpp"

namespace bmm {

enum class FeatureFormat { binary, csv };

/// Binary feature layout, all integers and floats little-endian:
///
///   "BMMF" | u16 version | u64 n | u32 d | n*d f32 (row-major)
///   | n x (u32 len, id bytes, u32 len, label bytes)
///
/// Ids and labels are UTF-8. Trailing bytes are rejected.
inline constexpr char kFeatureMagic[4] = {'B', 'M', 'M', 'F'};
inline constexpr std::uint16_t kFeatureVersion = 1;

/// `.csv` (any case) selects csv, everything else binary.
FeatureFormat format_from_path(const std::filesystem::path& path);

FeatureMatrix read_features(const std::filesystem::path& path, FeatureFormat format);
FeatureMatrix read_features(const std::filesystem::path& path);
void write_features(const FeatureMatrix& features, const std::filesystem::path& path,
                    FeatureFormat format);

std::vector<std::uint8_t> encode_features_binary(const FeatureMatrix& features);
FeatureMatrix decode_features_binary(const std::vector<std::uint8_t>& bytes);

/// Ordered (sample_id, dataset_label) list plus free-form metadata.
struct Manifest {
  std::vector<std::pair<std::string, std::string>> entries;
  std::map<std::string, std::string> metadata;

  bool operator==(const Manifest&) const = default;
};

/// Text layout:
///
///   #bmm-manifest 1
///   # key=value            (one per metadata entry, sorted by key)
///   sample_id,dataset_label
///   ...
///
/// Ids and labels may not contain ',', '\r' or '\n'; metadata keys may not
/// contain '='; neither may contain newlines.
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

/// Mode trees are persisted as JSON (see README for the field list).
inline constexpr int kTreeVersion = 1;

void persist_tree(const ModeTree& tree, const std::filesystem::path& path);
ModeTree load_tree(const std::filesystem::path& path);
std::string tree_to_json(const ModeTree& tree);
ModeTree tree_from_json(const std::string& text);

}  // namespace bmm
