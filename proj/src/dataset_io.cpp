#include "bmm/dataset_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <string_view>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "bmm/error.hpp"

namespace bmm {
namespace {

using json = nlohmann::json;

std::string with_path(const std::filesystem::path& path, const std::string& what) {
  return path.string() + ": " + what;
}

std::vector<std::uint8_t> read_all_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(with_path(path, "cannot open for reading"));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError(with_path(path, "read failed"));
  return bytes;
}

std::string read_all_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(with_path(path, "cannot open for reading"));
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError(with_path(path, "read failed"));
  return ss.str();
}

void write_all(const std::filesystem::path& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(with_path(path, "cannot open for writing"));
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  out.flush();
  if (!out) throw IoError(with_path(path, "write failed"));
}

// --- little-endian primitives ----------------------------------------------

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
  }
}

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(bytes_[pos_ + i]) << (8 * i);
    }
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string(const char* what) {
    auto len = get<std::uint32_t>(what);
    need(len, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), len);
    pos_ += len;
    return s;
  }

  void need(std::size_t count, const char* what) const {
    if (bytes_.size() - pos_ < count) {
      throw FormatError(std::string("truncated binary feature file while reading ") + what);
    }
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
  if (s.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw ValidationError("string too long for binary feature format");
  }
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

// --- CSV helpers -------------------------------------------------------------

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    auto end = nl == std::string_view::npos ? text.size() : nl;
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return lines;
}

float parse_float(std::string_view token, std::size_t line_no) {
  token = trim(token);
  float value = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec == std::errc::result_out_of_range) {
    throw ValidationError("line " + std::to_string(line_no) + ": value '" +
                          std::string(token) + "' is not finite in 32-bit float");
  }
  if (ec != std::errc{} || ptr != token.data() + token.size()) {
    throw FormatError("line " + std::to_string(line_no) + ": cannot parse '" +
                      std::string(token) + "' as a number");
  }
  return value;
}

void check_text_field(const std::string& s, const char* what) {
  if (s.find_first_of(",\r\n") != std::string::npos) {
    throw ValidationError(std::string(what) + " '" + s +
                          "' contains a comma or line break");
  }
}

FeatureMatrix parse_csv(std::string_view text) {
  auto lines = split_lines(text);
  std::size_t header_idx = 0;
  while (header_idx < lines.size() && trim(lines[header_idx]).empty()) ++header_idx;
  if (header_idx == lines.size()) throw FormatError("empty CSV feature file");
  auto header = split_commas(lines[header_idx]);
  if (header.size() < 3) {
    throw FormatError("CSV header needs sample_id, dataset_label and at least one feature column");
  }
  FeatureMatrix fm;
  fm.d = header.size() - 2;
  for (std::size_t li = header_idx + 1; li < lines.size(); ++li) {
    if (trim(lines[li]).empty()) continue;
    auto fields = split_commas(lines[li]);
    if (fields.size() != header.size()) {
      throw FormatError("line " + std::to_string(li + 1) + ": expected " +
                        std::to_string(header.size()) + " fields, found " +
                        std::to_string(fields.size()));
    }
    fm.sample_ids.emplace_back(trim(fields[0]));
    fm.dataset_labels.emplace_back(trim(fields[1]));
    for (std::size_t c = 2; c < fields.size(); ++c) {
      fm.values.push_back(parse_float(fields[c], li + 1));
    }
    ++fm.n;
  }
  validate(fm);
  return fm;
}

std::string format_csv(const FeatureMatrix& fm) {
  std::string out = "sample_id,dataset_label";
  for (std::size_t c = 0; c < fm.d; ++c) out += ",f" + std::to_string(c);
  out += '\n';
  char buf[64];
  for (std::size_t i = 0; i < fm.n; ++i) {
    out += fm.sample_ids[i];
    out += ',';
    out += fm.dataset_labels[i];
    for (float v : fm.row(i)) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
      out += ',';
      out.append(buf, ptr);
    }
    out += '\n';
  }
  return out;
}

// --- tree JSON ---------------------------------------------------------------

const char* linkage_name(Linkage l) { return l == Linkage::ward ? "ward" : "centroid"; }

Linkage linkage_from_name(const std::string& s) {
  if (s == "centroid") return Linkage::centroid;
  if (s == "ward") return Linkage::ward;
  throw FormatError("unknown linkage '" + s + "'");
}

json node_to_json(const TreeNode& node) {
  json j;
  j["node_id"] = node.id;
  j["parent_id"] = node.parent ? json(*node.parent) : json(nullptr);
  j["child_ids"] = node.children;
  j["height"] = node.height;
  j["member_indices"] = node.members;
  const auto& s = node.stats;
  j["mean"] = std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size());
  json cov = json::array();
  for (Eigen::Index r = 0; r < s.cov.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(s.cov.cols()));
    for (Eigen::Index c = 0; c < s.cov.cols(); ++c) row[static_cast<std::size_t>(c)] = s.cov(r, c);
    cov.push_back(std::move(row));
  }
  j["covariance"] = std::move(cov);
  j["count"] = s.count;
  return j;
}

template <typename T>
T field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw FormatError(std::string("tree file is missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("tree field '") + key + "': " + e.what());
  }
}

TreeNode node_from_json(const json& j, std::size_t dim) {
  TreeNode node;
  node.id = field<std::size_t>(j, "node_id");
  auto parent = j.find("parent_id");
  if (parent == j.end()) throw FormatError("tree node is missing field 'parent_id'");
  if (!parent->is_null()) node.parent = field<std::size_t>(j, "parent_id");
  node.children = field<std::vector<std::size_t>>(j, "child_ids");
  node.height = field<double>(j, "height");
  node.members = field<std::vector<std::size_t>>(j, "member_indices");
  auto mean = field<std::vector<double>>(j, "mean");
  auto cov = field<std::vector<std::vector<double>>>(j, "covariance");
  if (mean.size() != dim || cov.size() != dim) {
    throw FormatError("tree node " + std::to_string(node.id) + " has stats of wrong dimension");
  }
  node.stats.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(dim));
  node.stats.cov.resize(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < dim; ++r) {
    if (cov[r].size() != dim) {
      throw FormatError("tree node " + std::to_string(node.id) + " has a ragged covariance");
    }
    for (std::size_t c = 0; c < dim; ++c) {
      node.stats.cov(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = cov[r][c];
    }
  }
  node.stats.count = field<std::size_t>(j, "count");
  return node;
}

}  // namespace

FeatureFormat format_from_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".csv" ? FeatureFormat::csv : FeatureFormat::binary;
}

std::vector<std::uint8_t> encode_features_binary(const FeatureMatrix& features) {
  validate(features);
  if (features.d > std::numeric_limits<std::uint32_t>::max()) {
    throw ValidationError("feature dimension exceeds u32");
  }
  std::vector<std::uint8_t> out;
  out.reserve(18 + features.values.size() * 4 + features.n * 16);
  out.insert(out.end(), std::begin(kFeatureMagic), std::end(kFeatureMagic));
  put_le<std::uint16_t>(out, kFeatureVersion);
  put_le<std::uint64_t>(out, features.n);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(features.d));
  for (float v : features.values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  for (std::size_t i = 0; i < features.n; ++i) {
    put_string(out, features.sample_ids[i]);
    put_string(out, features.dataset_labels[i]);
  }
  return out;
}

FeatureMatrix decode_features_binary(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kFeatureMagic, 4) != 0) {
    throw FormatError("bad magic: not a BMMF feature file");
  }
  ByteReader reader(bytes);
  reader.get<std::uint32_t>("magic");
  auto version = reader.get<std::uint16_t>("version");
  if (version != kFeatureVersion) {
    throw VersionError("unsupported feature file version " + std::to_string(version) +
                       " (this build reads version " + std::to_string(kFeatureVersion) + ")");
  }
  FeatureMatrix fm;
  auto n = reader.get<std::uint64_t>("n");
  fm.d = reader.get<std::uint32_t>("d");
  // Guard the allocation against a corrupt header before reserving.
  if (fm.d != 0 && n > reader.remaining() / 4 / fm.d) {
    throw FormatError("header claims more values than the file holds");
  }
  fm.n = static_cast<std::size_t>(n);
  fm.values.resize(fm.n * fm.d);
  for (auto& v : fm.values) v = std::bit_cast<float>(reader.get<std::uint32_t>("values"));
  fm.sample_ids.reserve(fm.n);
  fm.dataset_labels.reserve(fm.n);
  for (std::size_t i = 0; i < fm.n; ++i) {
    fm.sample_ids.push_back(reader.get_string("sample id"));
    fm.dataset_labels.push_back(reader.get_string("dataset label"));
  }
  if (reader.remaining() != 0) {
    throw FormatError(std::to_string(reader.remaining()) + " trailing bytes after id block");
  }
  validate(fm);
  return fm;
}

FeatureMatrix read_features(const std::filesystem::path& path, FeatureFormat format) {
  try {
    if (format == FeatureFormat::binary) return decode_features_binary(read_all_bytes(path));
    return parse_csv(read_all_text(path));
  } catch (const IoError&) {
    throw;
  } catch (const FormatError& e) {
    throw FormatError(with_path(path, e.what()));
  } catch (const ValidationError& e) {
    throw ValidationError(with_path(path, e.what()));
  } catch (const VersionError& e) {
    throw VersionError(with_path(path, e.what()));
  }
}

FeatureMatrix read_features(const std::filesystem::path& path) {
  return read_features(path, format_from_path(path));
}

void write_features(const FeatureMatrix& features, const std::filesystem::path& path,
                    FeatureFormat format) {
  if (format == FeatureFormat::binary) {
    auto bytes = encode_features_binary(features);
    write_all(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  } else {
    validate(features);
    for (std::size_t i = 0; i < features.n; ++i) {
      check_text_field(features.sample_ids[i], "sample_id");
      check_text_field(features.dataset_labels[i], "dataset_label");
    }
    write_all(path, format_csv(features));
  }
}

// --- manifest ----------------------------------------------------------------

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::string out = "#bmm-manifest 1\n";
  for (const auto& [key, value] : manifest.metadata) {
    if (key.empty() || key.find_first_of("=\r\n") != std::string::npos ||
        value.find_first_of("\r\n") != std::string::npos) {
      throw ValidationError("manifest metadata '" + key + "' cannot be encoded");
    }
    out += "# " + key + "=" + value + "\n";
  }
  std::unordered_set<std::string_view> seen;
  for (const auto& [id, label] : manifest.entries) {
    check_text_field(id, "sample_id");
    check_text_field(label, "dataset_label");
    if (!seen.insert(id).second) throw ValidationError("duplicate sample_id '" + id + "' in manifest");
    out += id + "," + label + "\n";
  }
  write_all(path, out);
}

Manifest read_manifest(const std::filesystem::path& path) {
  auto text = read_all_text(path);
  auto lines = split_lines(text);
  Manifest m;
  std::unordered_set<std::string> seen;
  bool in_header = true;
  for (std::size_t li = 0; li < lines.size(); ++li) {
    auto line = lines[li];
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (!in_header) {
        throw FormatError(with_path(path, "line " + std::to_string(li + 1) +
                                              ": metadata after the first entry"));
      }
      if (line.rfind("#bmm-manifest", 0) == 0) {
        if (trim(line.substr(13)) != "1") {
          throw VersionError(with_path(path, "unsupported manifest version"));
        }
        continue;
      }
      auto body = line.substr(1);
      if (!body.empty() && body.front() == ' ') body.remove_prefix(1);
      auto eq = body.find('=');
      if (eq == std::string_view::npos) continue;  // plain comment
      m.metadata.emplace(std::string(body.substr(0, eq)), std::string(body.substr(eq + 1)));
      continue;
    }
    in_header = false;
    auto fields = split_commas(line);
    if (fields.size() != 2) {
      throw FormatError(with_path(path, "line " + std::to_string(li + 1) +
                                            ": expected 'sample_id,dataset_label'"));
    }
    std::string id(fields[0]);
    if (!seen.insert(id).second) {
      throw ValidationError(with_path(path, "duplicate sample_id '" + id + "'"));
    }
    m.entries.emplace_back(std::move(id), std::string(fields[1]));
  }
  return m;
}

// --- tree --------------------------------------------------------------------

std::string tree_to_json(const ModeTree& tree) {
  validate(tree);
  json j;
  j["format"] = "bmm-mode-tree";
  j["version"] = kTreeVersion;
  j["leaf_count"] = tree.leaf_count;
  j["node_count"] = tree.node_count();
  j["linkage"] = linkage_name(tree.linkage);
  j["server_rows"] = tree.server_rows;
  j["dim"] = tree.dim;
  json nodes = json::array();
  for (const auto& node : tree.nodes) nodes.push_back(node_to_json(node));
  j["nodes"] = std::move(nodes);
  return j.dump(1) + "\n";
}

ModeTree tree_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("tree file is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("format", std::string{}) != "bmm-mode-tree") {
    throw FormatError("not a bmm mode tree file");
  }
  auto version = field<int>(j, "version");
  if (version != kTreeVersion) {
    throw VersionError("tree file version " + std::to_string(version) +
                       " is incompatible with this build (expects " +
                       std::to_string(kTreeVersion) + ")");
  }
  ModeTree tree;
  tree.leaf_count = field<std::size_t>(j, "leaf_count");
  tree.linkage = linkage_from_name(field<std::string>(j, "linkage"));
  tree.server_rows = field<std::size_t>(j, "server_rows");
  tree.dim = field<std::size_t>(j, "dim");
  auto nodes = j.find("nodes");
  if (nodes == j.end() || !nodes->is_array()) throw FormatError("tree file has no node array");
  for (const auto& jn : *nodes) tree.nodes.push_back(node_from_json(jn, tree.dim));
  if (field<std::size_t>(j, "node_count") != tree.nodes.size()) {
    throw FormatError("node_count disagrees with the node array");
  }
  validate(tree);
  return tree;
}

void persist_tree(const ModeTree& tree, const std::filesystem::path& path) {
  write_all(path, tree_to_json(tree));
}

ModeTree load_tree(const std::filesystem::path& path) {
  auto text = read_all_text(path);
  try {
    return tree_from_json(text);
  } catch (const VersionError& e) {
    throw VersionError(with_path(path, e.what()));
  } catch (const FormatError& e) {
    throw FormatError(with_path(path, e.what()));
  } catch (const ValidationError& e) {
    throw ValidationError(with_path(path, e.what()));
  }
}

}  // namespace bmm
