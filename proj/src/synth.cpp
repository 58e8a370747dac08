#include "bmm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bmm/error.hpp"
#include "bmm/pruning.hpp"

namespace bmm {
namespace {

using json = nlohmann::json;

std::vector<double> to_vec(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

template <typename T>
T required(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw FormatError(std::string("world config is missing '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("world config field '") + key + "': " + e.what());
  }
}

Eigen::VectorXd random_direction(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(static_cast<Eigen::Index>(d));
  do {
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = normal(rng);
  } while (v.norm() < 1e-12);
  return v / v.norm();
}

// Super centres drawn from N(0, spread^2 I), rejecting any closer than
// `separation` to an earlier one.
std::vector<Eigen::VectorXd> separated_centres(std::size_t count, std::size_t d, double separation,
                                               std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  double spread = separation * std::max(1.0, std::cbrt(static_cast<double>(count)));
  std::vector<Eigen::VectorXd> centres;
  while (centres.size() < count) {
    Eigen::VectorXd c(static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < c.size(); ++i) c(i) = spread * normal(rng);
    bool ok = std::all_of(centres.begin(), centres.end(),
                          [&](const Eigen::VectorXd& o) { return (o - c).norm() >= separation; });
    if (ok) centres.push_back(std::move(c));
  }
  return centres;
}

// Shift norm is uniform in [0, shift_frac * scale]; multiplier uniform in
// [1 / spread, spread].
TargetSpec perturbed_target(std::size_t super, std::optional<std::size_t> sub, double scale,
                            std::size_t d, std::size_t n, std::mt19937_64& rng,
                            double shift_frac = 0.5, double spread = 1.25) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> mult(1.0 / spread, spread);
  TargetSpec t;
  t.super = super;
  t.sub = sub;
  t.shift = random_direction(d, rng) * (shift_frac * scale * unit(rng));
  t.scale_multiplier = mult(rng);
  t.n = n;
  return t;
}

SuperMode make_super(Eigen::VectorXd centre, std::size_t subs, double radius, double scale,
                     std::size_t rows, const std::string& dataset, std::mt19937_64& rng) {
  SuperMode s;
  s.center = std::move(centre);
  // Sub centres sit on a sphere of `radius`, at least `radius` apart.
  while (s.sub_modes.size() < subs) {
    SubMode m;
    m.offset = random_direction(static_cast<std::size_t>(s.center.size()), rng) * radius;
    bool ok = std::all_of(s.sub_modes.begin(), s.sub_modes.end(), [&](const SubMode& o) {
      return (o.offset - m.offset).norm() >= radius;
    });
    if (!ok) continue;
    m.scale = scale;
    m.n = rows;
    m.dataset = dataset;
    s.sub_modes.push_back(std::move(m));
  }
  return s;
}

double largest_sub_scale(const SuperMode& s) {
  double worst = 0.0;
  for (const auto& m : s.sub_modes) worst = std::max(worst, m.scale);
  return worst;
}

}  // namespace

void validate(const PlantedWorld& world) {
  if (world.d == 0) throw ParameterError("world dimension must be positive");
  if (world.super_modes.empty()) throw ParameterError("world needs at least one super mode");
  double max_scale = 0.0;
  for (std::size_t s = 0; s < world.super_modes.size(); ++s) {
    const auto& sm = world.super_modes[s];
    if (static_cast<std::size_t>(sm.center.size()) != world.d) {
      throw ParameterError("super mode " + std::to_string(s) + " centre has wrong dimension");
    }
    if (sm.sub_modes.empty()) throw ParameterError("super mode " + std::to_string(s) + " has no sub modes");
    for (std::size_t j = 0; j < sm.sub_modes.size(); ++j) {
      const auto& m = sm.sub_modes[j];
      std::string where = "sub mode (" + std::to_string(s) + ", " + std::to_string(j) + ")";
      if (static_cast<std::size_t>(m.offset.size()) != world.d) {
        throw ParameterError(where + " offset has wrong dimension");
      }
      if (!(m.scale > 0.0) || !std::isfinite(m.scale)) {
        throw ParameterError(where + " has non-positive scale");
      }
      if (m.n < 2) throw ParameterError(where + " needs at least 2 rows");
      max_scale = std::max(max_scale, m.scale);
    }
  }
  for (std::size_t a = 0; a < world.super_modes.size(); ++a) {
    for (std::size_t b = a + 1; b < world.super_modes.size(); ++b) {
      double dist = (world.super_modes[a].center - world.super_modes[b].center).norm();
      if (dist < 8.0 * max_scale) {
        throw ParameterError("super modes " + std::to_string(a) + " and " + std::to_string(b) +
                             " are closer than 8x the largest sub-mode scale");
      }
    }
  }
  for (std::size_t t = 0; t < world.targets.size(); ++t) {
    const auto& ts = world.targets[t];
    std::string where = "target " + std::to_string(t);
    if (ts.super >= world.super_modes.size()) throw ParameterError(where + " references an unknown super mode");
    const auto& sm = world.super_modes[ts.super];
    if (ts.sub && *ts.sub >= sm.sub_modes.size()) throw ParameterError(where + " references an unknown sub mode");
    if (static_cast<std::size_t>(ts.shift.size()) != world.d) throw ParameterError(where + " shift has wrong dimension");
    if (ts.n < 2) throw ParameterError(where + " needs at least 2 rows");
    if (!(ts.scale_multiplier >= 0.8 && ts.scale_multiplier <= 1.25)) {
      throw ParameterError(where + " scale multiplier outside [0.8, 1.25]");
    }
    double scale = ts.sub ? sm.sub_modes[*ts.sub].scale : largest_sub_scale(sm);
    if (ts.shift.norm() > 0.5 * scale * (1.0 + 1e-12)) {
      throw ParameterError(where + " shift exceeds half the sub-mode scale");
    }
  }
}

GeneratedWorld generate(const PlantedWorld& world) {
  validate(world);
  GeneratedWorld out;
  std::mt19937_64 rng(world.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto d = world.d;

  auto emit = [&](FeatureMatrix& fm, const Eigen::VectorXd& mean, double scale) {
    for (std::size_t c = 0; c < d; ++c) {
      fm.values.push_back(static_cast<float>(mean(static_cast<Eigen::Index>(c)) + scale * normal(rng)));
    }
    ++fm.n;
  };

  out.server.d = d;
  for (std::size_t s = 0; s < world.super_modes.size(); ++s) {
    const auto& sm = world.super_modes[s];
    for (std::size_t j = 0; j < sm.sub_modes.size(); ++j) {
      const auto& m = sm.sub_modes[j];
      Eigen::VectorXd mean = sm.center + m.offset;
      for (std::size_t i = 0; i < m.n; ++i) {
        emit(out.server, mean, m.scale);
        out.server.sample_ids.push_back("srv-" + std::to_string(s) + "-" + std::to_string(j) + "-" +
                                        std::to_string(i));
        out.server.dataset_labels.push_back(m.dataset.empty() ? "src" + std::to_string(s) : m.dataset);
        out.server_origin.push_back({s, j});
      }
    }
  }

  out.target.d = d;
  for (std::size_t t = 0; t < world.targets.size(); ++t) {
    const auto& ts = world.targets[t];
    const auto& sm = world.super_modes[ts.super];
    out.truth.push_back({ts.super, ts.sub});
    std::vector<std::size_t> per_sub(sm.sub_modes.size(), 0);
    if (ts.sub) {
      per_sub[*ts.sub] = ts.n;
    } else {
      std::vector<std::size_t> weights;
      for (const auto& m : sm.sub_modes) weights.push_back(m.n);
      per_sub = apportion(weights, ts.n);
    }
    std::size_t row = 0;
    for (std::size_t j = 0; j < sm.sub_modes.size(); ++j) {
      const auto& m = sm.sub_modes[j];
      Eigen::VectorXd mean = sm.center + m.offset + ts.shift;
      for (std::size_t i = 0; i < per_sub[j]; ++i, ++row) {
        emit(out.target, mean, m.scale * ts.scale_multiplier);
        out.target.sample_ids.push_back("tgt-" + std::to_string(t) + "-" + std::to_string(row));
        out.target.dataset_labels.push_back("target");
        out.target_origin.push_back(t);
      }
    }
  }
  return out;
}

PlantedWorld world_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("world config is not valid JSON: ") + e.what());
  }
  PlantedWorld w;
  w.d = required<std::size_t>(j, "d");
  w.seed = j.value("seed", std::uint64_t{0});
  for (const auto& js : required<json>(j, "super_modes")) {
    SuperMode s;
    s.center = from_vec(required<std::vector<double>>(js, "center"));
    for (const auto& jm : required<json>(js, "sub_modes")) {
      SubMode m;
      m.offset = from_vec(required<std::vector<double>>(jm, "offset"));
      m.scale = required<double>(jm, "scale");
      m.n = required<std::size_t>(jm, "n");
      m.dataset = jm.value("dataset", std::string{});
      s.sub_modes.push_back(std::move(m));
    }
    w.super_modes.push_back(std::move(s));
  }
  for (const auto& jt : j.value("targets", json::array())) {
    TargetSpec t;
    t.super = required<std::size_t>(jt, "super");
    auto sub = jt.find("sub");
    if (sub != jt.end() && !sub->is_null()) t.sub = sub->get<std::size_t>();
    t.shift = jt.contains("shift") ? from_vec(required<std::vector<double>>(jt, "shift"))
                                   : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(w.d));
    t.scale_multiplier = jt.value("scale_multiplier", 1.0);
    t.n = required<std::size_t>(jt, "n");
    w.targets.push_back(std::move(t));
  }
  validate(w);
  return w;
}

std::string world_to_json(const PlantedWorld& world) {
  json j;
  j["d"] = world.d;
  j["seed"] = world.seed;
  json supers = json::array();
  for (const auto& s : world.super_modes) {
    json js;
    js["center"] = to_vec(s.center);
    json subs = json::array();
    for (const auto& m : s.sub_modes) {
      subs.push_back({{"offset", to_vec(m.offset)}, {"scale", m.scale}, {"n", m.n},
                      {"dataset", m.dataset}});
    }
    js["sub_modes"] = std::move(subs);
    supers.push_back(std::move(js));
  }
  j["super_modes"] = std::move(supers);
  json targets = json::array();
  for (const auto& t : world.targets) {
    targets.push_back({{"super", t.super},
                       {"sub", t.sub ? json(*t.sub) : json(nullptr)},
                       {"shift", to_vec(t.shift)},
                       {"scale_multiplier", t.scale_multiplier},
                       {"n", t.n}});
  }
  j["targets"] = std::move(targets);
  return j.dump(1) + "\n";
}

PlantedWorld load_world(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return world_from_json(ss.str());
}

void save_world(const PlantedWorld& world, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << world_to_json(world);
  if (!out) throw IoError(path.string() + ": write failed");
}

PlantedWorld random_world(const RandomWorldSpec& spec, std::uint64_t seed) {
  if (spec.supers < 2 || spec.whole_super_targets + spec.single_sub_targets >= spec.supers) {
    throw ParameterError("random world needs more super modes than targets so the target "
                         "covers a strict subset");
  }
  std::mt19937_64 rng(derive_seed(seed, 0x5eed));
  PlantedWorld w;
  w.d = spec.d;
  w.seed = seed;
  auto centres = separated_centres(spec.supers, spec.d, spec.super_separation, rng);
  for (std::size_t s = 0; s < spec.supers; ++s) {
    w.super_modes.push_back(make_super(centres[s], spec.subs_per_super, spec.sub_radius,
                                       spec.sub_scale, spec.rows_per_sub, "src" + std::to_string(s),
                                       rng));
  }
  std::vector<std::size_t> order(spec.supers);
  for (std::size_t s = 0; s < spec.supers; ++s) order[s] = s;
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t next = 0;
  for (std::size_t t = 0; t < spec.whole_super_targets; ++t) {
    w.targets.push_back(perturbed_target(order[next++], std::nullopt, spec.sub_scale, spec.d,
                                         spec.rows_per_target, rng));
  }
  std::uniform_int_distribution<std::size_t> pick_sub(0, spec.subs_per_super - 1);
  for (std::size_t t = 0; t < spec.single_sub_targets; ++t) {
    w.targets.push_back(perturbed_target(order[next++], pick_sub(rng), spec.sub_scale, spec.d,
                                         spec.rows_per_target, rng));
  }
  validate(w);
  return w;
}

PlantedWorld granularity_probe_world(std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 0x6a7));
  PlantedWorld w;
  w.d = 8;
  w.seed = seed;
  auto centres = separated_centres(4, w.d, 30.0, rng);
  for (std::size_t s = 0; s < 4; ++s) {
    w.super_modes.push_back(make_super(centres[s], 4, 8.0, 1.0, 320, "src" + std::to_string(s), rng));
  }
  // 200 rows per planted sub-mode, so the ideal selection has the target's
  // mixture weights.
  w.targets.push_back(perturbed_target(0, std::nullopt, 1.0, w.d, 800, rng, 0.1, 1.05));
  w.targets.push_back(perturbed_target(1, 2, 1.0, w.d, 200, rng, 0.1, 1.05));
  w.targets.push_back(perturbed_target(2, 0, 1.0, w.d, 200, rng, 0.1, 1.05));
  validate(w);
  return w;
}

PlantedWorld duplicate_world(std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 0xd0b));
  PlantedWorld w;
  w.d = 4;
  w.seed = seed;
  auto centres = separated_centres(2, w.d, 30.0, rng);
  for (std::size_t s = 0; s < 2; ++s) {
    w.super_modes.push_back(make_super(centres[s], 4, 5.0, 1.0, 100, "src" + std::to_string(s), rng));
  }
  Eigen::VectorXd axis = random_direction(w.d, rng);
  for (double sign : {1.0, -1.0}) {
    TargetSpec t;
    t.super = 0;
    t.sub = 1;
    t.shift = sign * 0.5 * axis;
    t.scale_multiplier = 1.0;
    t.n = 150;
    w.targets.push_back(std::move(t));
  }
  validate(w);
  return w;
}

Assignment oracle_assignment(const Eigen::MatrixXd& cost) {
  const auto l = static_cast<std::size_t>(cost.rows());
  const auto h = static_cast<std::size_t>(cost.cols());
  if (l > 7 || h > 10) {
    throw ParameterError("oracle_assignment enumerates at most 7 x 10 instances");
  }
  if (l > h) throw InfeasibleError("more rows than columns");
  Assignment best;
  best.total_cost = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> sigma(l);
  std::vector<bool> used(h, false);
  // Depth-first in lexicographic order; partial sums accumulate in row order
  // exactly like assignment_cost().
  auto recurse = [&](auto&& self, std::size_t row, double partial) -> void {
    if (row == l) {
      if (partial < best.total_cost) {
        best.total_cost = partial;
        best.sigma = sigma;
      }
      return;
    }
    for (std::size_t j = 0; j < h; ++j) {
      if (used[j]) continue;
      used[j] = true;
      sigma[row] = j;
      self(self, row + 1, partial + cost(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j)));
      used[j] = false;
    }
  };
  recurse(recurse, 0, 0.0);
  if (l == 0) best.total_cost = 0.0;
  return best;
}

double oracle_balanced_partition(const FeatureMatrix& features, std::size_t k) {
  const std::size_t n = features.n;
  if (n > 8 || k > 3) throw ParameterError("oracle_balanced_partition enumerates n <= 8, k <= 3");
  if (k == 0 || k > n) throw ParameterError("oracle_balanced_partition needs 1 <= k <= n");
  const std::size_t lo = n / k;
  const std::size_t hi = (n + k - 1) / k;
  std::size_t combos = 1;
  for (std::size_t i = 0; i < n; ++i) combos *= k;
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> label(n);
  for (std::size_t code = 0; code < combos; ++code) {
    std::size_t c = code;
    std::vector<std::size_t> size(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      label[i] = c % k;
      c /= k;
      ++size[label[i]];
    }
    if (!std::all_of(size.begin(), size.end(), [&](std::size_t s) { return s == lo || s == hi; })) {
      continue;
    }
    double sse = 0.0;
    for (std::size_t cl = 0; cl < k; ++cl) {
      std::vector<double> mean(features.d, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        if (label[i] != cl) continue;
        auto row = features.row(i);
        for (std::size_t q = 0; q < features.d; ++q) mean[q] += row[q];
      }
      for (auto& m : mean) m /= static_cast<double>(size[cl]);
      for (std::size_t i = 0; i < n; ++i) {
        if (label[i] != cl) continue;
        auto row = features.row(i);
        for (std::size_t q = 0; q < features.d; ++q) {
          double diff = row[q] - mean[q];
          sse += diff * diff;
        }
      }
    }
    best = std::min(best, sse);
  }
  return best;
}

Correspondence correspondence_for_clusters(const GeneratedWorld& world,
                                           const FlatClustering& target_clusters) {
  if (target_clusters.assignment.size() != world.target.n) {
    throw ParameterError("target clustering does not cover the generated target rows");
  }
  Correspondence c;
  c.server_rows = world.server_origin;
  std::vector<std::vector<std::size_t>> votes(target_clusters.k,
                                              std::vector<std::size_t>(world.truth.size(), 0));
  for (std::size_t i = 0; i < world.target.n; ++i) {
    ++votes[target_clusters.assignment[i]][world.target_origin[i]];
  }
  for (const auto& v : votes) {
    auto top = std::max_element(v.begin(), v.end()) - v.begin();
    c.target_modes.push_back(world.truth[static_cast<std::size_t>(top)]);
  }
  return c;
}

double matching_precision(const SelectionResult& result, const Correspondence& truth,
                          const ModeTree& tree) {
  if (truth.target_modes.empty()) return 0.0;
  if (truth.server_rows.size() != tree.server_rows) {
    throw ParameterError("correspondence does not cover the tree's server rows");
  }
  std::size_t correct = 0;
  for (std::size_t t = 0; t < truth.target_modes.size(); ++t) {
    auto it = result.per_target.find(t);
    if (it == result.per_target.end()) continue;
    const auto& ref = truth.target_modes[t];
    const auto& members = tree.nodes.at(it->second.node_id).members;
    // The planted hierarchy has two levels, so the pair itself, its
    // sub-modes and its super mode all reduce to "generated under ref.super".
    std::size_t grouped = 0;
    for (auto r : members) {
      if (truth.server_rows[r].super == ref.super) ++grouped;
    }
    if (2 * grouped > members.size()) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(truth.target_modes.size());
}

}  // namespace bmm
