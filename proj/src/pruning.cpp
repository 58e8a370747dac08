#include "bmm/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "bmm/clustering.hpp"
#include "bmm/error.hpp"

namespace bmm {
namespace {

// Partial Fisher-Yates: `count` distinct picks from `items`.
std::vector<std::size_t> draw(std::vector<std::size_t> items, std::size_t count,
                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, items.size() - 1);
    std::swap(items[i], items[pick(rng)]);
  }
  items.resize(count);
  return items;
}

}  // namespace

std::size_t Budget::resolve(std::size_t available) const {
  if (kind == Kind::fraction) {
    if (!(value > 0.0 && value <= 1.0)) {
      throw ParameterError("budget fraction must lie in (0, 1], got " + std::to_string(value));
    }
    if (available == 0) return 0;
    auto m = static_cast<std::size_t>(std::llround(value * static_cast<double>(available)));
    return std::clamp<std::size_t>(m, 1, available);
  }
  if (!(value >= 1.0) || value != std::floor(value)) {
    throw ParameterError("absolute budget must be a positive integer");
  }
  auto m = static_cast<std::size_t>(value);
  if (m > available) {
    throw ParameterError("absolute budget " + std::to_string(m) + " exceeds the selection size " +
                         std::to_string(available));
  }
  return m;
}

std::string Budget::describe() const {
  std::ostringstream os;
  if (kind == Kind::fraction) {
    os << "fraction:" << value;
  } else {
    os << "absolute:" << static_cast<std::size_t>(value);
  }
  return os.str();
}

PruneStrategy strategy_from_name(const std::string& name) {
  if (name == "uniform") return PruneStrategy::uniform;
  if (name == "stratified") return PruneStrategy::stratified;
  throw ParameterError("unknown pruning strategy '" + name + "' (uniform|stratified)");
}

const char* strategy_name(PruneStrategy strategy) {
  return strategy == PruneStrategy::uniform ? "uniform" : "stratified";
}

std::vector<std::size_t> apportion(std::span<const std::size_t> sizes, std::size_t m) {
  std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  if (m > total) throw ParameterError("cannot apportion more rows than the strata hold");
  std::vector<std::size_t> quota(sizes.size(), 0);
  if (total == 0) return quota;
  // Exact integer quotas: m * size / total = floor + remainder / total.
  std::vector<std::size_t> remainder(sizes.size());
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    unsigned __int128 num = static_cast<unsigned __int128>(m) * sizes[s];
    quota[s] = static_cast<std::size_t>(num / total);
    remainder[s] = static_cast<std::size_t>(num % total);
    assigned += quota[s];
  }
  std::vector<std::size_t> order(sizes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < m; ++i) {
    ++quota[order[i]];
    ++assigned;
  }
  return quota;
}

std::vector<std::size_t> subsample(std::span<const std::size_t> strata, const Budget& budget,
                                   PruneStrategy strategy, std::uint64_t seed) {
  const std::size_t n = strata.size();
  const std::size_t m = budget.resolve(n);
  std::vector<std::size_t> kept;
  if (m == n) {
    kept.resize(n);
    std::iota(kept.begin(), kept.end(), std::size_t{0});
    return kept;
  }
  if (strategy == PruneStrategy::uniform) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    kept = draw(std::move(all), m, derive_seed(seed, 0));
  } else {
    std::size_t count = strata.empty() ? 0 : *std::max_element(strata.begin(), strata.end()) + 1;
    std::vector<std::vector<std::size_t>> groups(count);
    for (std::size_t i = 0; i < n; ++i) groups[strata[i]].push_back(i);
    std::vector<std::size_t> sizes(count);
    for (std::size_t s = 0; s < count; ++s) sizes[s] = groups[s].size();
    auto quota = apportion(sizes, m);
    for (std::size_t s = 0; s < count; ++s) {
      auto picked = draw(std::move(groups[s]), quota[s], derive_seed(seed, s + 1));
      kept.insert(kept.end(), picked.begin(), picked.end());
    }
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

SelectionResult prune(const SelectionResult& selection, const Budget& budget,
                      PruneStrategy strategy, std::uint64_t seed) {
  auto kept = subsample(selection.sample_strata, budget, strategy, seed);
  SelectionResult out;
  out.selected_nodes = selection.selected_nodes;
  out.per_target = selection.per_target;
  for (auto pos : kept) {
    out.sample_rows.push_back(selection.sample_rows[pos]);
    out.sample_labels.push_back(selection.sample_labels[pos]);
    out.sample_strata.push_back(selection.sample_strata[pos]);
    ++out.composition[selection.sample_labels[pos]];
  }
  return out;
}

}  // namespace bmm
