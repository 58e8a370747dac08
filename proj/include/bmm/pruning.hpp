#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bmm/matching.hpp"

namespace bmm {

/// Sample budget: a fraction in (0, 1] of the selection or an absolute count.
struct Budget {
  enum class Kind { fraction, absolute };
  Kind kind = Kind::fraction;
  double value = 1.0;

  static Budget fraction(double f) { return {Kind::fraction, f}; }
  static Budget absolute(std::size_t n) { return {Kind::absolute, static_cast<double>(n)}; }

  /// Number of rows kept out of `available`. Fractions round to nearest and
  /// keep at least one row; absolute counts above `available` are rejected.
  std::size_t resolve(std::size_t available) const;
  std::string describe() const;
};

enum class PruneStrategy { uniform, stratified };

PruneStrategy strategy_from_name(const std::string& name);
const char* strategy_name(PruneStrategy strategy);

/// Largest-remainder apportionment of m over strata of the given sizes.
/// Ties in the remainder go to the lower stratum index.
std::vector<std::size_t> apportion(std::span<const std::size_t> sizes, std::size_t m);

/// Positions (sorted) of the kept items. `strata[i]` is the stratum of item
/// i; uniform ignores it.
std::vector<std::size_t> subsample(std::span<const std::size_t> strata, const Budget& budget,
                                   PruneStrategy strategy, std::uint64_t seed);

/// Budgeted subset of a selection. Stratified allocation is proportional to
/// the number of rows each matched node contributes.
SelectionResult prune(const SelectionResult& selection, const Budget& budget,
                      PruneStrategy strategy, std::uint64_t seed);

}  // namespace bmm
