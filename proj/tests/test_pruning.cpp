#include <numeric>
#include <random>
#include <set>

#include "bmm/error.hpp"
#include "bmm/pruning.hpp"
#include "doctest.h"

using namespace bmm;

namespace {

SelectionResult selection_with_strata(const std::vector<std::size_t>& sizes) {
  SelectionResult s;
  std::size_t row = 0;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    s.selected_nodes.push_back(100 + k);
    for (std::size_t i = 0; i < sizes[k]; ++i) {
      s.sample_rows.push_back(row * 3 + 1);
      s.sample_labels.push_back("src" + std::to_string(row % 2));
      s.sample_strata.push_back(k);
      ++s.composition[s.sample_labels.back()];
      ++row;
    }
  }
  return s;
}

std::vector<std::size_t> count_strata(const SelectionResult& s, std::size_t k) {
  std::vector<std::size_t> c(k, 0);
  for (auto st : s.sample_strata) ++c[st];
  return c;
}

bool is_subset(const SelectionResult& small, const SelectionResult& big) {
  return std::includes(big.sample_rows.begin(), big.sample_rows.end(), small.sample_rows.begin(),
                       small.sample_rows.end());
}

}  // namespace

TEST_CASE("budget resolution") {
  CHECK(Budget::fraction(1.0).resolve(37) == 37);
  CHECK(Budget::fraction(0.05).resolve(1000) == 50);
  CHECK(Budget::fraction(0.05).resolve(100) == 5);
  CHECK(Budget::fraction(0.001).resolve(10) == 1);
  CHECK(Budget::fraction(0.25).resolve(10) == 3);  // 2.5 rounds half away from zero
  CHECK(Budget::absolute(7).resolve(7) == 7);
  CHECK_THROWS_AS(Budget::absolute(8).resolve(7), ParameterError);
  CHECK_THROWS_AS(Budget::absolute(0).resolve(7), ParameterError);
  CHECK_THROWS_AS(Budget::fraction(0.0).resolve(7), ParameterError);
  CHECK_THROWS_AS(Budget::fraction(1.5).resolve(7), ParameterError);
  CHECK_THROWS_AS(Budget::fraction(std::nan("")).resolve(7), ParameterError);
  CHECK(Budget::fraction(0.05).describe() == "fraction:0.05");
  CHECK(Budget::absolute(12).describe() == "absolute:12");
}

TEST_CASE("strategy names") {
  CHECK(strategy_from_name("uniform") == PruneStrategy::uniform);
  CHECK(strategy_from_name("stratified") == PruneStrategy::stratified);
  CHECK(std::string(strategy_name(PruneStrategy::uniform)) == "uniform");
  CHECK_THROWS_AS(strategy_from_name("greedy"), ParameterError);
}

TEST_CASE("largest remainder apportionment") {
  CHECK(apportion(std::vector<std::size_t>{60, 40}, 50) == std::vector<std::size_t>{30, 20});
  CHECK(apportion(std::vector<std::size_t>{1, 1, 1}, 2) == std::vector<std::size_t>{1, 1, 0});
  CHECK(apportion(std::vector<std::size_t>{5, 3, 2}, 10) == std::vector<std::size_t>{5, 3, 2});
  CHECK(apportion(std::vector<std::size_t>{10, 10, 1}, 3) == std::vector<std::size_t>{2, 1, 0});
  CHECK_THROWS_AS(apportion(std::vector<std::size_t>{2, 2}, 5), ParameterError);

  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::size_t> sizes(1 + trial % 12);
    std::uniform_int_distribution<std::size_t> size(1, 400);
    for (auto& s : sizes) s = size(rng);
    std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
    std::size_t m = std::uniform_int_distribution<std::size_t>(0, total)(rng);
    auto q = apportion(sizes, m);
    CHECK(std::accumulate(q.begin(), q.end(), std::size_t{0}) == m);
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      double exact = static_cast<double>(m) * static_cast<double>(sizes[k]) / static_cast<double>(total);
      CHECK(std::abs(static_cast<double>(q[k]) - exact) < 1.0);
      CHECK(q[k] <= sizes[k]);
    }
  }
}

TEST_CASE("prune examples") {
  SUBCASE("fraction 1 is the identity") {
    auto s = selection_with_strata({13, 4});
    auto p = prune(s, Budget::fraction(1.0), PruneStrategy::stratified, 5);
    CHECK(p.sample_rows == s.sample_rows);
    CHECK(p.sample_strata == s.sample_strata);
    CHECK(p.composition == s.composition);
  }
  SUBCASE("uniform five percent of 100") {
    auto s = selection_with_strata({100});
    auto p = prune(s, Budget::fraction(0.05), PruneStrategy::uniform, 1);
    CHECK(p.sample_rows.size() == 5);
    CHECK(is_subset(p, s));
  }
  SUBCASE("stratified 60/40 at one half") {
    auto s = selection_with_strata({60, 40});
    auto p = prune(s, Budget::fraction(0.5), PruneStrategy::stratified, 2);
    CHECK(count_strata(p, 2) == std::vector<std::size_t>{30, 20});
    CHECK(p.selected_nodes == s.selected_nodes);
  }
}

TEST_CASE("prune contracts hold for random selections and budgets") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::size_t> sizes(1 + trial % 6);
    for (auto& sz : sizes) sz = std::uniform_int_distribution<std::size_t>(1, 120)(rng);
    auto s = selection_with_strata(sizes);
    std::size_t n = s.sample_rows.size();
    Budget b = trial % 2 ? Budget::fraction(std::uniform_real_distribution<double>(0.001, 1.0)(rng))
                         : Budget::absolute(std::uniform_int_distribution<std::size_t>(1, n)(rng));
    std::size_t m = b.resolve(n);
    for (auto strategy : {PruneStrategy::uniform, PruneStrategy::stratified}) {
      std::uint64_t seed = static_cast<std::uint64_t>(trial);
      auto p = prune(s, b, strategy, seed);
      CHECK(p.sample_rows.size() == m);
      CHECK(std::is_sorted(p.sample_rows.begin(), p.sample_rows.end()));
      CHECK(is_subset(p, s));
      std::size_t comp = 0;
      for (const auto& [label, c] : p.composition) comp += c;
      CHECK(comp == m);
      auto again = prune(s, b, strategy, seed);
      CHECK(again.sample_rows == p.sample_rows);
      if (strategy == PruneStrategy::stratified) {
        auto counts = count_strata(p, sizes.size());
        for (std::size_t k = 0; k < sizes.size(); ++k) {
          double exact = static_cast<double>(m) * static_cast<double>(sizes[k]) / static_cast<double>(n);
          CHECK(std::abs(static_cast<double>(counts[k]) - exact) < 1.0);
        }
      }
    }
  }
}

TEST_CASE("different seeds draw different subsets") {
  auto s = selection_with_strata({200, 300});
  auto a = prune(s, Budget::fraction(0.1), PruneStrategy::stratified, 1);
  auto b = prune(s, Budget::fraction(0.1), PruneStrategy::stratified, 2);
  CHECK(a.sample_rows.size() == b.sample_rows.size());
  CHECK(a.sample_rows != b.sample_rows);
}
