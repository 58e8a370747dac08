#include <random>
#include <set>

#include "bmm/clustering.hpp"
#include "bmm/error.hpp"
#include "bmm/matching.hpp"
#include "bmm/mode_tree.hpp"
#include "bmm/synth.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace bmm;

namespace {

Eigen::MatrixXd matrix(std::initializer_list<std::initializer_list<double>> rows) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

Assignment solve(const Eigen::MatrixXd& cost) { return solve_assignment(make_problem(cost)); }

// Integer-valued costs from a small range produce many equal-cost optima.
Eigen::MatrixXd random_cost(std::size_t l, std::size_t h, std::mt19937_64& rng, bool ties) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(h));
  std::uniform_int_distribution<int> small(0, 3);
  std::uniform_real_distribution<double> real(0.0, 10.0);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = ties ? small(rng) : real(rng);
  return m;
}

// Leaves of `per_leaf` rows on a line, well apart.
std::pair<FeatureMatrix, ModeTree> line_tree(std::size_t leaves, std::size_t per_leaf) {
  std::vector<std::vector<double>> rows;
  for (std::size_t c = 0; c < leaves; ++c) {
    for (std::size_t i = 0; i < per_leaf; ++i) {
      rows.push_back({100.0 * static_cast<double>(c * c) + 0.01 * static_cast<double>(i)});
    }
  }
  auto f = test::features_from(rows);
  for (std::size_t i = 0; i < f.n; ++i) f.dataset_labels[i] = "src" + std::to_string(i % 2);
  auto t = build_hierarchy(fit_balanced_kmeans(f, leaves, 0), f);
  return {std::move(f), std::move(t)};
}

AssignmentProblem problem_over_tree(const ModeTree& t, std::size_t targets) {
  return make_problem(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(targets),
                                            static_cast<Eigen::Index>(t.node_count())));
}

Assignment pick(std::vector<std::size_t> sigma) { return {std::move(sigma), 0.0}; }

}  // namespace

TEST_CASE("assignment examples") {
  auto a = solve(matrix({{3.0, 1.0, 2.0}}));
  CHECK(a.sigma == std::vector<std::size_t>{1});
  CHECK(a.total_cost == 1.0);

  auto b = solve(matrix({{1, 2, 3}, {2, 4, 6}}));
  CHECK(b.sigma == std::vector<std::size_t>{1, 0});
  CHECK(b.total_cost == 4.0);
  auto ob = oracle_assignment(matrix({{1, 2, 3}, {2, 4, 6}}));
  CHECK(ob.sigma == b.sigma);
  CHECK(ob.total_cost == b.total_cost);

  auto c = solve(matrix({{0, 5, 7}, {2, 0, 9}, {4, 3, 0}}));
  CHECK(c.sigma == std::vector<std::size_t>{0, 1, 2});
  CHECK(c.total_cost == 0.0);
}

TEST_CASE("assignment ties resolve to the lexicographically smallest sigma") {
  CHECK(solve(Eigen::MatrixXd::Zero(3, 5)).sigma == std::vector<std::size_t>{0, 1, 2});
  CHECK(solve(matrix({{1, 1}, {1, 1}})).sigma == std::vector<std::size_t>{0, 1});
  CHECK(solve(matrix({{2, 1, 1}, {1, 2, 2}})).sigma == std::vector<std::size_t>{1, 0});
  CHECK(solve(matrix({{0, 0, 1}, {0, 1, 1}})).sigma == std::vector<std::size_t>{1, 0});
}

TEST_CASE("assignment equals the exhaustive oracle") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 400; ++trial) {
    std::size_t l = 1 + trial % 6;
    std::size_t h = l + (trial / 6) % (10 - l);
    auto cost = random_cost(l, h, rng, trial % 2 == 0);
    auto got = solve(cost);
    auto want = oracle_assignment(cost);
    CHECK(got.total_cost == want.total_cost);
    CHECK(got.sigma == want.sigma);
    CHECK(got.total_cost == assignment_cost(cost, got.sigma));
  }
}

TEST_CASE("assignment is injective and scale invariant") {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 100; ++trial) {
    auto cost = random_cost(1 + trial % 9, 12 + trial % 20, rng, trial % 3 == 0);
    auto a = solve(cost);
    CHECK(std::set<std::size_t>(a.sigma.begin(), a.sigma.end()).size() == a.sigma.size());
    for (double scale : {0.5, 3.0, 1024.0}) CHECK(solve(cost * scale).sigma == a.sigma);
  }
}

TEST_CASE("assignment input validation") {
  CHECK_THROWS_AS(solve(matrix({{1}, {2}})), InfeasibleError);
  CHECK_THROWS_AS(solve(matrix({{1, std::nan("")}})), ValidationError);
  CHECK_THROWS_AS(solve(matrix({{1, std::numeric_limits<double>::infinity()}})), ValidationError);
  CHECK_THROWS_AS(solve(matrix({{1, -0.5}})), ValidationError);
  CHECK_THROWS_AS(oracle_assignment(Eigen::MatrixXd::Zero(8, 9)), ParameterError);
  CHECK_THROWS_AS(oracle_assignment(Eigen::MatrixXd::Zero(3, 11)), ParameterError);
  auto p = make_problem(matrix({{1, 2}}), {7, 8});
  CHECK(p.node_ids == std::vector<std::size_t>{7, 8});
  CHECK(p.target_ids == std::vector<std::string>{"T0"});
  CHECK_THROWS_AS(validate(make_problem(matrix({{1, 2}}), {7})), ValidationError);
}

TEST_CASE("direct match examples") {
  auto p = make_problem(matrix({{0, 5}, {0, 9}}));
  auto dup = direct_match(p, true);
  REQUIRE(dup.sigma.size() == 2);
  CHECK(dup.sigma[0] == std::optional<std::size_t>(0));
  CHECK(dup.sigma[1] == std::optional<std::size_t>(0));
  CHECK(dup.distinct_candidates() == 1);
  CHECK(dup.unmatched() == 0);

  auto nodup = direct_match(p, false);
  CHECK(nodup.sigma[0] == std::optional<std::size_t>(0));
  CHECK_FALSE(nodup.sigma[1].has_value());
  CHECK(nodup.unmatched() == 1);
  CHECK(nodup.total_cost == 0.0);

  auto repaired = repair_direct_match(p, nodup);
  CHECK(repaired.sigma == std::vector<std::size_t>{0, 1});
  CHECK(repaired.total_cost == 9.0);
}

TEST_CASE("direct match bounds and dominance") {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 100; ++trial) {
    auto cost = random_cost(5, 20, rng, trial % 2 == 0);
    auto p = make_problem(cost);
    auto opt = solve_assignment(p);
    auto dm = direct_match(p, true);
    CHECK(dm.total_cost <= opt.total_cost);
    for (bool dups : {true, false}) {
      auto repaired = repair_direct_match(p, direct_match(p, dups));
      CHECK(std::set<std::size_t>(repaired.sigma.begin(), repaired.sigma.end()).size() == 5);
      CHECK(opt.total_cost <= repaired.total_cost);
    }
  }
}

TEST_CASE("selection of disjoint nodes") {
  auto [f, t] = line_tree(3, 10);
  // Node 3 is the first merge: the two leaves nearest each other.
  REQUIRE(t.nodes[3].members.size() == 20);
  std::size_t lone = 3;
  for (std::size_t c = 0; c < 3; ++c) {
    if (std::find(t.nodes[3].children.begin(), t.nodes[3].children.end(), c) ==
        t.nodes[3].children.end()) {
      lone = c;
    }
  }
  auto p = problem_over_tree(t, 2);
  auto s = select_training_set(t, pick({3, lone}), p, f.dataset_labels);
  CHECK(s.sample_rows.size() == 30);
  CHECK(s.selected_nodes == std::vector<std::size_t>{3, lone});
  CHECK(std::is_sorted(s.sample_rows.begin(), s.sample_rows.end()));
}

TEST_CASE("selecting a parent and its child counts the parent once") {
  auto [f, t] = line_tree(4, 10);
  auto root = t.root();
  REQUIRE(t.nodes[root].members.size() == 40);
  auto child = t.nodes[root].children[1];
  auto p = problem_over_tree(t, 2);
  auto s = select_training_set(t, pick({child, root}), p, f.dataset_labels);
  CHECK(s.sample_rows.size() == 40);
  CHECK(s.selected_nodes == std::vector<std::size_t>{child, root});
  std::size_t total = 0;
  for (const auto& [label, count] : s.composition) total += count;
  CHECK(total == 40);
  CHECK(s.composition.at("src0") == 20);
  // Rows keep the stratum of the first selected node that holds them.
  for (std::size_t i = 0; i < s.sample_rows.size(); ++i) {
    bool in_child = std::binary_search(t.nodes[child].members.begin(),
                                       t.nodes[child].members.end(), s.sample_rows[i]);
    CHECK(s.sample_strata[i] == (in_child ? 0u : 1u));
    CHECK(s.sample_labels[i] == f.dataset_labels[s.sample_rows[i]]);
  }
}

TEST_CASE("selection equals the naive union on random trees") {
  std::mt19937_64 rng(34);
  for (std::uint64_t trial = 0; trial < 30; ++trial) {
    auto f = test::random_features(60 + trial * 3, 2, trial);
    auto t = build_hierarchy(fit_balanced_kmeans(f, 4 + trial % 12, trial), f);
    std::size_t l = 1 + trial % 6;
    auto cost = random_cost(l, t.node_count(), rng, false);
    auto p = make_problem(cost);
    auto a = solve_assignment(p);
    auto s = select_training_set(t, a, p, f.dataset_labels);
    std::set<std::size_t> naive;
    for (auto col : a.sigma) naive.insert(t.nodes[col].members.begin(), t.nodes[col].members.end());
    CHECK(s.sample_rows == std::vector<std::size_t>(naive.begin(), naive.end()));
    REQUIRE(s.per_target.size() == l);
    for (std::size_t y = 0; y < l; ++y) {
      CHECK(s.per_target.at(y).node_id == a.sigma[y]);
      CHECK(s.per_target.at(y).fid == cost(static_cast<Eigen::Index>(y),
                                          static_cast<Eigen::Index>(a.sigma[y])));
    }
    auto again = select_training_set(t, a, p, f.dataset_labels);
    CHECK(again.sample_rows == s.sample_rows);
    CHECK(again.composition == s.composition);
  }
}

TEST_CASE("direct-match selection skips unmatched targets") {
  auto [f, t] = line_tree(4, 10);
  auto cost = Eigen::MatrixXd::Constant(2, static_cast<Eigen::Index>(t.node_count()), 5.0).eval();
  cost(0, 2) = 0.0;
  cost(1, 2) = 1.0;
  auto p = make_problem(cost);
  auto dm = direct_match(p, false);
  auto s = select_training_set(t, dm, p, f.dataset_labels);
  CHECK(s.selected_nodes == std::vector<std::size_t>{2});
  CHECK(s.per_target.size() == 1);
  CHECK(s.sample_rows == t.nodes[2].members);
}
