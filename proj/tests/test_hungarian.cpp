#include "egoflow/hungarian.hpp"

#include "support.hpp"

#include <doctest.h>

using namespace egoflow;

namespace {
const double inf = std::numeric_limits<double>::infinity();
}

TEST_CASE("known 3x3 instance") {
  Matrix c(3, 3);
  c << 4, 1, 3, 2, 0, 5, 3, 2, 2;
  const auto a = solve_assignment(c);
  CHECK(a == std::vector<int>{1, 0, 2});
  CHECK(assignment_cost(c, a) == 5.0);
}

TEST_CASE("rectangular instances") {
  Matrix wide(2, 4);
  wide << 9, 9, 1, 9, 9, 2, 9, 9;
  CHECK(solve_assignment(wide) == std::vector<int>{2, 1});
  Matrix tall = wide.transpose();
  CHECK(solve_assignment(tall) == std::vector<int>{-1, 1, 0, -1});
}

TEST_CASE("forbidden pairs") {
  Matrix c(2, 2);
  c << inf, inf, inf, inf;
  CHECK(solve_assignment(c) == std::vector<int>{-1, -1});
  // One finite pair in each row; cheap forbidden-free choice must maximize pairs first.
  c << 0.0, 1.0, inf, 100.0;
  CHECK(solve_assignment(c) == std::vector<int>{0, 1});
  CHECK(solve_assignment(Matrix(0, 3)).empty());
  CHECK(solve_assignment(Matrix(2, 0)) == std::vector<int>{-1, -1});
}

TEST_CASE("matches brute force on random real-valued matrices") {
  Rng rng(17);
  std::uniform_int_distribution<int> dim(1, 6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    Matrix c(dim(rng), dim(rng));
    for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = u(rng) < 0.15 ? inf : u(rng);
    const auto a = solve_assignment(c);
    const auto b = testing::brute_force_assignment(c);
    int pairs = 0;
    std::vector<int> used;
    for (int col : a) {
      if (col < 0) continue;
      ++pairs;
      used.push_back(col);
    }
    std::sort(used.begin(), used.end());
    REQUIRE(std::adjacent_find(used.begin(), used.end()) == used.end());  // injective
    REQUIRE(pairs == b.pairs);
    REQUIRE(assignment_cost(c, a) == doctest::Approx(b.cost).epsilon(1e-12));
  }
}

TEST_CASE("no random injective map is cheaper") {
  Rng rng(18);
  Matrix c = testing::randn(6, 6, rng).cwiseAbs();
  const double best = assignment_cost(c, solve_assignment(c));
  std::vector<int> perm{0, 1, 2, 3, 4, 5};
  for (int i = 0; i < 1000; ++i) {
    std::shuffle(perm.begin(), perm.end(), rng);
    CHECK(best <= assignment_cost(c, perm) + 1e-12);
  }
}
