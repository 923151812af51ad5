#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "flowplan/trajectory.hpp"

using namespace flowplan;

namespace {
FlatTrajectory make(int n, int m, int H, std::initializer_list<double> vals) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(vals.size()));
  Eigen::Index i = 0;
  for (double x : vals) v(i++) = x;
  return FlatTrajectory(TrajectoryLayout(n, m, H), v);
}
}  // namespace

TEST_CASE("layout validation") {
  CHECK_THROWS(TrajectoryLayout(0, 1, 1));
  CHECK_THROWS(TrajectoryLayout(1, 0, 1));
  CHECK_THROWS(TrajectoryLayout(1, 1, 0));
  const TrajectoryLayout layout(3, 2, 5);
  CHECK(layout.flat_size() == 25);
  CHECK_THROWS(FlatTrajectory(layout, Eigen::VectorXd::Zero(24)));
}

TEST_CASE("state_at reads the contiguous block") {
  const auto tau = make(1, 1, 2, {1, 2, 3, 4});
  CHECK(state_at(tau, 1)(0) == 3.0);
  CHECK(state_at(tau, 0)(0) == 1.0);

  const auto tau2 = make(2, 2, 2, {0, 0, 9, 9, 5, 6, 9, 9});
  const Eigen::VectorXd s1 = state_at(tau2, 1);
  CHECK(s1(0) == 5.0);
  CHECK(s1(1) == 6.0);

  CHECK_THROWS_AS(state_at(tau, 2), std::out_of_range);
  CHECK_THROWS_AS(state_at(tau, -1), std::out_of_range);
}

TEST_CASE("action_at reads the contiguous block") {
  const auto tau = make(1, 1, 2, {1, 2, 3, 4});
  CHECK(action_at(tau, 0)(0) == 2.0);
  CHECK(action_at(tau, 1)(0) == 4.0);

  const auto tau2 = make(2, 1, 1, {7, 7, 3});
  CHECK(action_at(tau2, 0)(0) == 3.0);
  CHECK_THROWS_AS(action_at(tau2, 1), std::out_of_range);
}

TEST_CASE("blocks tile the flat vector exactly once") {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> gauss;
  const TrajectoryLayout layout(3, 2, 7);
  Eigen::VectorXd v(layout.flat_size());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = gauss(rng);
  const FlatTrajectory tau(layout, v);

  Eigen::VectorXd rebuilt(layout.flat_size());
  for (int k = 0; k < layout.horizon; ++k) {
    rebuilt.segment(layout.state_offset(k), layout.state_dim) = state_at(tau, k);
    rebuilt.segment(layout.action_offset(k), layout.action_dim) = action_at(tau, k);
  }
  CHECK(rebuilt == v);  // bit-for-bit
}

TEST_CASE("apply_mask pins the frozen prefix") {
  const TrajectoryLayout layout(4, 2, 2);
  FlatTrajectory tau(layout, Eigen::VectorXd::Constant(layout.flat_size(), 7.0));
  const auto mask = ConditioningMask::initial_state(layout, Eigen::VectorXd::Zero(4));
  const FlatTrajectory pinned = apply_mask(tau, mask);
  CHECK(pinned.values.head(4).isZero(0.0));
  CHECK(pinned.values.tail(layout.flat_size() - 4) ==
        tau.values.tail(layout.flat_size() - 4));

  SUBCASE("empty mask is the identity") {
    const FlatTrajectory same = apply_mask(tau, ConditioningMask::none());
    CHECK(same.values == tau.values);
  }

  SUBCASE("idempotent") {
    const FlatTrajectory once = apply_mask(tau, mask);
    const FlatTrajectory twice = apply_mask(once, mask);
    CHECK(once.values == twice.values);
  }

  SUBCASE("commutes with edits of non-frozen entries") {
    FlatTrajectory edited = apply_mask(tau, mask);
    edited.values(5) = -3.0;
    FlatTrajectory other = tau;
    other.values(5) = -3.0;
    CHECK(apply_mask(other, mask).values == edited.values);
  }
}

TEST_CASE("mask size checks") {
  const TrajectoryLayout layout(2, 1, 1);
  CHECK_THROWS(ConditioningMask::initial_state(layout, Eigen::VectorXd::Zero(3)));
  Eigen::VectorXd vel = Eigen::VectorXd::Ones(3);
  const auto mask = ConditioningMask::initial_state(layout, Eigen::VectorXd::Zero(2));
  zero_frozen(vel, mask);
  CHECK(vel(0) == 0.0);
  CHECK(vel(1) == 0.0);
  CHECK(vel(2) == 1.0);
}
