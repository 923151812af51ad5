#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "flowplan/lyapunov.hpp"
#include "oracles.hpp"

using namespace flowplan;

namespace {

FlatTrajectory rollout(const DynamicsModel& model, const Eigen::VectorXd& s0,
                       const std::vector<Eigen::VectorXd>& actions) {
  const int H = static_cast<int>(actions.size());
  const TrajectoryLayout layout(model.state_dim(), model.action_dim(), H);
  Eigen::VectorXd values(layout.flat_size());
  Eigen::VectorXd s = s0;
  for (int k = 0; k < H; ++k) {
    values.segment(layout.state_offset(k), layout.state_dim) = s;
    values.segment(layout.action_offset(k), layout.action_dim) = actions[k];
    if (k + 1 < H) s = model.step(s, actions[k]);
  }
  return FlatTrajectory(layout, values);
}

FlatTrajectory random_trajectory(int n, int m, int H, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  const TrajectoryLayout layout(n, m, H);
  Eigen::VectorXd values(layout.flat_size());
  for (Eigen::Index i = 0; i < values.size(); ++i) values(i) = gauss(rng);
  return FlatTrajectory(layout, values);
}

std::vector<Eigen::VectorXd> random_actions(int m, int H, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  std::vector<Eigen::VectorXd> actions;
  for (int k = 0; k < H; ++k) {
    Eigen::VectorXd a(m);
    for (int i = 0; i < m; ++i) a(i) = gauss(rng);
    actions.push_back(a);
  }
  return actions;
}

}  // namespace

TEST_CASE("value is zero exactly on rollouts") {
  const DoubleIntegrator model;
  std::mt19937_64 rng(1);
  const FlatTrajectory tau =
      rollout(model, Eigen::VectorXd::Zero(4), random_actions(2, 5, rng));
  CHECK(lyapunov_value(tau, model) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(lyapunov_gradient(tau, model).isZero(1e-12));
}

TEST_CASE("single-residual case H=2") {
  const DoubleIntegrator model;
  std::mt19937_64 rng(2);
  FlatTrajectory tau = rollout(model, Eigen::VectorXd::Zero(4), random_actions(2, 2, rng));
  Eigen::VectorXd e(4);
  e << 0.1, -0.2, 0.3, 0.05;
  tau.values.segment(tau.layout.state_offset(1), 4) += e;
  CHECK(lyapunov_value(tau, model) == doctest::Approx(0.5 * e.squaredNorm()));
}

TEST_CASE("value ignores the last action block") {
  const DoubleIntegrator model;
  std::mt19937_64 rng(3);
  FlatTrajectory tau = random_trajectory(4, 2, 4, rng);
  const double before = lyapunov_value(tau, model);
  tau.values.segment(tau.layout.action_offset(3), 2) << 99.0, -99.0;
  CHECK(lyapunov_value(tau, model) == doctest::Approx(before));
  CHECK(lyapunov_gradient(tau, model).segment(tau.layout.action_offset(3), 2).isZero(0.0));
}

TEST_CASE("gradient matches finite differences on the analytic model") {
  const DoubleIntegrator model;
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const FlatTrajectory tau = random_trajectory(4, 2, 3, rng);
    const Eigen::VectorXd grad = lyapunov_gradient(tau, model);
    const Eigen::VectorXd fd = testing::fd_gradient(
        [&](const Eigen::VectorXd& v) {
          return lyapunov_value(FlatTrajectory(tau.layout, v), model);
        },
        tau.values, 1e-6);
    CHECK((grad - fd).norm() / std::max(1.0, grad.norm()) <= 1e-6);
  }
}

TEST_CASE("gradient matches finite differences on a learned model") {
  const ForwardModelNet model(4, 2, {12, 12}, Activation::kTanh, 17);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const FlatTrajectory tau = random_trajectory(4, 2, 4, rng);
    const Eigen::VectorXd grad = lyapunov_gradient(tau, model);
    const Eigen::VectorXd fd = testing::fd_gradient(
        [&](const Eigen::VectorXd& v) {
          return lyapunov_value(FlatTrajectory(tau.layout, v), model);
        },
        tau.values, 1e-6);
    CHECK((grad - fd).norm() / std::max(1.0, grad.norm()) <= 1e-6);
  }
}

TEST_CASE("interior state block is l_{k-1} - A^T l_k for the affine model") {
  const DoubleIntegrator model;
  std::mt19937_64 rng(6);
  const FlatTrajectory tau = random_trajectory(4, 2, 5, rng);
  const auto residuals = consistency_residuals(tau, model);
  const Eigen::VectorXd grad = lyapunov_gradient(tau, model);
  const Eigen::MatrixXd A = model.state_matrix();
  for (int k = 1; k <= 3; ++k) {
    const Eigen::VectorXd expected =
        residuals[static_cast<std::size_t>(k - 1)] -
        A.transpose() * residuals[static_cast<std::size_t>(k)];
    CHECK((grad.segment(tau.layout.state_offset(k), 4) - expected).norm() <= 1e-12);
  }
  // boundary blocks
  CHECK((grad.segment(tau.layout.state_offset(4), 4) - residuals[3]).norm() <= 1e-12);
  const Eigen::VectorXd s0_block =
      -model.state_matrix().transpose() * residuals[0];
  CHECK((grad.head(4) - s0_block).norm() <= 1e-12);
}

TEST_CASE("perturbing a consistent trajectory makes the gradient nonzero") {
  const DoubleIntegrator model;
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    FlatTrajectory tau =
        rollout(model, Eigen::VectorXd::Zero(4), random_actions(2, 4, rng));
    std::uniform_int_distribution<int> pick(0, tau.layout.flat_size() - 1 -
                                                   tau.layout.action_dim);
    tau.values(pick(rng)) += 0.25;
    if (lyapunov_value(tau, model) > 1e-12) {
      CHECK(lyapunov_gradient(tau, model).norm() > 1e-10);
    }
  }
}

TEST_CASE("rank condition diagnostics") {
  const DoubleIntegrator analytic;
  const Eigen::VectorXd s = Eigen::VectorXd::Zero(4);
  const Eigen::VectorXd a = Eigen::VectorXd::Zero(2);
  SUBCASE("double integrator passes everywhere") {
    const RankDiagnostics diag = rank_condition_check(analytic, s, a);
    CHECK(diag.ok);
    CHECK(diag.state_jacobian_nonsingular);
    CHECK(diag.action_jacobian_full_rank);
  }
  SUBCASE("constant map fails") {
    ForwardModelNet constant(4, 2, {8}, Activation::kTanh, 0);
    constant.net().weight(0).setZero();
    constant.net().weight(1).setZero();
    const RankDiagnostics diag = rank_condition_check(constant, s, a);
    CHECK_FALSE(diag.ok);
  }
  SUBCASE("trained-style random network passes at random points") {
    const ForwardModelNet net(4, 2, {16, 16}, Activation::kTanh, 23);
    std::mt19937_64 rng(8);
    std::normal_distribution<double> gauss;
    int ok_count = 0;
    const int trials = 100;
    for (int i = 0; i < trials; ++i) {
      Eigen::VectorXd rs(4), ra(2);
      for (int j = 0; j < 4; ++j) rs(j) = gauss(rng);
      for (int j = 0; j < 2; ++j) ra(j) = gauss(rng);
      if (rank_condition_check(net, rs, ra).ok) ++ok_count;
    }
    MESSAGE("rank condition ok fraction: ", ok_count, "/", trials);
    CHECK(ok_count == trials);
  }
}
