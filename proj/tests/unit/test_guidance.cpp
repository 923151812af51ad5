#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "flowplan/guidance.hpp"
#include "flowplan/lyapunov.hpp"
#include "oracles.hpp"

using namespace flowplan;

namespace {

QpRow dense_row(const Eigen::VectorXd& g, double rhs,
               QpRowKind kind = QpRowKind::kBarrierAction) {
  QpRow row;
  row.offset = 0;
  row.block = g;
  row.rhs = rhs;
  row.kind = kind;
  return row;
}

QpInstance make_instance(int dim, std::vector<QpRow> rows, int clf_row = -1) {
  QpInstance qp;
  qp.dim = dim;
  qp.rows = std::move(rows);
  qp.clf_row = clf_row;
  return qp;
}

Eigen::VectorXd unit(int dim, int i, double v = 1.0) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
  e(i) = v;
  return e;
}

void check_kkt(const QpInstance& qp, const QpSolution& sol, double tol = 1e-8) {
  REQUIRE(sol.status != QpStatus::kFailed);
  CHECK(sol.kkt_stationarity <= tol * std::max(1.0, sol.duals.cwiseAbs().maxCoeff()));
  CHECK(sol.kkt_feasibility <= tol);
  for (Eigen::Index i = 0; i < sol.duals.size(); ++i) CHECK(sol.duals(i) >= -tol);
  for (std::size_t i = 0; i < qp.rows.size(); ++i) {
    const double resid = qp.rows[i].dot(sol.u) - qp.rows[i].rhs;
    CHECK(std::abs(sol.duals(static_cast<Eigen::Index>(i)) * resid) <=
          tol * std::max(1.0, std::abs(sol.duals(static_cast<Eigen::Index>(i)))));
  }
}

}  // namespace

TEST_CASE("scheduler values and singularity") {
  CHECK(phi(0.5, 0.5) == doctest::Approx(2.0));
  CHECK(phi(0.9, 0.5) == doctest::Approx(50.0));
  CHECK(phi(0.0, 0.7) == doctest::Approx(0.7));
  CHECK_THROWS_AS(phi(1.0, 0.5), std::domain_error);
  CHECK_THROWS_AS(phi(1.5, 0.5), std::domain_error);
  SUBCASE("strictly increasing") {
    double prev = 0.0;
    for (int i = 0; i < 99; ++i) {
      const double t = static_cast<double>(i) / 100.0;
      const double value = phi(t, 0.5);
      CHECK(value > prev);
      prev = value;
    }
  }
  SUBCASE("discrete scheduler sum grows without bound as t_max -> 1") {
    // monotone growth of sum phi(t_j) dt as the node range extends toward 1
    double shorter = 0.0, longer = 0.0;
    const int N = 100;
    for (int j = 60; j < N - 5; ++j) shorter += phi(j / double(N), 0.5) / N;
    for (int j = 60; j < N - 1; ++j) longer += phi(j / double(N), 0.5) / N;
    CHECK(longer > 2.0 * shorter);
  }
}

TEST_CASE("config validation") {
  GuidanceConfig cfg;
  cfg.validate();
  GuidanceConfig bad = cfg;
  bad.t0 = 0.0;
  CHECK_THROWS(bad.validate());
  bad = cfg;
  bad.c = -1.0;
  CHECK_THROWS(bad.validate());
  bad = cfg;
  bad.ode_steps = 1;
  CHECK_THROWS(bad.validate());
  bad = cfg;
  bad.slack_penalty = 0.0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("assemble_qp builds one row per barrier plus the consistency row") {
  const TrajectoryLayout layout(2, 1, 2);
  const FlatTrajectory tau = FlatTrajectory::zero(layout);
  GuidanceConfig cfg;
  cfg.c = 0.5;
  cfg.ode_steps = 100;

  std::vector<BarrierRow> rows(1);
  rows[0].value = -1.0;
  rows[0].block_offset = 2;  // a(0) block
  rows[0].block_gradient = Eigen::VectorXd::Constant(1, 1.0);
  rows[0].kind = ConstraintKind::kAction;

  const Eigen::VectorXd drift = Eigen::VectorXd::Zero(layout.flat_size());

  SUBCASE("violated barrier row at phi = 2") {
    // at t=0.5, c=0.5: rate = min(2, 100) = 2, rhs = -2 * (-1) = 2
    const QpInstance qp = assemble_qp(tau, drift, 0.5, rows, 0.0,
                                      Eigen::VectorXd::Zero(layout.flat_size()), cfg);
    REQUIRE(qp.rows.size() == 1);
    CHECK(qp.rows[0].rhs == doctest::Approx(2.0));
    CHECK(qp.clf_row == -1);  // CLF omitted when V = 0 and grad V = 0
    CHECK(qp.phi_value == doctest::Approx(2.0));
  }

  SUBCASE("interior rows with zero drift need no control") {
    std::vector<BarrierRow> interior = rows;
    interior[0].value = 5.0;
    const QpInstance qp = assemble_qp(tau, drift, 0.5, interior, 0.0,
                                      Eigen::VectorXd::Zero(layout.flat_size()), cfg);
    CHECK(qp.rows[0].rhs <= 0.0);
    const QpSolution sol = solve_qp(qp, cfg);
    CHECK(sol.status == QpStatus::kOptimal);
    CHECK(sol.u.isZero(0.0));
  }

  SUBCASE("robust margin with xi = 0 leaves the instance unchanged") {
    std::vector<BarrierRow> state_rows = rows;
    state_rows[0].kind = ConstraintKind::kState;
    state_rows[0].block_offset = 0;
    state_rows[0].lipschitz_value = 1.0;
    state_rows[0].lipschitz_gradient = 0.3;
    const QpInstance plain =
        assemble_qp(tau, drift, 0.5, state_rows, 0.0,
                    Eigen::VectorXd::Zero(layout.flat_size()), cfg, 0, 2.0, 0.0);
    const QpInstance robust =
        assemble_qp(tau, drift, 0.5, state_rows, 0.0,
                    Eigen::VectorXd::Zero(layout.flat_size()), cfg, 0, 2.0, 0.0);
    CHECK(plain.rows[0].rhs == robust.rows[0].rhs);
    const QpInstance tightened =
        assemble_qp(tau, drift, 0.5, state_rows, 0.0,
                    Eigen::VectorXd::Zero(layout.flat_size()), cfg, 0, 2.0, 0.01);
    // rhs grows by (rate * L_h + |u| * L_grad_h) * xi = (2 + 0.6) * 0.01
    CHECK(tightened.rows[0].rhs - plain.rows[0].rhs == doctest::Approx(0.026));
  }

  SUBCASE("degenerate rows are dropped and counted") {
    std::vector<BarrierRow> degenerate = rows;
    degenerate[0].degenerate = true;
    degenerate[0].block_gradient.setZero();
    const QpInstance qp = assemble_qp(tau, drift, 0.5, degenerate, 0.0,
                                      Eigen::VectorXd::Zero(layout.flat_size()), cfg);
    CHECK(qp.rows.empty());
    CHECK(qp.dropped_degenerate_rows == 1);
  }

  SUBCASE("terminal node uses the capped rate") {
    const double t = 0.99;  // phi = 5000, 1/dt = 100
    const QpInstance qp = assemble_qp(tau, drift, t, rows, 0.0,
                                      Eigen::VectorXd::Zero(layout.flat_size()), cfg);
    CHECK(qp.phi_value == doctest::Approx(5000.0));
    CHECK(qp.rate == doctest::Approx(100.0));
    CHECK(qp.rows[0].rhs == doctest::Approx(100.0));
  }
}

TEST_CASE("closed-form single-constraint solutions") {
  GuidanceConfig cfg;

  SUBCASE("inactive row keeps u at zero") {
    const QpInstance qp = make_instance(3, {dense_row(unit(3, 0), -1.0)});
    const QpSolution sol = solve_qp(qp, cfg);
    CHECK(sol.status == QpStatus::kOptimal);
    CHECK(sol.u.isZero(0.0));
    CHECK(sol.duals.isZero(0.0));
  }

  SUBCASE("active row gives u = r g / |g|^2 and dual 2r/|g|^2 scaling") {
    const QpInstance qp = make_instance(3, {dense_row(unit(3, 0), 2.0)});
    const QpSolution sol = solve_qp(qp, cfg);
    REQUIRE(sol.status == QpStatus::kOptimal);
    CHECK(sol.u(0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(sol.u.tail(2).isZero(0.0));
    CHECK(sol.duals(0) == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(sol.u.squaredNorm() == doctest::Approx(4.0).epsilon(1e-12));
    check_kkt(qp, sol, 1e-10);
  }

  SUBCASE("scaled gradient closed form u = max(0, r) g / |g|^2") {
    Eigen::VectorXd g(2);
    g << 3.0, 4.0;  // |g|^2 = 25
    const QpInstance qp = make_instance(2, {dense_row(g, 5.0)});
    const QpSolution sol = solve_qp(qp, cfg);
    CHECK((sol.u - 5.0 * g / 25.0).norm() <= 1e-10);
  }

  SUBCASE("parallel rows: dominated row inactive") {
    const QpInstance qp = make_instance(
        4, {dense_row(unit(4, 0), 1.0), dense_row(unit(4, 0), 2.0)});
    const QpSolution sol = solve_qp(qp, cfg);
    REQUIRE(sol.status == QpStatus::kOptimal);
    CHECK(sol.u(0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(sol.duals(0) == doctest::Approx(0.0));
    check_kkt(qp, sol, 1e-10);
  }
}

TEST_CASE("random feasible instances match the brute-force oracle") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> gauss;
  std::uniform_int_distribution<int> dim_dist(2, 6);
  std::uniform_int_distribution<int> row_dist(1, 12);
  GuidanceConfig cfg;

  for (int trial = 0; trial < 300; ++trial) {
    const int dim = dim_dist(rng);
    const int rows = row_dist(rng);
    // guarantee feasibility: right-hand sides reachable from a witness
    Eigen::VectorXd witness(dim);
    for (int i = 0; i < dim; ++i) witness(i) = gauss(rng);

    Eigen::MatrixXd A(rows, dim);
    Eigen::VectorXd b(rows);
    std::vector<QpRow> qp_rows;
    for (int i = 0; i < rows; ++i) {
      Eigen::VectorXd g(dim);
      for (int j = 0; j < dim; ++j) g(j) = gauss(rng);
      if (g.norm() < 1e-3) g(0) += 1.0;
      const double slackness = std::abs(gauss(rng));
      const double rhs = g.dot(witness) - slackness;
      A.row(i) = g;
      b(i) = rhs;
      qp_rows.push_back(dense_row(g, rhs));
    }

    const QpInstance qp = make_instance(dim, qp_rows);
    const QpSolution sol = solve_qp(qp, cfg);
    REQUIRE(sol.status == QpStatus::kOptimal);
    check_kkt(qp, sol);

    const auto oracle = testing::brute_force_min_norm_qp(
        A, b, Eigen::VectorXd::Ones(dim));
    REQUIRE(oracle.has_value());
    CHECK((sol.u - *oracle).norm() <= 1e-8);
  }
}

TEST_CASE("block-separated box rows are always jointly feasible") {
  // one row per coordinate, as the per-element box decomposition produces
  std::mt19937_64 rng(33);
  std::normal_distribution<double> gauss;
  GuidanceConfig cfg;
  for (int trial = 0; trial < 200; ++trial) {
    const int dim = 6;
    std::vector<QpRow> rows;
    for (int i = 0; i < dim; ++i) {
      // two opposing rows per coordinate with compatible right-hand sides,
      // mirroring h_upper + h_lower = width > 0
      const double width = 0.5 + std::abs(gauss(rng));
      const double x = gauss(rng);
      QpRow up;
      up.offset = i;
      up.block = Eigen::VectorXd::Constant(1, -1.0);
      up.rhs = -2.0 * (width - x);  // -rate * h_upper with rate 2
      rows.push_back(up);
      QpRow lo;
      lo.offset = i;
      lo.block = Eigen::VectorXd::Constant(1, 1.0);
      lo.rhs = -2.0 * (width + x);
      rows.push_back(lo);
    }
    QpInstance qp;
    qp.dim = dim;
    qp.rows = rows;
    const QpSolution sol = solve_qp(qp, cfg);
    CHECK(sol.status == QpStatus::kOptimal);
  }
}

TEST_CASE("slack recovery keeps barrier rows hard") {
  GuidanceConfig cfg;
  cfg.slack_penalty = 1e6;
  // barrier: u_0 >= 1; consistency row (stored in >= form): -u_0 >= 5
  std::vector<QpRow> rows = {dense_row(unit(2, 0), 1.0, QpRowKind::kBarrierAction),
                             dense_row(unit(2, 0, -1.0), 5.0, QpRowKind::kClf)};
  const QpInstance qp = make_instance(2, rows, 1);
  const QpSolution sol = solve_qp(qp, cfg);
  REQUIRE(sol.status == QpStatus::kRecoveredWithSlack);
  CHECK(sol.u(0) >= 1.0 - 1e-9);  // barrier stays hard
  CHECK(sol.slack > 0.0);
  // consistency row satisfied with the slack folded in
  CHECK(-sol.u(0) + sol.slack >= 5.0 - 1e-7);
}

TEST_CASE("warm start carries the active set between solves") {
  GuidanceConfig cfg;
  std::vector<int> warm;
  const QpInstance qp1 = make_instance(3, {dense_row(unit(3, 1), 1.5)});
  const QpSolution s1 = solve_qp(qp1, cfg, &warm);
  CHECK(s1.status == QpStatus::kOptimal);
  CHECK(warm == std::vector<int>{0});
  const QpInstance qp2 = make_instance(3, {dense_row(unit(3, 1), 1.6)});
  const QpSolution s2 = solve_qp(qp2, cfg, &warm);
  CHECK(s2.status == QpStatus::kOptimal);
  CHECK(s2.u(1) == doctest::Approx(1.6));
}

TEST_CASE("non-finite instances are rejected") {
  GuidanceConfig cfg;
  QpInstance qp = make_instance(
      2, {dense_row(unit(2, 0), std::numeric_limits<double>::quiet_NaN())});
  CHECK_THROWS_AS(solve_qp(qp, cfg), std::invalid_argument);
}
