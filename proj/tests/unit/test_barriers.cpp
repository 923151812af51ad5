#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "flowplan/barriers.hpp"
#include "oracles.hpp"

using namespace flowplan;

TEST_CASE("box rows are the per-element linear decomposition") {
  const BoxSpec box = BoxSpec::symmetric(1, 0.1);
  SUBCASE("inside") {
    const auto rows = sdf_box(Eigen::VectorXd::Constant(1, 0.05), box);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].value == doctest::Approx(0.05));
    CHECK(rows[1].value == doctest::Approx(0.15));
  }
  SUBCASE("violated upper side") {
    const auto rows = sdf_box(Eigen::VectorXd::Constant(1, 0.15), box);
    CHECK(rows[0].value == doctest::Approx(-0.05));
    CHECK(rows[1].value == doctest::Approx(0.25));
  }
  SUBCASE("exact bound gives zero") {
    const auto rows = sdf_box(Eigen::VectorXd::Constant(1, 0.1), box);
    CHECK(rows[0].value == 0.0);
  }
  SUBCASE("invalid bounds rejected") {
    BoxSpec bad;
    bad.lower = Eigen::VectorXd::Constant(1, 1.0);
    bad.upper = Eigen::VectorXd::Constant(1, -1.0);
    CHECK_THROWS(sdf_box(Eigen::VectorXd::Zero(1), bad));
  }
}

TEST_CASE("circle SDF is the exact euclidean distance") {
  ObstacleSpec obs;
  obs.center = Eigen::Vector2d(0, 0);
  obs.semi_axis_x = obs.semi_axis_y = 1.0;
  obs.exponent = 2;
  SUBCASE("outside the keep-out") {
    const BarrierRow row = sdf_circle(Eigen::Vector2d(2, 0), obs);
    CHECK(row.value == doctest::Approx(1.0));
    CHECK(row.block_gradient(0) == doctest::Approx(1.0));
    CHECK(row.block_gradient(1) == doctest::Approx(0.0));
  }
  SUBCASE("inside the keep-out") {
    CHECK(sdf_circle(Eigen::Vector2d(0.5, 0), obs).value == doctest::Approx(-0.5));
  }
  SUBCASE("on the boundary") {
    CHECK(sdf_circle(Eigen::Vector2d(0, 1), obs).value == doctest::Approx(0.0));
  }
  SUBCASE("clamped fallback at the center") {
    const BarrierRow row = sdf_circle(Eigen::Vector2d(0, 0), obs);
    CHECK(row.degenerate);
    CHECK(row.block_gradient.isZero(0.0));
    CHECK(row.value == doctest::Approx(-1.0));
  }
}

TEST_CASE("superellipse normalized level values, frozen from hand evaluation") {
  ObstacleSpec obs;
  obs.center = Eigen::Vector2d(0, 0);
  obs.semi_axis_x = obs.semi_axis_y = 1.0;

  SUBCASE("p = 2 at (2, 0): g = 3, |grad g| = 4") {
    obs.exponent = 2;
    CHECK(sdf_superellipse(Eigen::Vector2d(2, 0), obs).value == doctest::Approx(0.75));
  }
  SUBCASE("p = 4 at (1.5, 0): g = 4.0625, |grad g| = 13.5") {
    obs.exponent = 4;
    const double h = sdf_superellipse(Eigen::Vector2d(1.5, 0), obs).value;
    CHECK(h == doctest::Approx(4.0625 / 13.5).epsilon(1e-12));
    CHECK(h == doctest::Approx(0.3009).epsilon(1e-3));
  }
  SUBCASE("level set gives zero") {
    obs.exponent = 4;
    CHECK(sdf_superellipse(Eigen::Vector2d(1, 0), obs).value == doctest::Approx(0.0));
  }
  SUBCASE("center is clamped, zero gradient, degenerate") {
    obs.exponent = 2;
    const BarrierRow row = sdf_superellipse(Eigen::Vector2d(0, 0), obs);
    CHECK(row.degenerate);
    CHECK(row.block_gradient.isZero(0.0));
    CHECK(row.value < 0.0);
  }
}

TEST_CASE("halfspace rows") {
  CHECK(sdf_halfspace(1.4, 1.6, true).value == doctest::Approx(0.2));
  CHECK(sdf_halfspace(1.7, 1.6, true).value == doctest::Approx(-0.1));
  CHECK(sdf_halfspace(1.6, 1.6, true).value == 0.0);
  CHECK(sdf_halfspace(1.7, 1.6, false).value == doctest::Approx(0.1));
}

TEST_CASE("sign convention on sampled points for every SDF kind") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  ObstacleSpec circle;
  circle.center = Eigen::Vector2d(0.3, -0.2);
  circle.semi_axis_x = circle.semi_axis_y = 0.7;
  circle.exponent = 2;
  ObstacleSpec quartic = circle;
  quartic.exponent = 4;
  quartic.semi_axis_x = 0.8;
  quartic.semi_axis_y = 0.5;
  const BoxSpec box = BoxSpec::symmetric(2, 0.6);

  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::Vector2d p(u(rng), u(rng));

    const double hc = sdf_circle(p, circle).value;
    const double dist = (p - circle.center).norm();
    if (dist > circle.semi_axis_x + 1e-9) CHECK(hc > 0.0);
    if (dist < circle.semi_axis_x - 1e-9) CHECK(hc < 0.0);

    const double g = std::pow((p.x() - quartic.center.x()) / quartic.semi_axis_x, 4) +
                     std::pow((p.y() - quartic.center.y()) / quartic.semi_axis_y, 4) - 1.0;
    const double hq = sdf_superellipse(p, quartic).value;
    if (g > 1e-9) CHECK(hq > 0.0);
    if (g < -1e-9) CHECK(hq < 0.0);

    const auto rows = sdf_box(p, box);
    const bool inside = std::abs(p.x()) < 0.6 && std::abs(p.y()) < 0.6;
    double min_row = rows[0].value;
    for (const auto& r : rows) min_row = std::min(min_row, r.value);
    CHECK((min_row > 0.0) == inside);
  }
}

TEST_CASE("unit gradient norms for exact SDF kinds") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  ObstacleSpec circle;
  circle.center = Eigen::Vector2d(0.1, 0.1);
  circle.semi_axis_x = circle.semi_axis_y = 0.5;
  circle.exponent = 2;
  const BoxSpec box = BoxSpec::symmetric(2, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::Vector2d p(u(rng), u(rng));
    const BarrierRow row = sdf_circle(p, circle);
    if (!row.degenerate) CHECK(row.block_gradient.norm() == doctest::Approx(1.0));
    for (const auto& r : sdf_box(p, box)) {
      CHECK(r.block_gradient.norm() == doctest::Approx(1.0));
    }
  }
  CHECK(sdf_halfspace(0.3, 1.0, true).block_gradient.norm() == doctest::Approx(1.0));
}

TEST_CASE("SDF gradients match finite differences away from singular points") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  ObstacleSpec circle;
  circle.center = Eigen::Vector2d(-0.4, 0.2);
  circle.semi_axis_x = circle.semi_axis_y = 0.6;
  circle.exponent = 2;
  ObstacleSpec quartic;
  quartic.center = Eigen::Vector2d(0.5, -0.1);
  quartic.semi_axis_x = 0.7;
  quartic.semi_axis_y = 0.4;
  quartic.exponent = 4;

  int checked = 0;
  for (int trial = 0; trial < 2000 && checked < 1000; ++trial) {
    const Eigen::Vector2d p(u(rng), u(rng));
    if ((p - circle.center).norm() < 0.05) continue;

    const BarrierRow rc = sdf_circle(p, circle);
    const Eigen::VectorXd fd_c = testing::fd_gradient(
        [&](const Eigen::VectorXd& x) {
          return sdf_circle(Eigen::Vector2d(x(0), x(1)), circle).value;
        },
        p, 1e-6);
    CHECK((rc.block_gradient - fd_c).norm() / std::max(1.0, fd_c.norm()) <= 1e-5);

    const BarrierRow rq = sdf_superellipse(p, quartic);
    if (rq.degenerate) continue;
    // skip points whose FD stencil straddles the clamp region
    const double grad_scale = rq.block_gradient.norm();
    if (grad_scale > 1e3) continue;
    const Eigen::VectorXd fd_q = testing::fd_gradient(
        [&](const Eigen::VectorXd& x) {
          return sdf_superellipse(Eigen::Vector2d(x(0), x(1)), quartic).value;
        },
        p, 1e-6);
    CHECK((rq.block_gradient - fd_q).norm() / std::max(1.0, fd_q.norm()) <= 1e-5);
    ++checked;
  }
  CHECK(checked >= 1000);
}

TEST_CASE("assemble_rows counts and placement") {
  const TrajectoryLayout layout(4, 2, 2);
  ConstraintSpec spec;
  ObstacleSpec circle;
  circle.center = Eigen::Vector2d(10, 10);  // far away: interior
  circle.semi_axis_x = circle.semi_axis_y = 0.5;
  circle.exponent = 2;
  spec.state_obstacles.push_back(circle);
  spec.action_boxes.push_back(BoxSpec::symmetric(2, 0.1));

  FlatTrajectory tau = FlatTrajectory::zero(layout);
  const auto rows = assemble_rows(tau, spec);
  // 1 state row (k=1 only) + 2 sides x 2 elements x 2 steps action rows
  REQUIRE(rows.size() == 9);
  int state_rows = 0;
  for (const auto& row : rows) {
    if (row.kind == ConstraintKind::kState) {
      ++state_rows;
      CHECK(row.time_index >= 1);
    }
    CHECK(row.value > 0.0);  // strictly inside every set
  }
  CHECK(state_rows == 1);

  SUBCASE("empty spec gives no rows") {
    CHECK(assemble_rows(tau, ConstraintSpec{}).empty());
  }

  SUBCASE("dense gradient embeds at the block offset") {
    for (const auto& row : rows) {
      const Eigen::VectorXd dense = row.dense_gradient(layout.flat_size());
      CHECK(dense.size() == layout.flat_size());
      CHECK(dense.segment(row.block_offset, row.block_gradient.size()) ==
            row.block_gradient);
      CHECK(dense.norm() == doctest::Approx(row.block_gradient.norm()));
    }
  }
}

TEST_CASE("constraint spec JSON round trip") {
  ConstraintSpec spec;
  ObstacleSpec obs;
  obs.center = Eigen::Vector2d(1.2, 0.8);
  obs.semi_axis_x = 0.3;
  obs.semi_axis_y = 0.4;
  obs.exponent = 4;
  spec.state_obstacles.push_back(obs);
  spec.state_halfspaces.push_back(HalfspaceSpec{1, 1.6, true});
  spec.action_boxes.push_back(BoxSpec::symmetric(2, 0.1));
  spec.robust = true;
  spec.robust_margin = {1.5, 0.01, 0.025};

  const ConstraintSpec loaded = ConstraintSpec::from_json(spec.to_json());
  CHECK(loaded.state_obstacles.size() == 1);
  CHECK(loaded.state_obstacles[0].exponent == 4);
  CHECK(loaded.state_obstacles[0].semi_axis_y == doctest::Approx(0.4));
  CHECK(loaded.state_halfspaces.size() == 1);
  CHECK(loaded.state_halfspaces[0].bound == doctest::Approx(1.6));
  CHECK(loaded.action_boxes.size() == 1);
  CHECK(loaded.robust);
  CHECK(loaded.robust_margin.xi == doctest::Approx(0.025));

  SUBCASE("invalid exponent rejected") {
    ObstacleSpec bad = obs;
    bad.exponent = 3;
    CHECK_THROWS(bad.validate());
  }
}
