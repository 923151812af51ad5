#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "flowplan/environment.hpp"
#include "flowplan/lyapunov.hpp"

using namespace flowplan;

TEST_CASE("expert episodes are consistent, bounded and deterministic") {
  const MazeWorld world = MazeWorld::desk_default();
  const Dataset data = generate_expert(world, 50, 16, 77);
  const DoubleIntegrator dynamics({data.meta.dt, data.meta.alpha});
  REQUIRE(data.trajectories.size() == 50);
  for (const auto& tau : data.trajectories) {
    CHECK(lyapunov_value(tau, dynamics) <= 1e-10);
    for (int k = 0; k < tau.layout.horizon; ++k) {
      const Eigen::VectorXd a = action_at(tau, k);
      CHECK(a.lpNorm<Eigen::Infinity>() <= world.train_action_bound + 1e-12);
    }
  }
  const Dataset again = generate_expert(world, 50, 16, 77);
  for (std::size_t i = 0; i < data.trajectories.size(); ++i) {
    CHECK(data.trajectories[i].values == again.trajectories[i].values);
  }
  CHECK_THROWS(generate_expert(world, 0, 16, 1));
}

TEST_CASE("test obstacles do not block feasible paths") {
  const MazeWorld world = MazeWorld::desk_default();
  const double rate = expert_goal_reach_rate(world, 200, 24, 99);
  MESSAGE("expert reach rate with avoidance: ", rate);
  CHECK(rate >= 0.95);
}

TEST_CASE("dataset round trip is bit-exact; corrupt files fail loudly") {
  const MazeWorld world = MazeWorld::desk_default();
  const Dataset data = generate_expert(world, 12, 10, 5);
  const std::string path = "test_dataset.bin";
  save_dataset(data, path);

  SUBCASE("round trip") {
    const Dataset loaded = load_dataset(path);
    REQUIRE(loaded.trajectories.size() == data.trajectories.size());
    for (std::size_t i = 0; i < data.trajectories.size(); ++i) {
      CHECK(loaded.trajectories[i].values == data.trajectories[i].values);
    }
    CHECK(loaded.meta.dt == data.meta.dt);
    CHECK(loaded.meta.seed == data.meta.seed);
  }

  SUBCASE("corrupted magic bytes") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXXX", 4);
    f.close();
    CHECK_THROWS_WITH_AS(load_dataset(path),
                         doctest::Contains("format error"), std::runtime_error);
  }

  SUBCASE("mismatched layout expectation") {
    CHECK_THROWS_WITH_AS(load_dataset(path, TrajectoryLayout(4, 2, 99)),
                         doctest::Contains("layout error"), std::runtime_error);
  }

  SUBCASE("truncated payload") {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    CHECK_THROWS_WITH_AS(load_dataset(path),
                         doctest::Contains("truncated"), std::runtime_error);
  }

  std::remove(path.c_str());
  std::remove((path + ".json").c_str());
}

TEST_CASE("surrogate reward definition") {
  MazeWorld world = MazeWorld::desk_default();
  world.goal.center = Eigen::Vector2d(1.0, 1.0);
  const TrajectoryLayout layout(4, 2, 2);

  auto traj = [&](Eigen::Vector2d start, Eigen::Vector2d end) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(layout.flat_size());
    v.segment(layout.state_offset(0), 2) = start;
    v.segment(layout.state_offset(1), 2) = end;
    return FlatTrajectory(layout, v);
  };

  CHECK(reward(traj({0.0, 1.0}, {1.0, 1.0}), world) == doctest::Approx(1.0));
  CHECK(reward(traj({0.0, 1.0}, {0.0, 1.0}), world) == doctest::Approx(0.0));
  CHECK(reward(traj({0.0, 1.0}, {0.5, 1.0}), world) == doctest::Approx(0.5));
  // moving away clips at zero
  CHECK(reward(traj({0.5, 1.0}, {0.0, 1.0}), world) == doctest::Approx(0.0));
}

TEST_CASE("world JSON round trip") {
  const MazeWorld world = MazeWorld::desk_default();
  const MazeWorld loaded = MazeWorld::from_json(world.to_json());
  CHECK(loaded.workspace_max.x() == world.workspace_max.x());
  CHECK(loaded.goal.center == world.goal.center);
  CHECK(loaded.goal.radius == world.goal.radius);
  CHECK(loaded.train_action_bound == world.train_action_bound);
  CHECK(loaded.test_constraints.state_obstacles.size() == 2);
  CHECK(loaded.test_constraints.state_obstacles[1].exponent == 4);
  CHECK(loaded.test_constraints.action_boxes.size() == 1);
}

TEST_CASE("transition extraction") {
  const MazeWorld world = MazeWorld::desk_default();
  const Dataset data = generate_expert(world, 3, 6, 1);
  const auto transitions = dataset_transitions(data);
  CHECK(transitions.size() == 3 * 5);
  const DoubleIntegrator dynamics;
  for (const auto& tr : transitions) {
    CHECK((dynamics.step(tr.s, tr.a) - tr.s_next).norm() <= 1e-12);
  }
}
