#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flowplan/barriers.hpp"
#include "flowplan/dynamics.hpp"
#include "flowplan/trajectory.hpp"

namespace flowplan {

struct GoalRegion {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double radius = 0.1;
};

// Desk-scale planar navigation world on the analytic double integrator.
struct MazeWorld {
  Eigen::Vector2d workspace_min = Eigen::Vector2d::Zero();
  Eigen::Vector2d workspace_max = Eigen::Vector2d::Ones();
  GoalRegion goal;
  double train_action_bound = 1.0;
  // Test-time constraints: obstacles unseen during training plus the
  // tightened action box.
  ConstraintSpec test_constraints;

  std::string to_json() const;
  static MazeWorld from_json(const std::string& text);
  void save(const std::string& path) const;
  static MazeWorld load(const std::string& path);

  // Two-obstacle workspace used by the experiments and tests.
  static MazeWorld desk_default();
};

struct DatasetMetadata {
  double dt = 0.1;
  double alpha = 1.0;
  std::uint64_t seed = 0;
  int generator_version = 1;
};

struct Dataset {
  TrajectoryLayout layout;
  std::vector<FlatTrajectory> trajectories;
  DatasetMetadata meta;
};

// PD gains tuned once against the reach-rate check and frozen.
struct ExpertConfig {
  double kp = 12.0;           // proportional gain on the goal offset
  double kd = 6.0;            // damping on velocity
  double avoid_margin = 0.25; // obstacle clearance that triggers repulsion
  double avoid_gain = 3.0;
  bool avoid_test_obstacles = false;
  double min_goal_distance = 0.3;
  double max_goal_distance = 1.2;
};

// PD waypoint tracking on the double integrator with actions clipped to
// the train bound; every episode is dynamically consistent by
// construction. Unreachable goals yield non-arriving but valid episodes.
Dataset generate_expert(const MazeWorld& world, int count, int horizon,
                        std::uint64_t seed, const ExpertConfig& cfg = {});

// Fraction of episodes whose position enters the goal region when the
// expert is asked to avoid the test obstacles; operationalizes "obstacles
// do not block feasible paths".
double expert_goal_reach_rate(const MazeWorld& world, int episodes, int horizon,
                              std::uint64_t seed, const ExpertConfig& cfg = {});

// Little-endian binary: magic, version, n, m, H, count, then raw doubles;
// metadata lives in a <path>.json sidecar. Round-trips bit-exactly.
void save_dataset(const Dataset& dataset, const std::string& path);

// Throws on bad magic/version, truncation, a mismatched expected layout,
// or stored trajectories that are not consistent under the analytic model.
Dataset load_dataset(const std::string& path,
                     std::optional<TrajectoryLayout> expected_layout = {});

// Surrogate score 1 - d_final/d_initial, clipped to [0, 1.5]. Not a D4RL
// normalized return; comparable only within this repository.
double reward(const FlatTrajectory& tau, const MazeWorld& world);

// Random in-workspace start with zero velocity.
Eigen::VectorXd sample_start_state(const MazeWorld& world, std::uint64_t seed);

// All (s, a, s') triples of a dataset, for forward-model fitting.
std::vector<Transition> dataset_transitions(const Dataset& dataset);

}  // namespace flowplan
