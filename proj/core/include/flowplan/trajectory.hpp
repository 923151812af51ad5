#pragma once

#include <Eigen/Dense>
#include <vector>

namespace flowplan {

// Flat trajectory layout: H state-action pairs interleaved as
// [s(0), a(0), s(1), a(1), ..., s(H-1), a(H-1)].
struct TrajectoryLayout {
  int state_dim = 0;   // n
  int action_dim = 0;  // m
  int horizon = 0;     // H, number of state-action pairs

  TrajectoryLayout() = default;
  TrajectoryLayout(int n, int m, int H);

  int flat_size() const { return (state_dim + action_dim) * horizon; }
  int pair_size() const { return state_dim + action_dim; }
  int state_offset(int k) const { return k * pair_size(); }
  int action_offset(int k) const { return k * pair_size() + state_dim; }

  bool operator==(const TrajectoryLayout&) const = default;
};

struct FlatTrajectory {
  TrajectoryLayout layout;
  Eigen::VectorXd values;

  FlatTrajectory() = default;
  FlatTrajectory(TrajectoryLayout lay, Eigen::VectorXd vals);

  static FlatTrajectory zero(TrajectoryLayout lay);
};

// Pins a contiguous prefix of the flat vector (the s(0) block) to fixed
// values; pinned velocity components are zeroed wherever the flow is
// integrated. An empty mask freezes nothing.
struct ConditioningMask {
  Eigen::VectorXd frozen_values;  // length n, or empty

  ConditioningMask() = default;

  static ConditioningMask none() { return {}; }
  static ConditioningMask initial_state(const TrajectoryLayout& layout,
                                        const Eigen::VectorXd& s0);

  bool empty() const { return frozen_values.size() == 0; }
  int frozen_count() const { return static_cast<int>(frozen_values.size()); }
};

// Contiguous s(k) block. Throws std::out_of_range for k outside [0, H).
Eigen::VectorXd state_at(const FlatTrajectory& tau, int k);

// Contiguous a(k) block. Throws std::out_of_range for k outside [0, H).
Eigen::VectorXd action_at(const FlatTrajectory& tau, int k);

// Overwrites the frozen prefix with the mask values, leaves the rest alone.
// Idempotent; the empty mask is the identity.
FlatTrajectory apply_mask(const FlatTrajectory& tau, const ConditioningMask& mask);

// In-place variant used in the sampler's integration loop.
void apply_mask_in_place(Eigen::VectorXd& values, const ConditioningMask& mask);

// Zeroes the frozen components of a velocity-like vector.
void zero_frozen(Eigen::VectorXd& velocity, const ConditioningMask& mask);

}  // namespace flowplan
