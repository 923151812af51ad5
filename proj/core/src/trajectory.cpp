#include "flowplan/trajectory.hpp"

#include <stdexcept>

namespace flowplan {

TrajectoryLayout::TrajectoryLayout(int n, int m, int H)
    : state_dim(n), action_dim(m), horizon(H) {
  if (n < 1 || m < 1 || H < 1) {
    throw std::invalid_argument("TrajectoryLayout: n, m, H must all be >= 1");
  }
}

FlatTrajectory::FlatTrajectory(TrajectoryLayout lay, Eigen::VectorXd vals)
    : layout(lay), values(std::move(vals)) {
  if (values.size() != layout.flat_size()) {
    throw std::invalid_argument("FlatTrajectory: value length does not match layout");
  }
}

FlatTrajectory FlatTrajectory::zero(TrajectoryLayout lay) {
  return FlatTrajectory(lay, Eigen::VectorXd::Zero(lay.flat_size()));
}

ConditioningMask ConditioningMask::initial_state(const TrajectoryLayout& layout,
                                                 const Eigen::VectorXd& s0) {
  if (s0.size() != layout.state_dim) {
    throw std::invalid_argument("ConditioningMask: s0 length must equal state_dim");
  }
  ConditioningMask mask;
  mask.frozen_values = s0;
  return mask;
}

Eigen::VectorXd state_at(const FlatTrajectory& tau, int k) {
  if (k < 0 || k >= tau.layout.horizon) {
    throw std::out_of_range("state_at: time index out of range");
  }
  return tau.values.segment(tau.layout.state_offset(k), tau.layout.state_dim);
}

Eigen::VectorXd action_at(const FlatTrajectory& tau, int k) {
  if (k < 0 || k >= tau.layout.horizon) {
    throw std::out_of_range("action_at: time index out of range");
  }
  return tau.values.segment(tau.layout.action_offset(k), tau.layout.action_dim);
}

FlatTrajectory apply_mask(const FlatTrajectory& tau, const ConditioningMask& mask) {
  FlatTrajectory out = tau;
  apply_mask_in_place(out.values, mask);
  return out;
}

void apply_mask_in_place(Eigen::VectorXd& values, const ConditioningMask& mask) {
  if (mask.empty()) return;
  if (mask.frozen_count() > values.size()) {
    throw std::invalid_argument("apply_mask: mask longer than trajectory");
  }
  values.head(mask.frozen_count()) = mask.frozen_values;
}

void zero_frozen(Eigen::VectorXd& velocity, const ConditioningMask& mask) {
  if (mask.empty()) return;
  if (mask.frozen_count() > velocity.size()) {
    throw std::invalid_argument("zero_frozen: mask longer than vector");
  }
  velocity.head(mask.frozen_count()).setZero();
}

}  // namespace flowplan
