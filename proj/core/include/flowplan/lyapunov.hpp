#pragma once

#include <Eigen/Dense>
#include <vector>

#include "flowplan/dynamics.hpp"
#include "flowplan/trajectory.hpp"

namespace flowplan {

// Residuals l_k = s(k+1) - f(s(k), a(k)) for k = 0 ... H-2.
std::vector<Eigen::VectorXd> consistency_residuals(const FlatTrajectory& tau,
                                                   const DynamicsModel& model);

// V = 1/2 * sum_k |l_k|^2; zero exactly on rollouts of f.
double lyapunov_value(const FlatTrajectory& tau, const DynamicsModel& model);

// Exact gradient of lyapunov_value over the flat trajectory. Block
// structure: the s(0) block is -J_s(0)^T l_0, each a(k) block is
// -J_a(k)^T l_k, interior s(k) blocks carry l_{k-1} - J_s(k)^T l_k, the
// s(H-1) block is l_{H-2}, and the trailing a(H-1) block is zero.
Eigen::VectorXd lyapunov_gradient(const FlatTrajectory& tau,
                                  const DynamicsModel& model);

struct RankDiagnostics {
  bool ok = false;
  bool state_jacobian_nonsingular = false;
  bool action_jacobian_full_rank = false;
  double state_sigma_min = 0.0;
  double state_sigma_max = 0.0;
  double action_sigma_min = 0.0;
  double action_sigma_max = 0.0;
};

// Sampler diagnostic for the CLF feasibility hypothesis: passes when the
// state Jacobian is nonsingular or the (possibly rectangular) action
// Jacobian has full rank, judged at tolerance 1e-8 times the largest
// singular value.
RankDiagnostics rank_condition_check(const DynamicsModel& model,
                                     const Eigen::VectorXd& s,
                                     const Eigen::VectorXd& a);

}  // namespace flowplan
