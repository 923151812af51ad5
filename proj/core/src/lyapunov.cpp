#include "flowplan/lyapunov.hpp"

#include <stdexcept>

namespace flowplan {

std::vector<Eigen::VectorXd> consistency_residuals(const FlatTrajectory& tau,
                                                   const DynamicsModel& model) {
  if (tau.layout.state_dim != model.state_dim() ||
      tau.layout.action_dim != model.action_dim()) {
    throw std::invalid_argument("consistency_residuals: layout does not match model");
  }
  std::vector<Eigen::VectorXd> residuals;
  residuals.reserve(static_cast<std::size_t>(tau.layout.horizon - 1));
  for (int k = 0; k + 1 < tau.layout.horizon; ++k) {
    residuals.push_back(state_at(tau, k + 1) -
                        model.step(state_at(tau, k), action_at(tau, k)));
  }
  return residuals;
}

double lyapunov_value(const FlatTrajectory& tau, const DynamicsModel& model) {
  double sum = 0.0;
  for (const auto& l : consistency_residuals(tau, model)) {
    sum += l.squaredNorm();
  }
  return 0.5 * sum;
}

Eigen::VectorXd lyapunov_gradient(const FlatTrajectory& tau,
                                  const DynamicsModel& model) {
  const TrajectoryLayout& layout = tau.layout;
  const auto residuals = consistency_residuals(tau, model);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(layout.flat_size());
  const int H = layout.horizon;
  for (int k = 0; k + 1 < H; ++k) {
    const Eigen::VectorXd s = state_at(tau, k);
    const Eigen::VectorXd a = action_at(tau, k);
    const Eigen::VectorXd& l = residuals[static_cast<std::size_t>(k)];
    grad.segment(layout.state_offset(k), layout.state_dim) -=
        model.jac_state(s, a).transpose() * l;
    grad.segment(layout.action_offset(k), layout.action_dim) -=
        model.jac_action(s, a).transpose() * l;
    grad.segment(layout.state_offset(k + 1), layout.state_dim) += l;
  }
  return grad;
}

RankDiagnostics rank_condition_check(const DynamicsModel& model,
                                     const Eigen::VectorXd& s,
                                     const Eigen::VectorXd& a) {
  constexpr double kRelTol = 1e-8;
  RankDiagnostics diag;

  const Eigen::MatrixXd Js = model.jac_state(s, a);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd_s(Js);
  diag.state_sigma_max = svd_s.singularValues().size() ? svd_s.singularValues()(0) : 0.0;
  diag.state_sigma_min = svd_s.singularValues().size()
                             ? svd_s.singularValues()(svd_s.singularValues().size() - 1)
                             : 0.0;
  diag.state_jacobian_nonsingular =
      diag.state_sigma_min > kRelTol * diag.state_sigma_max &&
      diag.state_sigma_max > 0.0;

  const Eigen::MatrixXd Ja = model.jac_action(s, a);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd_a(Ja);
  diag.action_sigma_max = svd_a.singularValues().size() ? svd_a.singularValues()(0) : 0.0;
  diag.action_sigma_min = svd_a.singularValues().size()
                              ? svd_a.singularValues()(svd_a.singularValues().size() - 1)
                              : 0.0;
  diag.action_jacobian_full_rank =
      diag.action_sigma_min > kRelTol * diag.action_sigma_max &&
      diag.action_sigma_max > 0.0;

  diag.ok = diag.state_jacobian_nonsingular || diag.action_jacobian_full_rank;
  return diag;
}

}  // namespace flowplan
