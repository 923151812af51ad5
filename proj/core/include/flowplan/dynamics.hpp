#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "flowplan/mlp.hpp"

namespace flowplan {

// One-step transition model s(k+1) = f(s(k), a(k)) with exact Jacobians.
// Implementations are immutable after construction; step/jacobians are pure.
class DynamicsModel {
 public:
  virtual ~DynamicsModel() = default;

  virtual int state_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual std::string tag() const = 0;  // "analytic" | "learned"

  virtual Eigen::VectorXd step(const Eigen::VectorXd& s,
                               const Eigen::VectorXd& a) const = 0;
  virtual Eigen::MatrixXd jac_state(const Eigen::VectorXd& s,
                                    const Eigen::VectorXd& a) const = 0;
  virtual Eigen::MatrixXd jac_action(const Eigen::VectorXd& s,
                                     const Eigen::VectorXd& a) const = 0;
};

struct DoubleIntegratorParams {
  double dt = 0.1;
  double alpha = 1.0;  // gear ratio divided by mass
};

// Planar double integrator, state [x, y, vx, vy], force input [ax, ay]:
//   positions advance by v*dt + 0.5*alpha*dt^2*a, velocities by alpha*dt*a.
class DoubleIntegrator final : public DynamicsModel {
 public:
  explicit DoubleIntegrator(DoubleIntegratorParams params = {});

  int state_dim() const override { return 4; }
  int action_dim() const override { return 2; }
  std::string tag() const override { return "analytic"; }

  Eigen::VectorXd step(const Eigen::VectorXd& s,
                       const Eigen::VectorXd& a) const override;
  Eigen::MatrixXd jac_state(const Eigen::VectorXd& s,
                            const Eigen::VectorXd& a) const override;
  Eigen::MatrixXd jac_action(const Eigen::VectorXd& s,
                             const Eigen::VectorXd& a) const override;

  const Eigen::MatrixXd& state_matrix() const { return A_; }
  const Eigen::MatrixXd& input_matrix() const { return B_; }
  const DoubleIntegratorParams& params() const { return params_; }

 private:
  DoubleIntegratorParams params_;
  Eigen::MatrixXd A_;
  Eigen::MatrixXd B_;
};

Eigen::VectorXd double_integrator_step(const Eigen::VectorXd& s,
                                       const Eigen::VectorXd& a,
                                       const DoubleIntegratorParams& p);

// Feedforward net mapping [s; a] -> s(k+1); Jacobians come from the exact
// chain-rule product, split into state and action column blocks.
class ForwardModelNet final : public DynamicsModel {
 public:
  ForwardModelNet(int state_dim, int action_dim, std::vector<int> hidden_sizes,
                  Activation act, std::uint64_t seed);
  ForwardModelNet(int state_dim, int action_dim, Mlp net);

  int state_dim() const override { return n_; }
  int action_dim() const override { return m_; }
  std::string tag() const override { return "learned"; }

  Eigen::VectorXd step(const Eigen::VectorXd& s,
                       const Eigen::VectorXd& a) const override;
  Eigen::MatrixXd jac_state(const Eigen::VectorXd& s,
                            const Eigen::VectorXd& a) const override;
  Eigen::MatrixXd jac_action(const Eigen::VectorXd& s,
                             const Eigen::VectorXd& a) const override;

  const Mlp& net() const { return net_; }
  Mlp& net() { return net_; }

  void save(const std::string& path) const;  // blob + <path>.json sidecar
  static ForwardModelNet load(const std::string& path);

 private:
  int n_;
  int m_;
  Mlp net_;
};

struct Transition {
  Eigen::VectorXd s;
  Eigen::VectorXd a;
  Eigen::VectorXd s_next;
};

struct ForwardModelTrainConfig {
  std::vector<int> hidden_sizes = {512, 512, 512};
  Activation activation = Activation::kTanh;
  int epochs = 40;
  int batch_size = 256;
  double learning_rate = 1e-3;
  double holdout_fraction = 0.1;
  std::uint64_t seed = 0;
  // Per-epoch mean loss may rise by at most this relative amount.
  double monotony_tolerance = 0.05;
};

struct ForwardModelFit {
  ForwardModelNet model;
  std::vector<double> epoch_loss;
  double holdout_mse = 0.0;
};

// Least-squares fit of the one-step model. Throws on an empty transition
// set, inconsistent dimensions, or a non-finite loss.
ForwardModelFit fit_forward_model(const std::vector<Transition>& transitions,
                                  const ForwardModelTrainConfig& config);

struct LipschitzEstimates {
  double L_f = 0.0;   // Lipschitz bound of the learned model w.r.t. the state
  double zeta = 0.0;  // worst-case one-step prediction error bound
  double xi = 0.0;    // propagated state-deviation bound over k steps
};

// L_f is the product of per-layer spectral-norm upper bounds (power
// iteration); the first layer is restricted to its state columns since
// zeta perturbs only the state argument. xi = zeta * sum_{i=0}^{k-1} L_f^i.
LipschitzEstimates estimate_lipschitz(const ForwardModelNet& net, double zeta,
                                      int horizon_k);

double propagated_deviation_bound(double zeta, double lipschitz, int horizon_k);

}  // namespace flowplan
