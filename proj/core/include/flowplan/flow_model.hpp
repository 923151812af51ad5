#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "flowplan/mlp.hpp"
#include "flowplan/trajectory.hpp"

namespace flowplan {

// Scalar schedule pair with alpha(0)=0, beta(1)=0, alpha+beta == 1.
struct InterpolationSchedule {
  std::string name;
  std::function<double(double)> alpha;
  std::function<double(double)> beta;
  std::function<double(double)> alpha_dot;
  std::function<double(double)> beta_dot;

  static InterpolationSchedule linear();
  static InterpolationSchedule cosine();
  static InterpolationSchedule from_name(const std::string& name);
};

// Throws if the boundary conditions or the unit-sum identity fail on a
// 101-point grid (tolerance 1e-12).
void validate_schedule(const InterpolationSchedule& sched);

// Standard normal over the flat vector; the mask, when present, pins the
// s(0) block in every draw.
struct PriorSpec {
  TrajectoryLayout layout;
  ConditioningMask mask;

  FlatTrajectory draw(std::mt19937_64& rng) const;
};

struct VectorFieldConfig {
  std::vector<int> hidden_sizes = {256, 256, 256, 256};
  Activation activation = Activation::kTanh;
  int time_embed_dim = 32;       // sinusoidal features appended to the input
  double time_embed_max_cycles = 64.0;
  bool condition_initial_state = true;
  std::uint64_t seed = 0;
};

// The learned velocity field: input [tau; time features], output a velocity
// of the trajectory's flat length. When initial-state conditioning is on,
// the s(0) components of every emitted velocity are structurally zero.
class VectorFieldModel {
 public:
  VectorFieldModel(TrajectoryLayout layout, VectorFieldConfig config);
  VectorFieldModel(TrajectoryLayout layout, VectorFieldConfig config, Mlp net);

  const TrajectoryLayout& layout() const { return layout_; }
  const VectorFieldConfig& config() const { return config_; }
  bool conditions_initial_state() const { return config_.condition_initial_state; }
  int frozen_prefix() const {
    return config_.condition_initial_state ? layout_.state_dim : 0;
  }

  Eigen::VectorXd time_features(double t) const;
  Eigen::VectorXd assemble_input(const Eigen::VectorXd& tau, double t) const;

  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }

  void save(const std::string& path) const;  // blob + <path>.json sidecar
  static VectorFieldModel load(const std::string& path);

 private:
  TrajectoryLayout layout_;
  VectorFieldConfig config_;
  Mlp net_;
};

// alpha(t)*tau1 + beta(t)*tau0, elementwise. Throws on layout mismatch or
// t outside [0, 1].
FlatTrajectory interpolate(const FlatTrajectory& tau0, const FlatTrajectory& tau1,
                           double t, const InterpolationSchedule& sched);

// alpha_dot(t)*tau1 + beta_dot(t)*tau0 (constant tau1 - tau0 for the linear
// schedule).
Eigen::VectorXd target_velocity(const FlatTrajectory& tau0,
                                const FlatTrajectory& tau1, double t,
                                const InterpolationSchedule& sched);

// Network forward pass with time features; frozen components zeroed.
Eigen::VectorXd velocity(const VectorFieldModel& model, const Eigen::VectorXd& tau,
                         double t);

struct CfmSample {
  FlatTrajectory tau0;
  FlatTrajectory tau1;
  double t = 0.0;
};

// Mean squared regression error against the interpolation target; frozen
// components are excluded entirely.
double cfm_loss(const VectorFieldModel& model, const std::vector<CfmSample>& batch,
                const InterpolationSchedule& sched);

// Same loss plus exact parameter gradients via backprop (used by the
// trainer and by the finite-difference checks).
double cfm_loss_and_gradients(const VectorFieldModel& model,
                              const std::vector<CfmSample>& batch,
                              const InterpolationSchedule& sched,
                              MlpGradients& grads);

struct FlowTrainOptions {
  int epochs = 50;
  int batch_size = 32;
  double learning_rate = 2e-4;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  InterpolationSchedule schedule = InterpolationSchedule::linear();
};

struct FlowTrainReport {
  std::vector<double> epoch_loss;
};

// Stochastic gradient descent with momentum on the conditional
// flow-matching objective. tau0 is drawn fresh from the prior each step;
// when the model conditions on the initial state the prior mask follows
// each data trajectory's own s(0). Deterministic for a fixed seed.
// Throws on an empty dataset or a non-finite loss.
FlowTrainReport train(VectorFieldModel& model,
                      const std::vector<FlatTrajectory>& dataset,
                      const PriorSpec& prior, const FlowTrainOptions& opts);

void write_loss_history_csv(const std::string& path,
                            const std::vector<double>& epoch_loss);

}  // namespace flowplan
