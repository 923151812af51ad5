#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "flowplan/guidance.hpp"

namespace flowplan {

struct TraceNode {
  double t = 0.0;
  double min_state_barrier = 0.0;   // +inf when no state rows exist
  double min_action_barrier = 0.0;  // +inf when no action rows exist
  double lyapunov = 0.0;
  double control_norm = 0.0;
  std::string qp_status = "none";
  // solver diagnostics, meaningful on controlled nodes only
  double kkt_stationarity = 0.0;
  double kkt_feasibility = 0.0;
  double kkt_complementarity = 0.0;
  double slack = 0.0;
  int qp_rows = 0;
  int qp_iterations = 0;
  int dropped_rows = 0;
};

struct PlanTiming {
  double total_seconds = 0.0;
  double drift_seconds = 0.0;  // learned-field evaluations
  double qp_seconds = 0.0;     // row assembly + QP solves
  int controlled_nodes = 0;
  int uncontrolled_nodes = 0;
};

struct PlanResult {
  FlatTrajectory trajectory;
  std::vector<TraceNode> trace;  // one record per ODE node, N+1 on full runs
  std::string sampler;
  std::uint64_t seed = 0;
  GuidanceConfig config;
  bool solver_failed = false;
  PlanTiming timing;

  std::string to_json() const;
  void save_json(const std::string& path) const;
};

// First ODE node index at which the controller is active.
int controlled_start_node(const GuidanceConfig& cfg);

// Two-phase plan: forward Euler on the learned field, with the QP
// controller active from T0 on. The conditioning mask is re-applied after
// every step. A solver failure aborts the run and keeps the trace up to
// the failing node.
PlanResult sample_guided(const VectorFieldModel& flow, const DynamicsModel& dynamics,
                         const ConstraintSpec& spec, const GuidanceConfig& cfg,
                         const Eigen::VectorXd& s0, std::uint64_t seed);

// Controlled phase only, starting from a caller-supplied trajectory at T0.
PlanResult resume_controlled(const VectorFieldModel& flow,
                             const DynamicsModel& dynamics,
                             const ConstraintSpec& spec, const GuidanceConfig& cfg,
                             FlatTrajectory tau_at_t0);

// Plain flow-matching baseline, u = 0 throughout. spec and dynamics are
// optional trace observers.
PlanResult sample_uncontrolled(const VectorFieldModel& flow,
                               const GuidanceConfig& cfg, const Eigen::VectorXd& s0,
                               std::uint64_t seed,
                               const ConstraintSpec* spec = nullptr,
                               const DynamicsModel* dynamics = nullptr);

// Uncontrolled sample followed by elementwise clipping into the spec's box
// constraints; obstacle and halfspace constraints are not clippable and
// are left untouched.
PlanResult sample_truncated(const VectorFieldModel& flow, const ConstraintSpec& spec,
                            const GuidanceConfig& cfg, const Eigen::VectorXd& s0,
                            std::uint64_t seed,
                            const DynamicsModel* dynamics = nullptr);

// Soft penalty-descent baseline: u = gain * (sum over violated rows of
// -h_i * grad h_i - grad V). No feasibility certificate, no QP.
PlanResult sample_gradient_guided(const VectorFieldModel& flow,
                                  const ConstraintSpec& spec,
                                  const DynamicsModel& dynamics,
                                  const GuidanceConfig& cfg,
                                  const Eigen::VectorXd& s0, std::uint64_t seed,
                                  double gain);

}  // namespace flowplan
