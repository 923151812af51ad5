#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "flowplan/barriers.hpp"
#include "flowplan/flow_model.hpp"
#include "flowplan/trajectory.hpp"

namespace flowplan {

struct GuidanceConfig {
  double c = 0.5;       // scheduling gain
  double t0 = 0.6;      // activation time in (0, 1)
  int ode_steps = 100;  // N
  double slack_penalty = 1e6;
  bool robust = false;
  // First-pass |u| surrogate for the robust margin fixed point.
  double control_norm_bound = 10.0;
  // Optional per-row override of c for the consistency row.
  std::optional<double> clf_gain;
  double kkt_tolerance = 1e-9;
  int max_iterations = 500;

  double dt() const { return 1.0 / static_cast<double>(ode_steps); }
  void validate() const;
};

// Prescribed-time scheduling c / (1 - t)^2; throws for t >= 1.
double phi(double t, double c);

// Euler discretization caps the usable decay rate at 1/dt: beyond that the
// one-step prediction of an enforced row overshoots through the boundary.
// min(phi, 1/dt) is the discrete-exact analogue and is what row right-hand
// sides are built from.
double capped_rate(double t, double c, double dt);

enum class QpRowKind { kBarrierState, kBarrierAction, kClf };

// One inequality a^T u >= b; the gradient lives in a contiguous block.
struct QpRow {
  int offset = 0;
  Eigen::VectorXd block;
  double rhs = 0.0;
  QpRowKind kind = QpRowKind::kBarrierState;
  int source_row = -1;  // index into the BarrierRow list, -1 for the CLF row

  double dot(const Eigen::VectorXd& u) const {
    return block.dot(u.segment(offset, block.size()));
  }
};

struct QpInstance {
  int dim = 0;
  std::vector<QpRow> rows;
  int clf_row = -1;  // index into rows, -1 when omitted
  int dropped_degenerate_rows = 0;
  double phi_value = 0.0;  // scheduler value before the rate cap
  double rate = 0.0;       // capped rate actually used
};

enum class QpStatus { kOptimal, kRecoveredWithSlack, kFailed };

std::string qp_status_name(QpStatus status);

struct QpSolution {
  Eigen::VectorXd u;
  std::vector<int> active_set;
  Eigen::VectorXd duals;  // one multiplier per row
  double slack = 0.0;     // consistency-row slack, zero on plain solves
  QpStatus status = QpStatus::kFailed;
  double kkt_stationarity = 0.0;
  double kkt_feasibility = 0.0;
  double kkt_complementarity = 0.0;
  int iterations = 0;
};

// Builds the minimum-norm instance at flow time t: one row per barrier,
// g^T u >= -rate*h - g^T v (state rows additionally tightened by
// (rate*L_h + |u|*L_grad_h)*xi when the robust margin is on), plus the
// consistency row grad_V^T u <= -rate*V - grad_V^T v stored in >= form.
// Zero-gradient rows are dropped and counted. frozen_prefix components are
// projected out of the consistency row so conditioning is never fought.
QpInstance assemble_qp(const FlatTrajectory& tau, const Eigen::VectorXd& drift,
                       double t, const std::vector<BarrierRow>& rows,
                       double lyapunov, const Eigen::VectorXd& lyapunov_grad,
                       const GuidanceConfig& cfg, int frozen_prefix = 0,
                       double control_norm_surrogate = 0.0,
                       double robust_xi = 0.0);

// Dual active-set solve of min |u|^2 subject to the instance rows. If the
// hard problem fails to certify, re-solves with a quadratic-penalty slack
// on the consistency row only; barrier rows stay hard. warm_start, when
// given, seeds and receives the active set.
QpSolution solve_qp(const QpInstance& qp, const GuidanceConfig& cfg,
                    std::vector<int>* warm_start = nullptr);

// Per-trajectory controller state: warm start plus the previous step's
// control norm for the robust margin fixed point.
struct ControlScratch {
  std::vector<int> warm_active;
  double prev_u_norm = -1.0;
};

struct ControlResult {
  Eigen::VectorXd u;
  QpSolution solution;
  QpInstance instance;
};

// Full controlled-node evaluation: drift, rows, consistency pair, QP.
// The returned u has its frozen components zeroed.
ControlResult control(const FlatTrajectory& tau, double t,
                      const DynamicsModel& model, const ConstraintSpec& spec,
                      const VectorFieldModel& flow, const GuidanceConfig& cfg,
                      ControlScratch* scratch = nullptr);

}  // namespace flowplan
