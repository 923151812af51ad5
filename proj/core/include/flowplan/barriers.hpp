#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "flowplan/dynamics.hpp"
#include "flowplan/trajectory.hpp"

namespace flowplan {

enum class ConstraintKind { kState, kAction };

// One scalar barrier h with its gradient confined to a single s(k) or a(k)
// block of the flat trajectory. h > 0 strictly inside the constraint set,
// h < 0 outside, h = 0 on the boundary.
struct BarrierRow {
  double value = 0.0;
  int block_offset = 0;            // start of the supported block in the flat vector
  Eigen::VectorXd block_gradient;  // gradient w.r.t. that block only
  ConstraintKind kind = ConstraintKind::kState;
  int time_index = 0;
  int constraint_id = 0;
  // Lipschitz data consumed by the robust state-row margin.
  double lipschitz_value = 1.0;     // L_h
  double lipschitz_gradient = 0.0;  // L_grad_h
  bool degenerate = false;          // zero gradient (clamped singularity)

  Eigen::VectorXd dense_gradient(int flat_size) const;
};

// Keep-out region ((x-x0)/a)^p + ((y-y0)/b)^p >= 1 over two position
// coordinates; p = 2 covers circles/ellipses, p = 4 the quartic barrier.
struct ObstacleSpec {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double semi_axis_x = 1.0;
  double semi_axis_y = 1.0;
  int exponent = 2;

  void validate() const;
  bool is_circle() const { return exponent == 2 && semi_axis_x == semi_axis_y; }
};

struct BoxSpec {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  void validate() const;
  static BoxSpec symmetric(int dim, double bound);
};

struct HalfspaceSpec {
  int coordinate = 0;   // index inside the state block
  double bound = 0.0;   // z
  bool below = true;    // constraint x < z when true, x > z otherwise
};

struct ConstraintSpec {
  // State constraints, applied at k = 1 ... H-1 (k = 0 is conditioned).
  std::vector<ObstacleSpec> state_obstacles;
  std::vector<HalfspaceSpec> state_halfspaces;
  std::vector<BoxSpec> state_boxes;
  // Action constraints, applied at k = 0 ... H-1.
  std::vector<BoxSpec> action_boxes;

  bool robust = false;
  LipschitzEstimates robust_margin;  // filled by the caller when robust

  // Position coordinates inside the state block that obstacles act on.
  int position_x = 0;
  int position_y = 1;

  bool empty() const {
    return state_obstacles.empty() && state_halfspaces.empty() &&
           state_boxes.empty() && action_boxes.empty();
  }

  std::string to_json() const;
  static ConstraintSpec from_json(const std::string& text);
};

// Gradient-norm clamp guarding the superellipse center where grad g = 0.
inline constexpr double kSdfGradClamp = 1e-6;

// Per-element linear rows h = upper_i - x_i and h = x_i - lower_i, unit
// gradients.
std::vector<BarrierRow> sdf_box(const Eigen::VectorXd& x, const BoxSpec& box);

// Exact signed distance to a circular keep-out: h = |pos - center| - r.
// At the exact center the gradient is undefined; the clamped fallback
// returns a zero gradient and marks the row degenerate.
BarrierRow sdf_circle(const Eigen::Vector2d& pos, const ObstacleSpec& obs);

// First-order normalized level value h = g / max(|grad g|, clamp) with the
// exact gradient of that expression. Sign matches set membership exactly;
// the magnitude is an approximate distance.
BarrierRow sdf_superellipse(const Eigen::Vector2d& pos, const ObstacleSpec& obs);

// h = z - x (below) or x - z (above), unit gradient.
BarrierRow sdf_halfspace(double x, double bound, bool below);

// All barrier rows of a trajectory: state rows for k = 1 ... H-1, action
// rows for k = 0 ... H-1, gradients embedded at the right block offsets.
std::vector<BarrierRow> assemble_rows(const FlatTrajectory& tau,
                                      const ConstraintSpec& spec);

}  // namespace flowplan
