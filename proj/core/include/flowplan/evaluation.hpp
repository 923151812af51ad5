#pragma once

#include <string>
#include <vector>

#include "flowplan/environment.hpp"
#include "flowplan/sampler.hpp"

namespace flowplan {

struct MetricsRow {
  double safety_violation = 0.0;         // -min_k min{h_k^s, 0}
  double admissibility_violation = 0.0;  // -min_k min{h_k^a, 0}
  double dyn_consistency = 0.0;          // V(tau)
  double reward = 0.0;
  double wall_seconds = 0.0;
};

enum class SamplerKind { kGuided, kUncontrolled, kTruncation, kGradient };

std::string sampler_kind_name(SamplerKind kind);     // guided|uncontrolled|...
SamplerKind sampler_kind_from_cli(const std::string& name);  // sad|fm|trunc|grad
std::string sampler_kind_to_cli(SamplerKind kind);

// Violations are measured at the trajectory's discrete time steps, from
// the barrier rows of the final trajectory.
MetricsRow evaluate(const PlanResult& result, const ConstraintSpec& spec,
                    const DynamicsModel& dynamics, const MazeWorld& world);

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;
};

Aggregate aggregate(const std::vector<double>& values);

// Everything a batch of plans needs; borrowed for the duration of a call.
struct EvalContext {
  const VectorFieldModel* flow = nullptr;
  const DynamicsModel* dynamics = nullptr;
  const MazeWorld* world = nullptr;
  GuidanceConfig guidance;
  double gradient_gain = 1.0;
  // Needed only by the data-fraction ablation (forward-model retraining).
  const Dataset* dataset = nullptr;
};

PlanResult run_sampler(SamplerKind kind, const EvalContext& ctx,
                       const ConstraintSpec& spec, const Eigen::VectorXd& s0,
                       std::uint64_t seed);

// One aggregate row per sampler over the seed list; writes metrics.csv
// with a fixed column order and returns the CSV text.
std::string run_comparison(const EvalContext& ctx,
                           const std::vector<SamplerKind>& samplers,
                           const std::vector<std::uint64_t>& seeds,
                           const std::string& csv_path);

enum class AblationKind { kT0, kOdeSteps, kCGain, kTighten, kDataFraction };

std::string ablation_kind_name(AblationKind kind);
AblationKind ablation_kind_from_name(const std::string& name);

// Sweeps one knob of the guided sampler over the grid, one aggregate row
// per grid point; writes a CSV and a consistency/reward line plot SVG.
std::string run_ablation(AblationKind kind, const std::vector<double>& grid,
                         const EvalContext& ctx,
                         const std::vector<std::uint64_t>& seeds,
                         const std::string& csv_path, const std::string& svg_path);

// Workspace, obstacle outlines at the g = 0 level set, start/goal markers,
// and the trajectory as a single polyline. Rejects non-planar states.
void plot_trajectory(const PlanResult& result, const MazeWorld& world,
                     const std::string& path);

// Per-node QP diagnostics as JSON lines, appended to the given file.
void append_qp_trace(const PlanResult& result, const std::string& path);

}  // namespace flowplan
