#include "flowplan/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "flowplan/lyapunov.hpp"
#include "flowplan/svg.hpp"

namespace flowplan {

std::string sampler_kind_name(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::kGuided: return "guided";
    case SamplerKind::kUncontrolled: return "uncontrolled";
    case SamplerKind::kTruncation: return "truncation";
    case SamplerKind::kGradient: return "gradient";
  }
  return "unknown";
}

SamplerKind sampler_kind_from_cli(const std::string& name) {
  if (name == "sad") return SamplerKind::kGuided;
  if (name == "fm") return SamplerKind::kUncontrolled;
  if (name == "trunc") return SamplerKind::kTruncation;
  if (name == "grad") return SamplerKind::kGradient;
  throw std::invalid_argument("unknown sampler: " + name +
                              " (expected sad|fm|trunc|grad)");
}

std::string sampler_kind_to_cli(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::kGuided: return "sad";
    case SamplerKind::kUncontrolled: return "fm";
    case SamplerKind::kTruncation: return "trunc";
    case SamplerKind::kGradient: return "grad";
  }
  return "unknown";
}

MetricsRow evaluate(const PlanResult& result, const ConstraintSpec& spec,
                    const DynamicsModel& dynamics, const MazeWorld& world) {
  MetricsRow row;
  double min_state = std::numeric_limits<double>::infinity();
  double min_action = std::numeric_limits<double>::infinity();
  for (const auto& barrier : assemble_rows(result.trajectory, spec)) {
    if (barrier.kind == ConstraintKind::kState) {
      min_state = std::min(min_state, barrier.value);
    } else {
      min_action = std::min(min_action, barrier.value);
    }
  }
  row.safety_violation = std::isfinite(min_state) ? -std::min(min_state, 0.0) : 0.0;
  row.admissibility_violation =
      std::isfinite(min_action) ? -std::min(min_action, 0.0) : 0.0;
  row.dyn_consistency = lyapunov_value(result.trajectory, dynamics);
  row.reward = reward(result.trajectory, world);
  row.wall_seconds = result.timing.total_seconds;
  return row;
}

Aggregate aggregate(const std::vector<double>& values) {
  Aggregate agg;
  if (values.empty()) return agg;
  double sum = 0.0;
  for (double v : values) sum += v;
  agg.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - agg.mean) * (v - agg.mean);
  agg.stddev = std::sqrt(sq / static_cast<double>(values.size()));
  return agg;
}

PlanResult run_sampler(SamplerKind kind, const EvalContext& ctx,
                       const ConstraintSpec& spec, const Eigen::VectorXd& s0,
                       std::uint64_t seed) {
  switch (kind) {
    case SamplerKind::kGuided:
      return sample_guided(*ctx.flow, *ctx.dynamics, spec, ctx.guidance, s0, seed);
    case SamplerKind::kUncontrolled:
      return sample_uncontrolled(*ctx.flow, ctx.guidance, s0, seed, &spec,
                                 ctx.dynamics);
    case SamplerKind::kTruncation:
      return sample_truncated(*ctx.flow, spec, ctx.guidance, s0, seed, ctx.dynamics);
    case SamplerKind::kGradient:
      return sample_gradient_guided(*ctx.flow, spec, *ctx.dynamics, ctx.guidance,
                                    s0, seed, ctx.gradient_gain);
  }
  throw std::logic_error("run_sampler: unreachable");
}

namespace {

constexpr const char* kCsvHeader =
    "safety_mean,safety_std,admissibility_mean,admissibility_std,"
    "consistency_mean,consistency_std,reward_mean,reward_std,"
    "wall_time_mean,wall_time_std";

struct MetricsBatch {
  std::vector<double> safety, admissibility, consistency, reward, wall;

  void push(const MetricsRow& row) {
    safety.push_back(row.safety_violation);
    admissibility.push_back(row.admissibility_violation);
    consistency.push_back(row.dyn_consistency);
    reward.push_back(row.reward);
    wall.push_back(row.wall_seconds);
  }

  std::string csv_cells() const {
    std::ostringstream out;
    out << std::setprecision(10);
    for (const auto* values :
         {&safety, &admissibility, &consistency, &reward, &wall}) {
      const Aggregate agg = aggregate(*values);
      out << agg.mean << "," << agg.stddev;
      if (values != &wall) out << ",";
    }
    return out.str();
  }
};

MetricsBatch collect(SamplerKind kind, const EvalContext& ctx,
                     const ConstraintSpec& spec, const DynamicsModel& eval_dynamics,
                     const std::vector<std::uint64_t>& seeds) {
  MetricsBatch batch;
  for (std::uint64_t seed : seeds) {
    const Eigen::VectorXd s0 = sample_start_state(*ctx.world, seed);
    const PlanResult result = run_sampler(kind, ctx, spec, s0, seed);
    batch.push(evaluate(result, spec, eval_dynamics, *ctx.world));
  }
  return batch;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write: " + path);
  out << text;
}

std::vector<std::pair<double, double>> obstacle_outline(const ObstacleSpec& obs,
                                                        int segments = 96) {
  // exact boundary parameterization of |x/a|^p + |y/b|^p = 1
  std::vector<std::pair<double, double>> points;
  points.reserve(static_cast<std::size_t>(segments));
  const double exponent = 2.0 / static_cast<double>(obs.exponent);
  for (int i = 0; i < segments; ++i) {
    const double theta = 2.0 * M_PI * static_cast<double>(i) / segments;
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const double x = obs.center.x() + obs.semi_axis_x * std::copysign(1.0, c) *
                                          std::pow(std::abs(c), exponent);
    const double y = obs.center.y() + obs.semi_axis_y * std::copysign(1.0, s) *
                                          std::pow(std::abs(s), exponent);
    points.emplace_back(x, y);
  }
  return points;
}

// Guided sweep of one knob; returns the per-point batches.
struct SweepPoint {
  double value = 0.0;
  MetricsBatch batch;
};

}  // namespace

std::string run_comparison(const EvalContext& ctx,
                           const std::vector<SamplerKind>& samplers,
                           const std::vector<std::uint64_t>& seeds,
                           const std::string& csv_path) {
  if (ctx.flow == nullptr || ctx.dynamics == nullptr || ctx.world == nullptr) {
    throw std::invalid_argument("run_comparison: incomplete context");
  }
  if (seeds.empty()) throw std::invalid_argument("run_comparison: empty seed list");

  std::ostringstream csv;
  csv << "sampler," << kCsvHeader << "\n";
  for (SamplerKind kind : samplers) {
    const MetricsBatch batch =
        collect(kind, ctx, ctx.world->test_constraints, *ctx.dynamics, seeds);
    csv << sampler_kind_to_cli(kind) << "," << batch.csv_cells() << "\n";
  }
  const std::string text = csv.str();
  if (!csv_path.empty()) write_text(csv_path, text);
  return text;
}

std::string ablation_kind_name(AblationKind kind) {
  switch (kind) {
    case AblationKind::kT0: return "t0";
    case AblationKind::kOdeSteps: return "ode_steps";
    case AblationKind::kCGain: return "c_gain";
    case AblationKind::kTighten: return "tighten";
    case AblationKind::kDataFraction: return "data_fraction";
  }
  return "unknown";
}

AblationKind ablation_kind_from_name(const std::string& name) {
  if (name == "t0") return AblationKind::kT0;
  if (name == "ode_steps") return AblationKind::kOdeSteps;
  if (name == "c_gain" || name == "c") return AblationKind::kCGain;
  if (name == "tighten") return AblationKind::kTighten;
  if (name == "data_fraction") return AblationKind::kDataFraction;
  throw std::invalid_argument("unknown ablation kind: " + name);
}

std::string run_ablation(AblationKind kind, const std::vector<double>& grid,
                         const EvalContext& ctx,
                         const std::vector<std::uint64_t>& seeds,
                         const std::string& csv_path, const std::string& svg_path) {
  if (grid.empty()) throw std::invalid_argument("run_ablation: empty grid");
  if (ctx.flow == nullptr || ctx.dynamics == nullptr || ctx.world == nullptr) {
    throw std::invalid_argument("run_ablation: incomplete context");
  }

  std::vector<SweepPoint> points;
  for (double value : grid) {
    EvalContext local = ctx;
    ConstraintSpec spec = ctx.world->test_constraints;
    const DynamicsModel* eval_dynamics = ctx.dynamics;

    // The data-fraction sweep retrains the forward model on a subset and
    // plans against it; metrics stay measured against the true dynamics.
    ForwardModelFit refit{ForwardModelNet(1, 1, {}, Activation::kTanh, 0), {}, 0.0};
    switch (kind) {
      case AblationKind::kT0:
        local.guidance.t0 = value;
        break;
      case AblationKind::kOdeSteps:
        local.guidance.ode_steps = static_cast<int>(std::lround(value));
        break;
      case AblationKind::kCGain:
        local.guidance.c = value;
        break;
      case AblationKind::kTighten:
        for (auto& obs : spec.state_obstacles) {
          obs.semi_axis_x *= value;
          obs.semi_axis_y *= value;
        }
        break;
      case AblationKind::kDataFraction: {
        if (ctx.dataset == nullptr) {
          throw std::invalid_argument("data_fraction ablation needs a dataset");
        }
        std::vector<Transition> all = dataset_transitions(*ctx.dataset);
        const std::size_t keep = std::max<std::size_t>(
            32, static_cast<std::size_t>(value * static_cast<double>(all.size())));
        all.resize(std::min(all.size(), keep));
        ForwardModelTrainConfig fit_cfg;
        fit_cfg.hidden_sizes = {64, 64, 64};
        fit_cfg.epochs = 30;
        refit = fit_forward_model(all, fit_cfg);
        local.dynamics = &refit.model;
        break;
      }
    }

    SweepPoint point;
    point.value = value;
    point.batch = collect(SamplerKind::kGuided, local, spec, *eval_dynamics, seeds);
    points.push_back(std::move(point));
  }

  std::ostringstream csv;
  csv << "kind,value," << kCsvHeader << "\n";
  for (const auto& point : points) {
    csv << ablation_kind_name(kind) << "," << std::setprecision(10) << point.value
        << "," << point.batch.csv_cells() << "\n";
  }
  const std::string text = csv.str();
  if (!csv_path.empty()) write_text(csv_path, text);

  if (!svg_path.empty()) {
    // line plot of mean consistency and mean reward vs the swept value
    double x_lo = points.front().value, x_hi = points.back().value;
    if (x_hi <= x_lo) x_hi = x_lo + 1.0;
    double y_hi = 1e-12;
    std::vector<std::pair<double, double>> consistency_line, reward_line;
    for (const auto& point : points) {
      const double cons = aggregate(point.batch.consistency).mean;
      const double rew = aggregate(point.batch.reward).mean;
      consistency_line.emplace_back(point.value, cons);
      reward_line.emplace_back(point.value, rew);
      y_hi = std::max({y_hi, cons, rew});
    }
    SvgDocument doc(x_lo - 0.08 * (x_hi - x_lo), -0.15 * y_hi,
                    x_hi + 0.08 * (x_hi - x_lo), 1.25 * y_hi, 640, 420);
    doc.add_line(x_lo, 0.0, x_hi, 0.0, "#888888", 1.0);
    doc.add_line(x_lo, 0.0, x_lo, y_hi * 1.15, "#888888", 1.0);
    doc.add_polyline(consistency_line, "#c23b22");
    doc.add_polyline(reward_line, "#2266aa");
    doc.add_text(x_lo, y_hi * 1.18, ablation_kind_name(kind) +
                                        " sweep: consistency (red), reward (blue)");
    for (const auto& point : points) {
      doc.add_marker(point.value, aggregate(point.batch.consistency).mean, "#c23b22", 3.0);
      doc.add_marker(point.value, aggregate(point.batch.reward).mean, "#2266aa", 3.0);
    }
    doc.save(svg_path);
  }
  return text;
}

void plot_trajectory(const PlanResult& result, const MazeWorld& world,
                     const std::string& path) {
  const TrajectoryLayout& layout = result.trajectory.layout;
  if (layout.state_dim < 2) {
    throw std::invalid_argument("plot_trajectory: state has no planar position block");
  }
  const double margin =
      0.05 * (world.workspace_max - world.workspace_min).maxCoeff();
  SvgDocument doc(world.workspace_min.x() - margin, world.workspace_min.y() - margin,
                  world.workspace_max.x() + margin, world.workspace_max.y() + margin);

  doc.add_rect(world.workspace_min.x(), world.workspace_min.y(),
               world.workspace_max.x() - world.workspace_min.x(),
               world.workspace_max.y() - world.workspace_min.y(), "#444444", "none");
  for (const auto& obs : world.test_constraints.state_obstacles) {
    doc.add_polygon(obstacle_outline(obs), "#b03030", "#f3c6c6");
  }
  doc.add_circle(world.goal.center.x(), world.goal.center.y(), world.goal.radius,
                 "#2e7d32", "#c9e7ca");

  std::vector<std::pair<double, double>> line;
  line.reserve(static_cast<std::size_t>(layout.horizon));
  for (int k = 0; k < layout.horizon; ++k) {
    const Eigen::VectorXd s = state_at(result.trajectory, k);
    line.emplace_back(s(0), s(1));
  }
  doc.add_polyline(line, "#2266aa");
  doc.add_marker(line.front().first, line.front().second, "#000000");
  doc.add_marker(line.back().first, line.back().second, "#2e7d32");
  doc.save(path);
}

void append_qp_trace(const PlanResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot append QP trace: " + path);
  for (const auto& node : result.trace) {
    if (node.qp_status == "none") continue;
    nlohmann::json j;
    j["seed"] = result.seed;
    j["t"] = node.t;
    j["rows"] = node.qp_rows;
    j["status"] = node.qp_status;
    j["iterations"] = node.qp_iterations;
    j["dropped_rows"] = node.dropped_rows;
    j["slack"] = node.slack;
    j["kkt"] = {{"stationarity", node.kkt_stationarity},
                {"feasibility", node.kkt_feasibility},
                {"complementarity", node.kkt_complementarity}};
    out << j.dump() << "\n";
  }
}

}  // namespace flowplan
