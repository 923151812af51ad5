#include "flowplan/sampler.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "flowplan/lyapunov.hpp"

namespace flowplan {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void min_barriers(const std::vector<BarrierRow>& rows, double& state_min,
                  double& action_min) {
  state_min = std::numeric_limits<double>::infinity();
  action_min = std::numeric_limits<double>::infinity();
  for (const auto& row : rows) {
    if (row.kind == ConstraintKind::kState) {
      state_min = std::min(state_min, row.value);
    } else {
      action_min = std::min(action_min, row.value);
    }
  }
}

TraceNode observe(const FlatTrajectory& tau, double t, const ConstraintSpec* spec,
                  const DynamicsModel* dynamics) {
  TraceNode node;
  node.t = t;
  node.min_state_barrier = std::numeric_limits<double>::infinity();
  node.min_action_barrier = std::numeric_limits<double>::infinity();
  if (spec != nullptr) {
    min_barriers(assemble_rows(tau, *spec), node.min_state_barrier,
                 node.min_action_barrier);
  }
  node.lyapunov = dynamics != nullptr ? lyapunov_value(tau, *dynamics) : 0.0;
  return node;
}

ConditioningMask mask_for(const VectorFieldModel& flow, const Eigen::VectorXd& s0) {
  return flow.conditions_initial_state()
             ? ConditioningMask::initial_state(flow.layout(), s0)
             : ConditioningMask::none();
}

FlatTrajectory draw_prior(const VectorFieldModel& flow, const ConditioningMask& mask,
                          std::uint64_t seed) {
  PriorSpec prior{flow.layout(), mask};
  std::mt19937_64 rng(seed);
  return prior.draw(rng);
}

}  // namespace

int controlled_start_node(const GuidanceConfig& cfg) {
  const int N = cfg.ode_steps;
  for (int j = 0; j < N; ++j) {
    const double t = static_cast<double>(j) / static_cast<double>(N);
    if (t >= cfg.t0 - 1e-12) return j;
  }
  return N;  // control never activates
}

namespace {

// Shared Euler loop. Control is active for node indices >= control_from
// (pass N to disable). gradient_gain >= 0 selects the penalty-descent
// baseline instead of the QP controller.
PlanResult integrate(const VectorFieldModel& flow, const DynamicsModel* dynamics,
                     const ConstraintSpec* spec, const GuidanceConfig& cfg,
                     FlatTrajectory tau, const ConditioningMask& mask,
                     int control_from, int start_node, std::uint64_t seed,
                     const std::string& kind, double gradient_gain = -1.0) {
  cfg.validate();
  const int N = cfg.ode_steps;
  const double dt = cfg.dt();
  const auto run_start = Clock::now();

  PlanResult result;
  result.sampler = kind;
  result.seed = seed;
  result.config = cfg;

  ControlScratch scratch;
  apply_mask_in_place(tau.values, mask);

  for (int j = start_node; j <= N; ++j) {
    const double t = static_cast<double>(j) / static_cast<double>(N);
    TraceNode node = observe(tau, t, spec, dynamics);

    if (j == N) {
      result.trace.push_back(std::move(node));
      break;
    }

    Eigen::VectorXd u = Eigen::VectorXd::Zero(tau.layout.flat_size());
    const auto drift_start = Clock::now();
    Eigen::VectorXd v = velocity(flow, tau.values, t);
    result.timing.drift_seconds += seconds_since(drift_start);

    const bool controlled = j >= control_from;
    if (controlled && gradient_gain >= 0.0) {
      // penalty descent on violated rows and the consistency energy
      const auto qp_start = Clock::now();
      Eigen::VectorXd push = Eigen::VectorXd::Zero(tau.layout.flat_size());
      for (const auto& row : assemble_rows(tau, *spec)) {
        if (row.value < 0.0) {
          push.segment(row.block_offset, row.block_gradient.size()) -=
              row.value * row.block_gradient;
        }
      }
      push -= lyapunov_gradient(tau, *dynamics);
      u = gradient_gain * push;
      zero_frozen(u, mask);
      node.control_norm = u.norm();
      result.timing.qp_seconds += seconds_since(qp_start);
      ++result.timing.controlled_nodes;
    } else if (controlled) {
      const auto qp_start = Clock::now();
      const std::vector<BarrierRow> rows = assemble_rows(tau, *spec);
      const double V = lyapunov_value(tau, *dynamics);
      const Eigen::VectorXd gradV = lyapunov_gradient(tau, *dynamics);
      const bool robust_on = cfg.robust || spec->robust;
      const double xi = robust_on ? spec->robust_margin.xi : 0.0;
      double surrogate = scratch.prev_u_norm >= 0.0 ? scratch.prev_u_norm
                                                    : cfg.control_norm_bound;
      QpInstance qp = assemble_qp(tau, v, t, rows, V, gradV, cfg,
                                  flow.frozen_prefix(), surrogate, xi);
      QpSolution sol = solve_qp(qp, cfg, &scratch.warm_active);
      if (robust_on && xi > 0.0 && sol.status != QpStatus::kFailed) {
        qp = assemble_qp(tau, v, t, rows, V, gradV, cfg, flow.frozen_prefix(),
                         sol.u.norm(), xi);
        sol = solve_qp(qp, cfg, &scratch.warm_active);
      }
      result.timing.qp_seconds += seconds_since(qp_start);
      ++result.timing.controlled_nodes;

      node.qp_status = qp_status_name(sol.status);
      node.kkt_stationarity = sol.kkt_stationarity;
      node.kkt_feasibility = sol.kkt_feasibility;
      node.kkt_complementarity = sol.kkt_complementarity;
      node.slack = sol.slack;
      node.qp_rows = static_cast<int>(qp.rows.size());
      node.qp_iterations = sol.iterations;
      node.dropped_rows = qp.dropped_degenerate_rows;

      if (sol.status == QpStatus::kFailed) {
        result.solver_failed = true;
        result.trace.push_back(std::move(node));
        break;
      }
      u = sol.u;
      zero_frozen(u, mask);
      scratch.prev_u_norm = u.norm();
      node.control_norm = scratch.prev_u_norm;
    } else {
      ++result.timing.uncontrolled_nodes;
    }

    result.trace.push_back(std::move(node));
    tau.values += dt * (v + u);
    apply_mask_in_place(tau.values, mask);
  }

  result.trajectory = std::move(tau);
  result.timing.total_seconds = seconds_since(run_start);
  return result;
}

}  // namespace

PlanResult sample_guided(const VectorFieldModel& flow, const DynamicsModel& dynamics,
                         const ConstraintSpec& spec, const GuidanceConfig& cfg,
                         const Eigen::VectorXd& s0, std::uint64_t seed) {
  const ConditioningMask mask = mask_for(flow, s0);
  FlatTrajectory tau = draw_prior(flow, mask, seed);
  return integrate(flow, &dynamics, &spec, cfg, std::move(tau), mask,
                   controlled_start_node(cfg), 0, seed, "guided");
}

PlanResult resume_controlled(const VectorFieldModel& flow,
                             const DynamicsModel& dynamics,
                             const ConstraintSpec& spec, const GuidanceConfig& cfg,
                             FlatTrajectory tau_at_t0) {
  const int j0 = controlled_start_node(cfg);
  ConditioningMask mask = flow.conditions_initial_state()
                              ? ConditioningMask::initial_state(
                                    flow.layout(), state_at(tau_at_t0, 0))
                              : ConditioningMask::none();
  return integrate(flow, &dynamics, &spec, cfg, std::move(tau_at_t0), mask, j0, j0,
                   /*seed=*/0, "guided");
}

PlanResult sample_uncontrolled(const VectorFieldModel& flow,
                               const GuidanceConfig& cfg, const Eigen::VectorXd& s0,
                               std::uint64_t seed, const ConstraintSpec* spec,
                               const DynamicsModel* dynamics) {
  const ConditioningMask mask = mask_for(flow, s0);
  FlatTrajectory tau = draw_prior(flow, mask, seed);
  return integrate(flow, dynamics, spec, cfg, std::move(tau), mask,
                   /*control_from=*/cfg.ode_steps, 0, seed, "uncontrolled");
}

PlanResult sample_truncated(const VectorFieldModel& flow, const ConstraintSpec& spec,
                            const GuidanceConfig& cfg, const Eigen::VectorXd& s0,
                            std::uint64_t seed, const DynamicsModel* dynamics) {
  PlanResult result = sample_uncontrolled(flow, cfg, s0, seed, &spec, dynamics);
  result.sampler = "truncation";
  FlatTrajectory& tau = result.trajectory;
  const TrajectoryLayout& layout = tau.layout;
  for (int k = 0; k < layout.horizon; ++k) {
    for (const auto& box : spec.state_boxes) {
      if (k == 0 && flow.conditions_initial_state()) continue;
      auto block = tau.values.segment(layout.state_offset(k), layout.state_dim);
      block = block.cwiseMax(box.lower).cwiseMin(box.upper);
    }
    for (const auto& box : spec.action_boxes) {
      auto block = tau.values.segment(layout.action_offset(k), layout.action_dim);
      block = block.cwiseMax(box.lower).cwiseMin(box.upper);
    }
  }
  // refresh the final trace record after clipping
  if (!result.trace.empty()) {
    TraceNode node = result.trace.back();
    const TraceNode fresh =
        [&] {
          TraceNode n;
          n.t = node.t;
          min_barriers(assemble_rows(tau, spec), n.min_state_barrier,
                       n.min_action_barrier);
          if (dynamics != nullptr) n.lyapunov = lyapunov_value(tau, *dynamics);
          return n;
        }();
    node.min_state_barrier = fresh.min_state_barrier;
    node.min_action_barrier = fresh.min_action_barrier;
    node.lyapunov = fresh.lyapunov;
    result.trace.back() = node;
  }
  return result;
}

PlanResult sample_gradient_guided(const VectorFieldModel& flow,
                                  const ConstraintSpec& spec,
                                  const DynamicsModel& dynamics,
                                  const GuidanceConfig& cfg,
                                  const Eigen::VectorXd& s0, std::uint64_t seed,
                                  double gain) {
  if (gain < 0.0) throw std::invalid_argument("sample_gradient_guided: gain must be >= 0");
  const ConditioningMask mask = mask_for(flow, s0);
  FlatTrajectory tau = draw_prior(flow, mask, seed);
  PlanResult result =
      integrate(flow, &dynamics, &spec, cfg, std::move(tau), mask,
                controlled_start_node(cfg), 0, seed, "gradient", gain);
  return result;
}

std::string PlanResult::to_json() const {
  nlohmann::json j;
  j["sampler"] = sampler;
  j["seed"] = seed;
  j["solver_failed"] = solver_failed;
  j["layout"] = {{"state_dim", trajectory.layout.state_dim},
                 {"action_dim", trajectory.layout.action_dim},
                 {"horizon", trajectory.layout.horizon}};
  j["trajectory"] = std::vector<double>(
      trajectory.values.data(), trajectory.values.data() + trajectory.values.size());
  j["config"] = {{"c", config.c},
                 {"t0", config.t0},
                 {"ode_steps", config.ode_steps},
                 {"slack_penalty", config.slack_penalty},
                 {"robust", config.robust}};
  j["timing"] = {{"total_seconds", timing.total_seconds},
                 {"drift_seconds", timing.drift_seconds},
                 {"qp_seconds", timing.qp_seconds},
                 {"controlled_nodes", timing.controlled_nodes},
                 {"uncontrolled_nodes", timing.uncontrolled_nodes}};
  nlohmann::json trace_json = nlohmann::json::array();
  auto finite_or_null = [](double v) {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
  };
  for (const auto& node : trace) {
    trace_json.push_back({{"t", node.t},
                          {"min_state_barrier", finite_or_null(node.min_state_barrier)},
                          {"min_action_barrier", finite_or_null(node.min_action_barrier)},
                          {"lyapunov", node.lyapunov},
                          {"control_norm", node.control_norm},
                          {"qp_status", node.qp_status},
                          {"kkt_stationarity", node.kkt_stationarity},
                          {"kkt_feasibility", node.kkt_feasibility},
                          {"kkt_complementarity", node.kkt_complementarity},
                          {"slack", node.slack},
                          {"qp_rows", node.qp_rows},
                          {"qp_iterations", node.qp_iterations},
                          {"dropped_rows", node.dropped_rows}});
  }
  j["trace"] = std::move(trace_json);
  return j.dump(2);
}

void PlanResult::save_json(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write plan result: " + path);
  out << to_json() << "\n";
}

}  // namespace flowplan
