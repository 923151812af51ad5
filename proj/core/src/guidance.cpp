#include "flowplan/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "flowplan/lyapunov.hpp"

namespace flowplan {

void GuidanceConfig::validate() const {
  // T0 = 1 is the degenerate never-activate case used by baselines.
  if (!(t0 > 0.0 && t0 <= 1.0)) throw std::invalid_argument("GuidanceConfig: T0 must lie in (0,1]");
  if (!(c > 0.0)) throw std::invalid_argument("GuidanceConfig: c must be positive");
  if (ode_steps < 2) throw std::invalid_argument("GuidanceConfig: ode_steps must be >= 2");
  if (!(slack_penalty > 0.0)) throw std::invalid_argument("GuidanceConfig: slack penalty must be positive");
}

double phi(double t, double c) {
  if (t >= 1.0) throw std::domain_error("phi: t >= 1 hits the scheduler singularity");
  const double one_minus = 1.0 - t;
  return c / (one_minus * one_minus);
}

double capped_rate(double t, double c, double dt) {
  return std::min(phi(t, c), 1.0 / dt);
}

std::string qp_status_name(QpStatus status) {
  switch (status) {
    case QpStatus::kOptimal: return "optimal";
    case QpStatus::kRecoveredWithSlack: return "recovered-with-slack";
    case QpStatus::kFailed: return "failed";
  }
  return "unknown";
}

QpInstance assemble_qp(const FlatTrajectory& tau, const Eigen::VectorXd& drift,
                       double t, const std::vector<BarrierRow>& rows,
                       double lyapunov, const Eigen::VectorXd& lyapunov_grad,
                       const GuidanceConfig& cfg, int frozen_prefix,
                       double control_norm_surrogate, double robust_xi) {
  if (drift.size() != tau.layout.flat_size()) {
    throw std::invalid_argument("assemble_qp: drift length mismatch");
  }
  QpInstance qp;
  qp.dim = tau.layout.flat_size();
  qp.phi_value = phi(t, cfg.c);
  qp.rate = capped_rate(t, cfg.c, cfg.dt());

  for (std::size_t i = 0; i < rows.size(); ++i) {
    const BarrierRow& row = rows[i];
    if (row.degenerate || row.block_gradient.isZero(0.0)) {
      ++qp.dropped_degenerate_rows;
      continue;
    }
    QpRow r;
    r.offset = row.block_offset;
    r.block = row.block_gradient;
    r.kind = row.kind == ConstraintKind::kState ? QpRowKind::kBarrierState
                                                : QpRowKind::kBarrierAction;
    r.source_row = static_cast<int>(i);
    r.rhs = -qp.rate * row.value -
            row.block_gradient.dot(drift.segment(r.offset, r.block.size()));
    if (robust_xi > 0.0 && row.kind == ConstraintKind::kState) {
      // RCBF tightening; |u| enters through the caller-supplied surrogate.
      r.rhs += (qp.rate * row.lipschitz_value +
                control_norm_surrogate * row.lipschitz_gradient) *
               robust_xi;
    }
    qp.rows.push_back(std::move(r));
  }

  const bool clf_trivial = lyapunov == 0.0 && lyapunov_grad.isZero(0.0);
  if (!clf_trivial) {
    Eigen::VectorXd g = lyapunov_grad;
    if (frozen_prefix > 0) g.head(frozen_prefix).setZero();
    if (!g.isZero(0.0)) {
      const double clf_c = cfg.clf_gain.value_or(cfg.c);
      const double clf_rate = capped_rate(t, clf_c, cfg.dt());
      QpRow r;
      r.offset = 0;
      r.block = -g;  // grad_V^T u <= rhs stored as -grad_V^T u >= -rhs
      r.kind = QpRowKind::kClf;
      r.rhs = clf_rate * lyapunov + g.dot(drift);
      qp.clf_row = static_cast<int>(qp.rows.size());
      qp.rows.push_back(std::move(r));
    }
  }
  return qp;
}

namespace {

struct ActiveSetOutcome {
  bool certified = false;
  Eigen::VectorXd w;
  Eigen::VectorXd duals;
  std::vector<int> active;
  int iterations = 0;
  double stationarity = 0.0;
  double feasibility = 0.0;
  double complementarity = 0.0;
};

// Measures the three KKT residuals at (w, duals); stationarity is near
// machine precision whenever w was rebuilt from the duals.
void measure_kkt(const std::vector<QpRow>& rows, const Eigen::VectorXd& weights,
                 const Eigen::VectorXd& w, const Eigen::VectorXd& duals,
                 ActiveSetOutcome& out) {
  Eigen::VectorXd stat = 2.0 * w.cwiseProduct(weights);
  double comp = 0.0;
  double feas = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const QpRow& r = rows[i];
    const double resid = r.dot(w) - r.rhs;
    feas = std::max(feas, -resid);
    comp = std::max(comp, std::abs(duals(static_cast<Eigen::Index>(i)) * resid));
    stat.segment(r.offset, r.block.size()) -=
        duals(static_cast<Eigen::Index>(i)) * r.block;
  }
  out.stationarity = stat.lpNorm<Eigen::Infinity>();
  out.feasibility = std::max(feas, 0.0);
  out.complementarity = comp;
}

Eigen::VectorXd primal_from_duals(const std::vector<QpRow>& rows,
                                  const Eigen::VectorXd& duals,
                                  const Eigen::VectorXd& inv_weights, int dim) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double lam = duals(static_cast<Eigen::Index>(i));
    if (lam == 0.0) continue;
    const QpRow& r = rows[i];
    w.segment(r.offset, r.block.size()) += 0.5 * lam * r.block;
  }
  return w.cwiseProduct(inv_weights);
}

// Exact KKT solve on a candidate active set, with single-exchange add/drop
// repair and one step of iterative refinement for ill-conditioned sets.
// Returns true when the certified residuals meet the tolerance.
bool refine_active_set(const std::vector<QpRow>& rows, int dim,
                       const Eigen::VectorXd& weights,
                       const Eigen::VectorXd& inv_weights, double tol,
                       std::vector<int> active, ActiveSetOutcome& out) {
  const int max_exchanges = static_cast<int>(rows.size()) + 8;
  for (int step = 0; step < max_exchanges; ++step) {
    const int na = static_cast<int>(active.size());
    Eigen::VectorXd lambda(na);
    if (na > 0) {
      Eigen::MatrixXd M(na, na);
      Eigen::VectorXd b(na);
      for (int i = 0; i < na; ++i) {
        const QpRow& ri = rows[static_cast<std::size_t>(active[i])];
        b(i) = ri.rhs;
        for (int j = i; j < na; ++j) {
          const QpRow& rj = rows[static_cast<std::size_t>(active[j])];
          const int lo = std::max(ri.offset, rj.offset);
          const int hi = std::min(ri.offset + static_cast<int>(ri.block.size()),
                                  rj.offset + static_cast<int>(rj.block.size()));
          double dot = 0.0;
          for (int k = lo; k < hi; ++k) {
            dot += ri.block(k - ri.offset) * rj.block(k - rj.offset) * inv_weights(k);
          }
          M(i, j) = 0.5 * dot;
          M(j, i) = M(i, j);
        }
      }
      Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
      lambda = ldlt.solve(b);
      lambda += ldlt.solve(b - M * lambda);  // iterative refinement
      if (!lambda.allFinite() ||
          (M * lambda - b).norm() >
              1e-6 * std::max(1.0, b.norm() + lambda.cwiseAbs().maxCoeff())) {
        // inconsistent reduced system: discard the most recent candidate
        active.pop_back();
        continue;
      }
      // drop the most negative multiplier first
      int drop = -1;
      double most_negative = -1e-11 * std::max(1.0, lambda.cwiseAbs().maxCoeff());
      for (int i = 0; i < na; ++i) {
        if (lambda(i) < most_negative) {
          most_negative = lambda(i);
          drop = i;
        }
      }
      if (drop >= 0) {
        active.erase(active.begin() + drop);
        continue;
      }
    }

    Eigen::VectorXd duals = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows.size()));
    for (int i = 0; i < na; ++i) {
      duals(active[static_cast<std::size_t>(i)]) = std::max(0.0, lambda(i));
    }
    const Eigen::VectorXd w = primal_from_duals(rows, duals, inv_weights, dim);

    int enter = -1;
    double worst = -tol;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (std::find(active.begin(), active.end(), static_cast<int>(i)) != active.end()) {
        continue;
      }
      const double resid = rows[i].dot(w) - rows[i].rhs;
      if (resid < worst) {
        worst = resid;
        enter = static_cast<int>(i);
      }
    }
    if (enter >= 0) {
      active.push_back(enter);
      continue;
    }

    measure_kkt(rows, weights, w, duals, out);
    if (out.feasibility <= tol && out.complementarity <= tol * std::max(1.0, duals.cwiseAbs().maxCoeff())) {
      out.certified = true;
      out.w = w;
      out.duals = duals;
      out.active = active;
      return true;
    }
    return false;
  }
  return false;
}

// Dual coordinate ascent (cyclic projection) to localize the active set,
// interleaved with exact refinement attempts. The refinement supplies the
// certified solution; the sweeps only need to get the active set right.
ActiveSetOutcome run_active_set(const std::vector<QpRow>& rows, int dim,
                                const Eigen::VectorXd& weights,
                                const std::vector<int>& seed_active,
                                const GuidanceConfig& cfg) {
  ActiveSetOutcome out;
  const Eigen::VectorXd inv_weights = weights.cwiseInverse();
  const double tol = cfg.kkt_tolerance;

  // fast path: the previous node's active set is usually still right
  std::vector<int> warm;
  for (int idx : seed_active) {
    if (idx >= 0 && idx < static_cast<int>(rows.size())) warm.push_back(idx);
  }
  std::sort(warm.begin(), warm.end());
  warm.erase(std::unique(warm.begin(), warm.end()), warm.end());
  if (refine_active_set(rows, dim, weights, inv_weights, tol, warm, out)) {
    out.iterations = 1;
    return out;
  }

  const Eigen::Index nrows = static_cast<Eigen::Index>(rows.size());
  Eigen::VectorXd curvature(nrows);  // a_i^T W^-1 a_i / 2 per row
  for (Eigen::Index i = 0; i < nrows; ++i) {
    const QpRow& r = rows[static_cast<std::size_t>(i)];
    double dot = 0.0;
    for (int k = 0; k < r.block.size(); ++k) {
      dot += r.block(k) * r.block(k) * inv_weights(r.offset + k);
    }
    curvature(i) = 0.5 * std::max(dot, 1e-300);
  }

  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(nrows);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(dim);
  const int max_sweeps = std::max(cfg.max_iterations, 64);

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    ++out.iterations;
    for (Eigen::Index i = 0; i < nrows; ++i) {
      const QpRow& r = rows[static_cast<std::size_t>(i)];
      const double resid = r.rhs - r.dot(w);
      const double lam_new = std::max(0.0, lambda(i) + resid / curvature(i));
      const double delta = lam_new - lambda(i);
      if (delta != 0.0) {
        lambda(i) = lam_new;
        for (int k = 0; k < r.block.size(); ++k) {
          w(r.offset + k) += 0.5 * delta * r.block(k) * inv_weights(r.offset + k);
        }
      }
    }
    std::vector<int> candidate;
    for (Eigen::Index i = 0; i < nrows; ++i) {
      if (lambda(i) > 0.0) candidate.push_back(static_cast<int>(i));
    }
    if (refine_active_set(rows, dim, weights, inv_weights, tol, candidate, out)) {
      return out;
    }
  }
  return out;  // not certified
}

}  // namespace

QpSolution solve_qp(const QpInstance& qp, const GuidanceConfig& cfg,
                    std::vector<int>* warm_start) {
  for (const QpRow& r : qp.rows) {
    if (!r.block.allFinite() || !std::isfinite(r.rhs)) {
      throw std::invalid_argument("solve_qp: non-finite instance");
    }
  }
  QpSolution sol;
  const std::vector<int> seed = warm_start != nullptr ? *warm_start : std::vector<int>{};

  const Eigen::VectorXd unit_weights = Eigen::VectorXd::Ones(qp.dim);
  ActiveSetOutcome hard = run_active_set(qp.rows, qp.dim, unit_weights, seed, cfg);
  const double tol = cfg.kkt_tolerance;
  if (hard.certified && hard.stationarity <= tol) {
    sol.u = hard.w;
    sol.active_set = hard.active;
    sol.duals = hard.duals;
    sol.status = QpStatus::kOptimal;
    sol.kkt_stationarity = hard.stationarity;
    sol.kkt_feasibility = hard.feasibility;
    sol.kkt_complementarity = hard.complementarity;
    sol.iterations = hard.iterations;
    if (warm_start != nullptr) *warm_start = sol.active_set;
    return sol;
  }

  // Feasibility recovery: quadratic-penalty slack on the consistency row
  // only; barrier rows stay hard.
  if (qp.clf_row >= 0) {
    std::vector<QpRow> rows = qp.rows;
    const int slack_index = qp.dim;
    QpRow& clf = rows[static_cast<std::size_t>(qp.clf_row)];
    Eigen::VectorXd extended = Eigen::VectorXd::Zero(qp.dim + 1);
    extended.segment(clf.offset, clf.block.size()) = clf.block;
    extended(slack_index) = 1.0;
    clf.offset = 0;
    clf.block = extended;

    Eigen::VectorXd weights = Eigen::VectorXd::Ones(qp.dim + 1);
    weights(slack_index) = cfg.slack_penalty;
    ActiveSetOutcome soft = run_active_set(rows, qp.dim + 1, weights, seed, cfg);
    if (soft.certified &&
        soft.stationarity <= tol * std::max(1.0, cfg.slack_penalty)) {
      sol.u = soft.w.head(qp.dim);
      sol.slack = soft.w(slack_index);
      sol.active_set = soft.active;
      sol.duals = soft.duals;
      sol.status = QpStatus::kRecoveredWithSlack;
      sol.kkt_stationarity = soft.stationarity;
      sol.kkt_feasibility = soft.feasibility;
      sol.kkt_complementarity = soft.complementarity;
      sol.iterations = hard.iterations + soft.iterations;
      if (warm_start != nullptr) *warm_start = sol.active_set;
      return sol;
    }
  }

  sol.status = QpStatus::kFailed;
  sol.u = Eigen::VectorXd::Zero(qp.dim);
  sol.duals = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(qp.rows.size()));
  sol.iterations = hard.iterations;
  return sol;
}

ControlResult control(const FlatTrajectory& tau, double t,
                      const DynamicsModel& model, const ConstraintSpec& spec,
                      const VectorFieldModel& flow, const GuidanceConfig& cfg,
                      ControlScratch* scratch) {
  cfg.validate();
  Eigen::VectorXd v = velocity(flow, tau.values, t);
  const std::vector<BarrierRow> rows = assemble_rows(tau, spec);
  const double V = lyapunov_value(tau, model);
  const Eigen::VectorXd gradV = lyapunov_gradient(tau, model);
  const int frozen = flow.frozen_prefix();

  const bool robust_on = cfg.robust || spec.robust;
  const double xi = robust_on ? spec.robust_margin.xi : 0.0;
  double surrogate = cfg.control_norm_bound;
  if (scratch != nullptr && scratch->prev_u_norm >= 0.0) {
    surrogate = scratch->prev_u_norm;
  }

  std::vector<int>* warm = scratch != nullptr ? &scratch->warm_active : nullptr;
  QpInstance qp = assemble_qp(tau, v, t, rows, V, gradV, cfg, frozen, surrogate, xi);
  QpSolution sol = solve_qp(qp, cfg, warm);

  if (robust_on && xi > 0.0 && sol.status != QpStatus::kFailed) {
    // one fixed-point refinement with the freshly observed control norm
    const double refined = sol.u.norm();
    qp = assemble_qp(tau, v, t, rows, V, gradV, cfg, frozen, refined, xi);
    sol = solve_qp(qp, cfg, warm);
  }

  Eigen::VectorXd u = sol.status == QpStatus::kFailed
                          ? Eigen::VectorXd::Zero(tau.layout.flat_size())
                          : sol.u;
  if (frozen > 0) u.head(frozen).setZero();
  if (scratch != nullptr) scratch->prev_u_norm = u.norm();

  return ControlResult{std::move(u), std::move(sol), std::move(qp)};
}

}  // namespace flowplan
