#include "flowplan/barriers.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace flowplan {

namespace {

double ipow(double base, int exp) {
  double r = 1.0;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

struct LevelSet {
  double g;
  Eigen::Vector2d grad;
  Eigen::Vector2d diag_hess;  // cross terms are zero for separable g
};

LevelSet superellipse_level(const Eigen::Vector2d& pos, const ObstacleSpec& obs) {
  const int p = obs.exponent;
  const double ux = (pos.x() - obs.center.x()) / obs.semi_axis_x;
  const double uy = (pos.y() - obs.center.y()) / obs.semi_axis_y;
  LevelSet ls;
  ls.g = ipow(ux, p) + ipow(uy, p) - 1.0;
  ls.grad.x() = p * ipow(ux, p - 1) / obs.semi_axis_x;
  ls.grad.y() = p * ipow(uy, p - 1) / obs.semi_axis_y;
  ls.diag_hess.x() = p * (p - 1) * ipow(ux, p - 2) / (obs.semi_axis_x * obs.semi_axis_x);
  ls.diag_hess.y() = p * (p - 1) * ipow(uy, p - 2) / (obs.semi_axis_y * obs.semi_axis_y);
  return ls;
}

// Sampled Lipschitz bounds of the normalized level value around one
// obstacle; only needed when the robust margin is active.
struct SampledLipschitz {
  double value;
  double gradient;
};

SampledLipschitz sample_superellipse_lipschitz(const ObstacleSpec& obs) {
  constexpr int kGrid = 41;
  constexpr double kSpan = 3.0;
  const double fd = 1e-5 * std::min(obs.semi_axis_x, obs.semi_axis_y);
  double max_grad = 0.0;
  double max_hess = 0.0;
  for (int i = 0; i < kGrid; ++i) {
    for (int j = 0; j < kGrid; ++j) {
      Eigen::Vector2d pos(
          obs.center.x() + kSpan * obs.semi_axis_x * (2.0 * i / (kGrid - 1) - 1.0),
          obs.center.y() + kSpan * obs.semi_axis_y * (2.0 * j / (kGrid - 1) - 1.0));
      const BarrierRow row = sdf_superellipse(pos, obs);
      if (row.degenerate) continue;
      max_grad = std::max(max_grad, row.block_gradient.norm());
      for (int axis = 0; axis < 2; ++axis) {
        Eigen::Vector2d lo = pos, hi = pos;
        lo(axis) -= fd;
        hi(axis) += fd;
        const BarrierRow rlo = sdf_superellipse(lo, obs);
        const BarrierRow rhi = sdf_superellipse(hi, obs);
        if (rlo.degenerate || rhi.degenerate) continue;
        const double col_norm =
            ((rhi.block_gradient - rlo.block_gradient) / (2.0 * fd)).norm();
        max_hess = std::max(max_hess, col_norm);
      }
    }
  }
  return {max_grad, max_hess};
}

}  // namespace

Eigen::VectorXd BarrierRow::dense_gradient(int flat_size) const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(flat_size);
  g.segment(block_offset, block_gradient.size()) = block_gradient;
  return g;
}

void ObstacleSpec::validate() const {
  if (semi_axis_x <= 0.0 || semi_axis_y <= 0.0) {
    throw std::invalid_argument("ObstacleSpec: semi-axes must be positive");
  }
  if (exponent < 2 || exponent % 2 != 0) {
    throw std::invalid_argument("ObstacleSpec: exponent must be a positive even integer");
  }
}

void BoxSpec::validate() const {
  if (lower.size() != upper.size() || lower.size() == 0) {
    throw std::invalid_argument("BoxSpec: bounds must be nonempty and equally sized");
  }
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    if (!(lower(i) < upper(i))) {
      throw std::invalid_argument("BoxSpec: lower must be elementwise below upper");
    }
  }
}

BoxSpec BoxSpec::symmetric(int dim, double bound) {
  BoxSpec box;
  box.lower = Eigen::VectorXd::Constant(dim, -bound);
  box.upper = Eigen::VectorXd::Constant(dim, bound);
  box.validate();
  return box;
}

std::vector<BarrierRow> sdf_box(const Eigen::VectorXd& x, const BoxSpec& box) {
  box.validate();
  if (x.size() != box.lower.size()) {
    throw std::invalid_argument("sdf_box: dimension mismatch");
  }
  std::vector<BarrierRow> rows;
  rows.reserve(static_cast<std::size_t>(2 * x.size()));
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    BarrierRow upper;
    upper.value = box.upper(i) - x(i);
    upper.block_gradient = Eigen::VectorXd::Zero(x.size());
    upper.block_gradient(i) = -1.0;
    rows.push_back(std::move(upper));

    BarrierRow lower;
    lower.value = x(i) - box.lower(i);
    lower.block_gradient = Eigen::VectorXd::Zero(x.size());
    lower.block_gradient(i) = 1.0;
    rows.push_back(std::move(lower));
  }
  return rows;
}

BarrierRow sdf_circle(const Eigen::Vector2d& pos, const ObstacleSpec& obs) {
  obs.validate();
  const double r = obs.semi_axis_x;
  const Eigen::Vector2d d = pos - obs.center;
  const double dist = d.norm();
  BarrierRow row;
  if (dist <= kSdfGradClamp) {
    row.value = -r;
    row.block_gradient = Eigen::Vector2d::Zero();
    row.degenerate = true;
    return row;
  }
  row.value = dist - r;
  row.block_gradient = d / dist;
  return row;
}

BarrierRow sdf_superellipse(const Eigen::Vector2d& pos, const ObstacleSpec& obs) {
  obs.validate();
  const LevelSet ls = superellipse_level(pos, obs);
  const double grad_norm = ls.grad.norm();
  BarrierRow row;
  if (grad_norm <= kSdfGradClamp) {
    row.value = ls.g / kSdfGradClamp;
    row.block_gradient = Eigen::Vector2d::Zero();
    row.degenerate = true;
    return row;
  }
  row.value = ls.g / grad_norm;
  // d/dx [g / |grad g|] with a diagonal Hessian
  const Eigen::Vector2d grad_of_norm =
      ls.grad.cwiseProduct(ls.diag_hess) / grad_norm;
  row.block_gradient =
      ls.grad / grad_norm - (ls.g / (grad_norm * grad_norm)) * grad_of_norm;
  return row;
}

BarrierRow sdf_halfspace(double x, double bound, bool below) {
  BarrierRow row;
  row.value = below ? bound - x : x - bound;
  row.block_gradient = Eigen::VectorXd::Constant(1, below ? -1.0 : 1.0);
  return row;
}

std::vector<BarrierRow> assemble_rows(const FlatTrajectory& tau,
                                      const ConstraintSpec& spec) {
  const TrajectoryLayout& layout = tau.layout;
  const int n = layout.state_dim;
  const int m = layout.action_dim;

  if (!spec.state_obstacles.empty() || !spec.state_halfspaces.empty()) {
    if (spec.position_x < 0 || spec.position_y < 0 || spec.position_x >= n ||
        spec.position_y >= n) {
      throw std::invalid_argument("assemble_rows: position coordinates outside state block");
    }
  }
  for (const auto& hs : spec.state_halfspaces) {
    if (hs.coordinate < 0 || hs.coordinate >= n) {
      throw std::invalid_argument("assemble_rows: halfspace coordinate outside state block");
    }
  }

  std::vector<SampledLipschitz> obstacle_lipschitz;
  if (spec.robust) {
    obstacle_lipschitz.reserve(spec.state_obstacles.size());
    for (const auto& obs : spec.state_obstacles) {
      obstacle_lipschitz.push_back(obs.is_circle()
                                       ? SampledLipschitz{1.0, 0.0}
                                       : sample_superellipse_lipschitz(obs));
    }
  }

  std::vector<BarrierRow> rows;
  // state rows; k = 0 is pinned by conditioning
  for (int k = 1; k < layout.horizon; ++k) {
    const Eigen::VectorXd s = state_at(tau, k);
    const Eigen::Vector2d pos(s(spec.position_x), s(spec.position_y));
    int id = 0;
    for (const auto& obs : spec.state_obstacles) {
      BarrierRow local = obs.is_circle() ? sdf_circle(pos, obs)
                                         : sdf_superellipse(pos, obs);
      BarrierRow row;
      row.value = local.value;
      row.block_offset = layout.state_offset(k);
      row.block_gradient = Eigen::VectorXd::Zero(n);
      row.block_gradient(spec.position_x) = local.block_gradient(0);
      row.block_gradient(spec.position_y) = local.block_gradient(1);
      row.kind = ConstraintKind::kState;
      row.time_index = k;
      row.constraint_id = id;
      row.degenerate = local.degenerate;
      if (spec.robust) {
        row.lipschitz_value = obstacle_lipschitz[static_cast<std::size_t>(id)].value;
        row.lipschitz_gradient = obstacle_lipschitz[static_cast<std::size_t>(id)].gradient;
      }
      rows.push_back(std::move(row));
      ++id;
    }
    for (const auto& hs : spec.state_halfspaces) {
      BarrierRow local = sdf_halfspace(s(hs.coordinate), hs.bound, hs.below);
      BarrierRow row;
      row.value = local.value;
      row.block_offset = layout.state_offset(k);
      row.block_gradient = Eigen::VectorXd::Zero(n);
      row.block_gradient(hs.coordinate) = local.block_gradient(0);
      row.kind = ConstraintKind::kState;
      row.time_index = k;
      row.constraint_id = id;
      rows.push_back(std::move(row));
      ++id;
    }
    for (const auto& box : spec.state_boxes) {
      for (BarrierRow& local : sdf_box(s, box)) {
        local.block_offset = layout.state_offset(k);
        local.kind = ConstraintKind::kState;
        local.time_index = k;
        local.constraint_id = id;
        rows.push_back(std::move(local));
      }
      ++id;
    }
  }
  // action rows
  for (int k = 0; k < layout.horizon; ++k) {
    const Eigen::VectorXd a = action_at(tau, k);
    int id = 0;
    for (const auto& box : spec.action_boxes) {
      if (box.lower.size() != m) {
        throw std::invalid_argument("assemble_rows: action box dimension mismatch");
      }
      for (BarrierRow& local : sdf_box(a, box)) {
        local.block_offset = layout.action_offset(k);
        local.kind = ConstraintKind::kAction;
        local.time_index = k;
        local.constraint_id = id;
        rows.push_back(std::move(local));
      }
      ++id;
    }
  }
  return rows;
}

std::string ConstraintSpec::to_json() const {
  nlohmann::json j;
  j["state_obstacles"] = nlohmann::json::array();
  for (const auto& o : state_obstacles) {
    j["state_obstacles"].push_back({{"center", {o.center.x(), o.center.y()}},
                                    {"semi_axes", {o.semi_axis_x, o.semi_axis_y}},
                                    {"exponent", o.exponent}});
  }
  j["state_halfspaces"] = nlohmann::json::array();
  for (const auto& h : state_halfspaces) {
    j["state_halfspaces"].push_back(
        {{"coordinate", h.coordinate}, {"bound", h.bound}, {"below", h.below}});
  }
  auto box_json = [](const BoxSpec& b) {
    return nlohmann::json{
        {"lower", std::vector<double>(b.lower.data(), b.lower.data() + b.lower.size())},
        {"upper", std::vector<double>(b.upper.data(), b.upper.data() + b.upper.size())}};
  };
  j["state_boxes"] = nlohmann::json::array();
  for (const auto& b : state_boxes) j["state_boxes"].push_back(box_json(b));
  j["action_boxes"] = nlohmann::json::array();
  for (const auto& b : action_boxes) j["action_boxes"].push_back(box_json(b));
  j["robust"] = robust;
  j["robust_margin"] = {{"L_f", robust_margin.L_f},
                        {"zeta", robust_margin.zeta},
                        {"xi", robust_margin.xi}};
  j["position_coords"] = {position_x, position_y};
  return j.dump(2);
}

ConstraintSpec ConstraintSpec::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ConstraintSpec spec;
  for (const auto& o : j.value("state_obstacles", nlohmann::json::array())) {
    ObstacleSpec obs;
    obs.center.x() = o.at("center").at(0).get<double>();
    obs.center.y() = o.at("center").at(1).get<double>();
    obs.semi_axis_x = o.at("semi_axes").at(0).get<double>();
    obs.semi_axis_y = o.at("semi_axes").at(1).get<double>();
    obs.exponent = o.at("exponent").get<int>();
    obs.validate();
    spec.state_obstacles.push_back(obs);
  }
  for (const auto& h : j.value("state_halfspaces", nlohmann::json::array())) {
    HalfspaceSpec hs;
    hs.coordinate = h.at("coordinate").get<int>();
    hs.bound = h.at("bound").get<double>();
    hs.below = h.value("below", true);
    spec.state_halfspaces.push_back(hs);
  }
  auto box_from = [](const nlohmann::json& b) {
    BoxSpec box;
    const auto lo = b.at("lower").get<std::vector<double>>();
    const auto hi = b.at("upper").get<std::vector<double>>();
    box.lower = Eigen::Map<const Eigen::VectorXd>(lo.data(), static_cast<Eigen::Index>(lo.size()));
    box.upper = Eigen::Map<const Eigen::VectorXd>(hi.data(), static_cast<Eigen::Index>(hi.size()));
    box.validate();
    return box;
  };
  for (const auto& b : j.value("state_boxes", nlohmann::json::array())) {
    spec.state_boxes.push_back(box_from(b));
  }
  for (const auto& b : j.value("action_boxes", nlohmann::json::array())) {
    spec.action_boxes.push_back(box_from(b));
  }
  spec.robust = j.value("robust", false);
  if (j.contains("robust_margin")) {
    spec.robust_margin.L_f = j["robust_margin"].value("L_f", 0.0);
    spec.robust_margin.zeta = j["robust_margin"].value("zeta", 0.0);
    spec.robust_margin.xi = j["robust_margin"].value("xi", 0.0);
  }
  if (j.contains("position_coords")) {
    spec.position_x = j["position_coords"].at(0).get<int>();
    spec.position_y = j["position_coords"].at(1).get<int>();
  }
  return spec;
}

}  // namespace flowplan
