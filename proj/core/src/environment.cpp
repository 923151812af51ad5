#include "flowplan/environment.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "flowplan/lyapunov.hpp"

namespace flowplan {

namespace {

constexpr char kDatasetMagic[4] = {'F', 'P', 'D', 'S'};
constexpr std::uint32_t kDatasetVersion = 1;
constexpr double kConsistencyTolerance = 1e-10;

Eigen::Vector2d avoidance_push(const Eigen::Vector2d& pos, const ConstraintSpec& spec,
                               const ExpertConfig& cfg) {
  Eigen::Vector2d push = Eigen::Vector2d::Zero();
  for (const auto& obs : spec.state_obstacles) {
    const BarrierRow row =
        obs.is_circle() ? sdf_circle(pos, obs) : sdf_superellipse(pos, obs);
    if (row.degenerate) continue;
    if (row.value < cfg.avoid_margin) {
      push += cfg.avoid_gain * (cfg.avoid_margin - row.value) *
              Eigen::Vector2d(row.block_gradient(0), row.block_gradient(1));
    }
  }
  return push;
}

}  // namespace

std::string MazeWorld::to_json() const {
  nlohmann::json j;
  j["workspace"] = {{"min", {workspace_min.x(), workspace_min.y()}},
                    {"max", {workspace_max.x(), workspace_max.y()}}};
  j["goal"] = {{"center", {goal.center.x(), goal.center.y()}}, {"radius", goal.radius}};
  j["train_action_bound"] = train_action_bound;
  j["test_constraints"] = nlohmann::json::parse(test_constraints.to_json());
  return j.dump(2);
}

MazeWorld MazeWorld::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  MazeWorld world;
  const auto& ws = j.at("workspace");
  world.workspace_min.x() = ws.at("min").at(0).get<double>();
  world.workspace_min.y() = ws.at("min").at(1).get<double>();
  world.workspace_max.x() = ws.at("max").at(0).get<double>();
  world.workspace_max.y() = ws.at("max").at(1).get<double>();
  world.goal.center.x() = j.at("goal").at("center").at(0).get<double>();
  world.goal.center.y() = j.at("goal").at("center").at(1).get<double>();
  world.goal.radius = j.at("goal").at("radius").get<double>();
  world.train_action_bound = j.at("train_action_bound").get<double>();
  if (j.contains("test_constraints")) {
    world.test_constraints = ConstraintSpec::from_json(j["test_constraints"].dump());
  }
  return world;
}

void MazeWorld::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write world: " + path);
  out << to_json() << "\n";
}

MazeWorld MazeWorld::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read world: " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return from_json(text);
}

MazeWorld MazeWorld::desk_default() {
  MazeWorld world;
  world.workspace_min = Eigen::Vector2d(0.0, 0.0);
  world.workspace_max = Eigen::Vector2d(2.0, 2.0);
  world.goal.center = Eigen::Vector2d(1.55, 1.55);
  world.goal.radius = 0.1;
  world.train_action_bound = 1.0;

  ObstacleSpec round;
  round.center = Eigen::Vector2d(0.75, 1.05);
  round.semi_axis_x = 0.23;
  round.semi_axis_y = 0.30;
  round.exponent = 2;
  ObstacleSpec quartic;
  quartic.center = Eigen::Vector2d(1.35, 0.75);
  quartic.semi_axis_x = 0.26;
  quartic.semi_axis_y = 0.22;
  quartic.exponent = 4;
  world.test_constraints.state_obstacles = {round, quartic};
  world.test_constraints.action_boxes = {BoxSpec::symmetric(2, 0.1)};
  return world;
}

namespace {

struct Episode {
  FlatTrajectory trajectory;
  Eigen::Vector2d target;
};

std::vector<Episode> run_expert_episodes(const MazeWorld& world, int count,
                                         int horizon, std::uint64_t seed,
                                         const ExpertConfig& cfg) {
  if (count < 1 || horizon < 1) {
    throw std::invalid_argument("generate_expert: count and horizon must be >= 1");
  }
  const DoubleIntegrator dynamics;
  const TrajectoryLayout layout(dynamics.state_dim(), dynamics.action_dim(), horizon);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(world.workspace_min.x(),
                                            world.workspace_max.x());
  std::uniform_real_distribution<double> uy(world.workspace_min.y(),
                                            world.workspace_max.y());

  std::vector<Episode> episodes;
  episodes.reserve(static_cast<std::size_t>(count));
  for (int episode = 0; episode < count; ++episode) {
    const Eigen::Vector2d start(ux(rng), uy(rng));
    Eigen::Vector2d target;
    do {
      target = Eigen::Vector2d(ux(rng), uy(rng));
    } while ((target - start).norm() < cfg.min_goal_distance ||
             (target - start).norm() > cfg.max_goal_distance);

    Eigen::VectorXd values(layout.flat_size());
    Eigen::VectorXd s(4);
    s << start.x(), start.y(), 0.0, 0.0;
    for (int k = 0; k < horizon; ++k) {
      const Eigen::Vector2d pos(s(0), s(1));
      const Eigen::Vector2d vel(s(2), s(3));
      Eigen::Vector2d a = cfg.kp * (target - pos) - cfg.kd * vel;
      if (cfg.avoid_test_obstacles) {
        a += avoidance_push(pos, world.test_constraints, cfg);
      }
      a = a.cwiseMax(-world.train_action_bound).cwiseMin(world.train_action_bound);
      values.segment(layout.state_offset(k), 4) = s;
      values.segment(layout.action_offset(k), 2) = a;
      if (k + 1 < horizon) s = dynamics.step(s, a);
    }
    episodes.push_back(Episode{FlatTrajectory(layout, std::move(values)), target});
  }
  return episodes;
}

}  // namespace

Dataset generate_expert(const MazeWorld& world, int count, int horizon,
                        std::uint64_t seed, const ExpertConfig& cfg) {
  const DoubleIntegrator dynamics;
  Dataset dataset;
  dataset.layout = TrajectoryLayout(4, 2, horizon);
  dataset.meta.dt = dynamics.params().dt;
  dataset.meta.alpha = dynamics.params().alpha;
  dataset.meta.seed = seed;
  for (auto& ep : run_expert_episodes(world, count, horizon, seed, cfg)) {
    dataset.trajectories.push_back(std::move(ep.trajectory));
  }
  return dataset;
}

double expert_goal_reach_rate(const MazeWorld& world, int episodes, int horizon,
                              std::uint64_t seed, const ExpertConfig& base_cfg) {
  ExpertConfig cfg = base_cfg;
  cfg.avoid_test_obstacles = true;
  int reached = 0;
  for (const auto& ep : run_expert_episodes(world, episodes, horizon, seed, cfg)) {
    for (int k = 0; k < ep.trajectory.layout.horizon; ++k) {
      const Eigen::VectorXd s = state_at(ep.trajectory, k);
      if ((Eigen::Vector2d(s(0), s(1)) - ep.target).norm() <= world.goal.radius) {
        ++reached;
        break;
      }
    }
  }
  return static_cast<double>(reached) / static_cast<double>(episodes);
}

void save_dataset(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset: " + path);
  out.write(kDatasetMagic, 4);
  const std::uint32_t version = kDatasetVersion;
  const std::uint32_t n = static_cast<std::uint32_t>(dataset.layout.state_dim);
  const std::uint32_t m = static_cast<std::uint32_t>(dataset.layout.action_dim);
  const std::uint32_t H = static_cast<std::uint32_t>(dataset.layout.horizon);
  const std::uint64_t count = dataset.trajectories.size();
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(reinterpret_cast<const char*>(&m), sizeof(m));
  out.write(reinterpret_cast<const char*>(&H), sizeof(H));
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (const auto& tau : dataset.trajectories) {
    out.write(reinterpret_cast<const char*>(tau.values.data()),
              static_cast<std::streamsize>(sizeof(double) * tau.values.size()));
  }
  if (!out) throw std::runtime_error("short write: " + path);

  nlohmann::json sidecar;
  sidecar["dt"] = dataset.meta.dt;
  sidecar["alpha"] = dataset.meta.alpha;
  sidecar["count"] = count;
  sidecar["seed"] = dataset.meta.seed;
  sidecar["generator_version"] = dataset.meta.generator_version;
  std::ofstream meta(path + ".json");
  if (!meta) throw std::runtime_error("cannot write dataset sidecar: " + path);
  meta << sidecar.dump(2) << "\n";
}

Dataset load_dataset(const std::string& path,
                     std::optional<TrajectoryLayout> expected_layout) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read dataset: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kDatasetMagic, 4) != 0) {
    throw std::runtime_error("dataset format error: bad magic in " + path);
  }
  std::uint32_t version = 0, n = 0, m = 0, H = 0;
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  in.read(reinterpret_cast<char*>(&m), sizeof(m));
  in.read(reinterpret_cast<char*>(&H), sizeof(H));
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (!in) throw std::runtime_error("dataset format error: truncated header in " + path);
  if (version != kDatasetVersion) {
    throw std::runtime_error("dataset format error: unsupported version in " + path);
  }

  Dataset dataset;
  dataset.layout = TrajectoryLayout(static_cast<int>(n), static_cast<int>(m),
                                    static_cast<int>(H));
  if (expected_layout.has_value() && !(dataset.layout == *expected_layout)) {
    throw std::runtime_error("dataset layout error: file layout does not match expectation");
  }
  dataset.trajectories.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Eigen::VectorXd values(dataset.layout.flat_size());
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(sizeof(double) * values.size()));
    if (!in) throw std::runtime_error("dataset format error: truncated payload in " + path);
    dataset.trajectories.emplace_back(dataset.layout, std::move(values));
  }

  std::ifstream meta(path + ".json");
  if (meta) {
    nlohmann::json sidecar = nlohmann::json::parse(meta);
    dataset.meta.dt = sidecar.value("dt", 0.1);
    dataset.meta.alpha = sidecar.value("alpha", 1.0);
    dataset.meta.seed = sidecar.value("seed", std::uint64_t{0});
    dataset.meta.generator_version = sidecar.value("generator_version", 1);
  }

  // stored-consistency invariant, checked in batch on load
  if (dataset.layout.state_dim == 4 && dataset.layout.action_dim == 2) {
    const DoubleIntegrator dynamics({dataset.meta.dt, dataset.meta.alpha});
    for (const auto& tau : dataset.trajectories) {
      if (lyapunov_value(tau, dynamics) > kConsistencyTolerance) {
        throw std::runtime_error("dataset consistency error: stored trajectory violates dynamics");
      }
    }
  }
  return dataset;
}

double reward(const FlatTrajectory& tau, const MazeWorld& world) {
  if (tau.layout.state_dim < 2) {
    throw std::invalid_argument("reward: need at least 2 position coordinates");
  }
  const Eigen::VectorXd first = state_at(tau, 0);
  const Eigen::VectorXd last = state_at(tau, tau.layout.horizon - 1);
  const double d0 = (Eigen::Vector2d(first(0), first(1)) - world.goal.center).norm();
  const double df = (Eigen::Vector2d(last(0), last(1)) - world.goal.center).norm();
  if (d0 < 1e-12) return df <= world.goal.radius ? 1.0 : 0.0;
  return std::clamp(1.0 - df / d0, 0.0, 1.5);
}

Eigen::VectorXd sample_start_state(const MazeWorld& world, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(world.workspace_min.x(),
                                            world.workspace_max.x());
  std::uniform_real_distribution<double> uy(world.workspace_min.y(),
                                            world.workspace_max.y());
  Eigen::VectorXd s0(4);
  s0 << ux(rng), uy(rng), 0.0, 0.0;
  return s0;
}

std::vector<Transition> dataset_transitions(const Dataset& dataset) {
  std::vector<Transition> transitions;
  transitions.reserve(dataset.trajectories.size() *
                      static_cast<std::size_t>(dataset.layout.horizon));
  for (const auto& tau : dataset.trajectories) {
    for (int k = 0; k + 1 < tau.layout.horizon; ++k) {
      transitions.push_back(
          Transition{state_at(tau, k), action_at(tau, k), state_at(tau, k + 1)});
    }
  }
  return transitions;
}

}  // namespace flowplan
