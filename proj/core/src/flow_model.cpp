#include "flowplan/flow_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace flowplan {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

InterpolationSchedule InterpolationSchedule::linear() {
  InterpolationSchedule s;
  s.name = "linear";
  s.alpha = [](double t) { return t; };
  s.beta = [](double t) { return 1.0 - t; };
  s.alpha_dot = [](double) { return 1.0; };
  s.beta_dot = [](double) { return -1.0; };
  return s;
}

InterpolationSchedule InterpolationSchedule::cosine() {
  InterpolationSchedule s;
  s.name = "cosine";
  s.alpha = [](double t) { return 0.5 * (1.0 - std::cos(kPi * t)); };
  s.beta = [](double t) { return 0.5 * (1.0 + std::cos(kPi * t)); };
  s.alpha_dot = [](double t) { return 0.5 * kPi * std::sin(kPi * t); };
  s.beta_dot = [](double t) { return -0.5 * kPi * std::sin(kPi * t); };
  return s;
}

InterpolationSchedule InterpolationSchedule::from_name(const std::string& name) {
  if (name == "linear") return linear();
  if (name == "cosine") return cosine();
  throw std::invalid_argument("unknown interpolation schedule: " + name);
}

void validate_schedule(const InterpolationSchedule& sched) {
  constexpr double tol = 1e-12;
  if (std::abs(sched.alpha(0.0)) > tol || std::abs(sched.beta(1.0)) > tol) {
    throw std::invalid_argument("schedule boundary conditions violated");
  }
  for (int i = 0; i <= 100; ++i) {
    const double t = static_cast<double>(i) / 100.0;
    if (std::abs(sched.alpha(t) + sched.beta(t) - 1.0) > tol) {
      throw std::invalid_argument("schedule alpha+beta != 1 at t=" + std::to_string(t));
    }
  }
}

FlatTrajectory PriorSpec::draw(std::mt19937_64& rng) const {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd v(layout.flat_size());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = gauss(rng);
  apply_mask_in_place(v, mask);
  return FlatTrajectory(layout, std::move(v));
}

VectorFieldModel::VectorFieldModel(TrajectoryLayout layout, VectorFieldConfig config)
    : layout_(layout), config_(std::move(config)), net_([&] {
        std::vector<int> sizes;
        sizes.push_back(layout.flat_size() + config_.time_embed_dim);
        sizes.insert(sizes.end(), config_.hidden_sizes.begin(),
                     config_.hidden_sizes.end());
        sizes.push_back(layout.flat_size());
        return Mlp(sizes, config_.activation, config_.seed);
      }()) {
  if (config_.time_embed_dim < 2 || config_.time_embed_dim % 2 != 0) {
    throw std::invalid_argument("time_embed_dim must be a positive even number");
  }
}

VectorFieldModel::VectorFieldModel(TrajectoryLayout layout, VectorFieldConfig config,
                                   Mlp net)
    : layout_(layout), config_(std::move(config)), net_(std::move(net)) {
  if (net_.input_dim() != layout_.flat_size() + config_.time_embed_dim ||
      net_.output_dim() != layout_.flat_size()) {
    throw std::invalid_argument("VectorFieldModel: network shape does not match layout");
  }
}

Eigen::VectorXd VectorFieldModel::time_features(double t) const {
  const int pairs = config_.time_embed_dim / 2;
  Eigen::VectorXd e(config_.time_embed_dim);
  for (int i = 0; i < pairs; ++i) {
    const double cycles =
        pairs == 1 ? 1.0
                   : std::pow(config_.time_embed_max_cycles,
                              static_cast<double>(i) / static_cast<double>(pairs - 1));
    const double w = 2.0 * kPi * cycles;
    e(2 * i) = std::sin(w * t);
    e(2 * i + 1) = std::cos(w * t);
  }
  return e;
}

Eigen::VectorXd VectorFieldModel::assemble_input(const Eigen::VectorXd& tau,
                                                 double t) const {
  if (tau.size() != layout_.flat_size()) {
    throw std::invalid_argument("assemble_input: wrong trajectory length");
  }
  Eigen::VectorXd x(net_.input_dim());
  x << tau, time_features(t);
  return x;
}

void VectorFieldModel::save(const std::string& path) const {
  save_parameter_blob(path, net_.parameter_vector());
  nlohmann::json sidecar;
  sidecar["type"] = "vector_field";
  sidecar["layout"] = {{"state_dim", layout_.state_dim},
                       {"action_dim", layout_.action_dim},
                       {"horizon", layout_.horizon}};
  sidecar["layer_sizes"] = net_.layer_sizes();
  sidecar["activation"] = activation_name(config_.activation);
  sidecar["time_embed_dim"] = config_.time_embed_dim;
  sidecar["time_embed_max_cycles"] = config_.time_embed_max_cycles;
  sidecar["condition_initial_state"] = config_.condition_initial_state;
  sidecar["schedule"] = "linear";
  sidecar["seed"] = config_.seed;
  std::ofstream out(path + ".json");
  if (!out) throw std::runtime_error("cannot write sidecar for " + path);
  out << sidecar.dump(2) << "\n";
}

VectorFieldModel VectorFieldModel::load(const std::string& path) {
  std::ifstream in(path + ".json");
  if (!in) throw std::runtime_error("missing sidecar for " + path);
  nlohmann::json sidecar = nlohmann::json::parse(in);
  if (sidecar.value("type", "") != "vector_field") {
    throw std::runtime_error("sidecar is not a vector field model: " + path);
  }
  const auto& lj = sidecar.at("layout");
  TrajectoryLayout layout(lj.at("state_dim").get<int>(),
                          lj.at("action_dim").get<int>(),
                          lj.at("horizon").get<int>());
  VectorFieldConfig cfg;
  const auto sizes = sidecar.at("layer_sizes").get<std::vector<int>>();
  cfg.hidden_sizes.assign(sizes.begin() + 1, sizes.end() - 1);
  cfg.activation = activation_from_name(sidecar.at("activation").get<std::string>());
  cfg.time_embed_dim = sidecar.at("time_embed_dim").get<int>();
  cfg.time_embed_max_cycles = sidecar.value("time_embed_max_cycles", 64.0);
  cfg.condition_initial_state = sidecar.at("condition_initial_state").get<bool>();
  cfg.seed = sidecar.value("seed", std::uint64_t{0});
  Mlp net(sizes, cfg.activation, /*seed=*/0);
  net.set_parameter_vector(load_parameter_blob(path));
  return VectorFieldModel(layout, std::move(cfg), std::move(net));
}

FlatTrajectory interpolate(const FlatTrajectory& tau0, const FlatTrajectory& tau1,
                           double t, const InterpolationSchedule& sched) {
  if (!(tau0.layout == tau1.layout)) {
    throw std::invalid_argument("interpolate: layout mismatch");
  }
  if (t < 0.0 || t > 1.0) {
    throw std::invalid_argument("interpolate: t must lie in [0, 1]");
  }
  return FlatTrajectory(tau0.layout,
                        sched.alpha(t) * tau1.values + sched.beta(t) * tau0.values);
}

Eigen::VectorXd target_velocity(const FlatTrajectory& tau0,
                                const FlatTrajectory& tau1, double t,
                                const InterpolationSchedule& sched) {
  if (!(tau0.layout == tau1.layout)) {
    throw std::invalid_argument("target_velocity: layout mismatch");
  }
  return sched.alpha_dot(t) * tau1.values + sched.beta_dot(t) * tau0.values;
}

Eigen::VectorXd velocity(const VectorFieldModel& model, const Eigen::VectorXd& tau,
                         double t) {
  Eigen::VectorXd v = model.net().forward(model.assemble_input(tau, t));
  if (model.frozen_prefix() > 0) v.head(model.frozen_prefix()).setZero();
  return v;
}

namespace {

// Shared forward pass for loss-only and loss+gradient evaluation.
double cfm_batch_forward(const VectorFieldModel& model,
                         const std::vector<CfmSample>& batch,
                         const InterpolationSchedule& sched, Mlp::Workspace& ws,
                         Eigen::MatrixXd& error) {
  if (batch.empty()) throw std::invalid_argument("cfm_loss: empty batch");
  const Eigen::Index B = static_cast<Eigen::Index>(batch.size());
  const int frozen = model.frozen_prefix();
  Eigen::MatrixXd X(model.net().input_dim(), B);
  Eigen::MatrixXd target(model.layout().flat_size(), B);
  for (Eigen::Index j = 0; j < B; ++j) {
    const CfmSample& s = batch[static_cast<std::size_t>(j)];
    const FlatTrajectory tau_t = interpolate(s.tau0, s.tau1, s.t, sched);
    X.col(j) = model.assemble_input(tau_t.values, s.t);
    target.col(j) = target_velocity(s.tau0, s.tau1, s.t, sched);
  }
  Eigen::MatrixXd out = model.net().forward_batch(X, ws);
  error = out - target;
  if (frozen > 0) error.topRows(frozen).setZero();
  return error.squaredNorm() / static_cast<double>(B);
}

}  // namespace

double cfm_loss(const VectorFieldModel& model, const std::vector<CfmSample>& batch,
                const InterpolationSchedule& sched) {
  Mlp::Workspace ws;
  Eigen::MatrixXd error;
  return cfm_batch_forward(model, batch, sched, ws, error);
}

double cfm_loss_and_gradients(const VectorFieldModel& model,
                              const std::vector<CfmSample>& batch,
                              const InterpolationSchedule& sched,
                              MlpGradients& grads) {
  Mlp::Workspace ws;
  Eigen::MatrixXd error;
  const double loss = cfm_batch_forward(model, batch, sched, ws, error);
  const Eigen::MatrixXd dout = (2.0 / static_cast<double>(batch.size())) * error;
  grads = model.net().backward_batch(ws, dout);
  return loss;
}

FlowTrainReport train(VectorFieldModel& model,
                      const std::vector<FlatTrajectory>& dataset,
                      const PriorSpec& prior, const FlowTrainOptions& opts) {
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  for (const auto& tau : dataset) {
    if (!(tau.layout == model.layout())) {
      throw std::invalid_argument("train: dataset layout mismatch");
    }
  }
  validate_schedule(opts.schedule);

  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SgdMomentum opt(opts.learning_rate, opts.momentum);

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  FlowTrainReport report;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t at = 0; at < dataset.size();
         at += static_cast<std::size_t>(opts.batch_size)) {
      const std::size_t stop =
          std::min(dataset.size(), at + static_cast<std::size_t>(opts.batch_size));
      std::vector<CfmSample> batch;
      batch.reserve(stop - at);
      for (std::size_t i = at; i < stop; ++i) {
        CfmSample sample;
        sample.tau1 = dataset[order[i]];
        PriorSpec draw_spec = prior;
        if (model.conditions_initial_state()) {
          draw_spec.mask = ConditioningMask::initial_state(
              model.layout(), state_at(sample.tau1, 0));
        }
        sample.tau0 = draw_spec.draw(rng);
        sample.t = unit(rng);
        batch.push_back(std::move(sample));
      }
      MlpGradients grads;
      const double loss = cfm_loss_and_gradients(model, batch, opts.schedule, grads);
      if (!std::isfinite(loss)) {
        throw std::runtime_error("train: non-finite loss (divergent step size)");
      }
      opt.step(model.net(), grads);
      loss_sum += loss;
      ++batches;
    }
    report.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
  }
  return report;
}

void write_loss_history_csv(const std::string& path,
                            const std::vector<double>& epoch_loss) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write loss history: " + path);
  out << "epoch,mean_loss\n";
  for (std::size_t i = 0; i < epoch_loss.size(); ++i) {
    out << i << "," << std::setprecision(17) << epoch_loss[i] << "\n";
  }
}

}  // namespace flowplan
