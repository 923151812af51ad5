#include "flowplan/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace flowplan {

DoubleIntegrator::DoubleIntegrator(DoubleIntegratorParams params) : params_(params) {
  if (params_.dt <= 0.0 || params_.alpha <= 0.0) {
    throw std::invalid_argument("DoubleIntegrator: dt and alpha must be positive");
  }
  const double dt = params_.dt;
  const double ad = params_.alpha * dt;
  A_ = Eigen::MatrixXd::Identity(4, 4);
  A_(0, 2) = dt;
  A_(1, 3) = dt;
  B_ = Eigen::MatrixXd::Zero(4, 2);
  B_(0, 0) = 0.5 * ad * dt;
  B_(1, 1) = 0.5 * ad * dt;
  B_(2, 0) = ad;
  B_(3, 1) = ad;
}

Eigen::VectorXd DoubleIntegrator::step(const Eigen::VectorXd& s,
                                       const Eigen::VectorXd& a) const {
  return A_ * s + B_ * a;
}

Eigen::MatrixXd DoubleIntegrator::jac_state(const Eigen::VectorXd&,
                                            const Eigen::VectorXd&) const {
  return A_;
}

Eigen::MatrixXd DoubleIntegrator::jac_action(const Eigen::VectorXd&,
                                             const Eigen::VectorXd&) const {
  return B_;
}

Eigen::VectorXd double_integrator_step(const Eigen::VectorXd& s,
                                       const Eigen::VectorXd& a,
                                       const DoubleIntegratorParams& p) {
  return DoubleIntegrator(p).step(s, a);
}

ForwardModelNet::ForwardModelNet(int state_dim, int action_dim,
                                 std::vector<int> hidden_sizes, Activation act,
                                 std::uint64_t seed)
    : n_(state_dim), m_(action_dim), net_([&] {
        std::vector<int> sizes;
        sizes.push_back(state_dim + action_dim);
        sizes.insert(sizes.end(), hidden_sizes.begin(), hidden_sizes.end());
        sizes.push_back(state_dim);
        return Mlp(sizes, act, seed);
      }()) {}

ForwardModelNet::ForwardModelNet(int state_dim, int action_dim, Mlp net)
    : n_(state_dim), m_(action_dim), net_(std::move(net)) {
  if (net_.input_dim() != n_ + m_ || net_.output_dim() != n_) {
    throw std::invalid_argument("ForwardModelNet: network shape does not match (n, m)");
  }
}

Eigen::VectorXd ForwardModelNet::step(const Eigen::VectorXd& s,
                                      const Eigen::VectorXd& a) const {
  Eigen::VectorXd x(n_ + m_);
  x << s, a;
  return net_.forward(x);
}

Eigen::MatrixXd ForwardModelNet::jac_state(const Eigen::VectorXd& s,
                                           const Eigen::VectorXd& a) const {
  Eigen::VectorXd x(n_ + m_);
  x << s, a;
  return net_.input_jacobian(x).leftCols(n_);
}

Eigen::MatrixXd ForwardModelNet::jac_action(const Eigen::VectorXd& s,
                                            const Eigen::VectorXd& a) const {
  Eigen::VectorXd x(n_ + m_);
  x << s, a;
  return net_.input_jacobian(x).rightCols(m_);
}

void ForwardModelNet::save(const std::string& path) const {
  save_parameter_blob(path, net_.parameter_vector());
  nlohmann::json sidecar;
  sidecar["type"] = "forward_model";
  sidecar["state_dim"] = n_;
  sidecar["action_dim"] = m_;
  sidecar["layer_sizes"] = net_.layer_sizes();
  sidecar["activation"] = activation_name(net_.activation());
  std::ofstream out(path + ".json");
  if (!out) throw std::runtime_error("cannot write sidecar for " + path);
  out << sidecar.dump(2) << "\n";
}

ForwardModelNet ForwardModelNet::load(const std::string& path) {
  std::ifstream in(path + ".json");
  if (!in) throw std::runtime_error("missing sidecar for " + path);
  nlohmann::json sidecar = nlohmann::json::parse(in);
  if (sidecar.value("type", "") != "forward_model") {
    throw std::runtime_error("sidecar is not a forward model: " + path);
  }
  Mlp net(sidecar.at("layer_sizes").get<std::vector<int>>(),
          activation_from_name(sidecar.at("activation").get<std::string>()),
          /*seed=*/0);
  net.set_parameter_vector(load_parameter_blob(path));
  return ForwardModelNet(sidecar.at("state_dim").get<int>(),
                         sidecar.at("action_dim").get<int>(), std::move(net));
}

ForwardModelFit fit_forward_model(const std::vector<Transition>& transitions,
                                  const ForwardModelTrainConfig& config) {
  if (transitions.empty()) {
    throw std::invalid_argument("fit_forward_model: empty transition set");
  }
  const int n = static_cast<int>(transitions.front().s.size());
  const int m = static_cast<int>(transitions.front().a.size());
  for (const auto& tr : transitions) {
    if (tr.s.size() != n || tr.a.size() != m || tr.s_next.size() != n) {
      throw std::invalid_argument("fit_forward_model: inconsistent dimensions");
    }
  }

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(transitions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t holdout =
      std::min(transitions.size() - 1,
               static_cast<std::size_t>(std::llround(
                   config.holdout_fraction * static_cast<double>(transitions.size()))));
  const std::size_t train_count = transitions.size() - holdout;

  Eigen::MatrixXd X(n + m, static_cast<Eigen::Index>(train_count));
  Eigen::MatrixXd Y(n, static_cast<Eigen::Index>(train_count));
  for (std::size_t i = 0; i < train_count; ++i) {
    const auto& tr = transitions[order[i]];
    X.col(static_cast<Eigen::Index>(i)) << tr.s, tr.a;
    Y.col(static_cast<Eigen::Index>(i)) = tr.s_next;
  }

  ForwardModelNet model(n, m, config.hidden_sizes, config.activation, config.seed);
  Adam opt(config.learning_rate);
  Mlp::Workspace ws;
  std::vector<double> epoch_loss;

  std::vector<Eigen::Index> idx(train_count);
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t at = 0; at < train_count; at += static_cast<std::size_t>(config.batch_size)) {
      const Eigen::Index B = static_cast<Eigen::Index>(
          std::min<std::size_t>(config.batch_size, train_count - at));
      Eigen::MatrixXd xb(n + m, B), yb(n, B);
      for (Eigen::Index j = 0; j < B; ++j) {
        xb.col(j) = X.col(idx[at + static_cast<std::size_t>(j)]);
        yb.col(j) = Y.col(idx[at + static_cast<std::size_t>(j)]);
      }
      Eigen::MatrixXd pred = model.net().forward_batch(xb, ws);
      Eigen::MatrixXd err = pred - yb;
      const double loss = err.squaredNorm() / static_cast<double>(B);
      if (!std::isfinite(loss)) {
        throw std::runtime_error("fit_forward_model: non-finite loss (divergent step size)");
      }
      loss_sum += loss * static_cast<double>(B);
      seen += static_cast<std::size_t>(B);
      Eigen::MatrixXd dout = (2.0 / static_cast<double>(B)) * err;
      MlpGradients g = model.net().backward_batch(ws, dout);
      opt.step(model.net(), g);
    }
    epoch_loss.push_back(loss_sum / static_cast<double>(seen));
  }

  double holdout_mse = 0.0;
  if (holdout > 0) {
    for (std::size_t i = train_count; i < transitions.size(); ++i) {
      const auto& tr = transitions[order[i]];
      holdout_mse += (model.step(tr.s, tr.a) - tr.s_next).squaredNorm();
    }
    holdout_mse /= static_cast<double>(holdout);
  } else if (!epoch_loss.empty()) {
    holdout_mse = epoch_loss.back();
  }

  return ForwardModelFit{std::move(model), std::move(epoch_loss), holdout_mse};
}

LipschitzEstimates estimate_lipschitz(const ForwardModelNet& net, double zeta,
                                      int horizon_k) {
  if (zeta < 0.0) throw std::invalid_argument("estimate_lipschitz: zeta must be >= 0");
  const Mlp& mlp = net.net();
  double product = 1.0;
  for (int l = 0; l < mlp.layer_count(); ++l) {
    if (l == 0) {
      // zeta perturbs the state argument only
      product *= spectral_norm(mlp.weight(0).leftCols(net.state_dim()));
    } else {
      product *= spectral_norm(mlp.weight(l));
    }
  }
  LipschitzEstimates est;
  est.L_f = product;
  est.zeta = zeta;
  est.xi = propagated_deviation_bound(zeta, product, horizon_k);
  return est;
}

double propagated_deviation_bound(double zeta, double lipschitz, int horizon_k) {
  if (horizon_k < 0) throw std::invalid_argument("horizon_k must be >= 0");
  double geom = 0.0;
  double term = 1.0;
  for (int i = 0; i < horizon_k; ++i) {
    geom += term;
    term *= lipschitz;
  }
  return zeta * geom;
}

}  // namespace flowplan
