#include "flowplan/mlp.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace flowplan {

namespace {

constexpr char kBlobMagic[4] = {'F', 'P', 'N', 'N'};
constexpr std::uint32_t kBlobVersion = 1;

double act_eval(Activation a, double z) {
  switch (a) {
    case Activation::kTanh:
      return std::tanh(z);
    case Activation::kSoftplus:
      // log(1+e^z), overflow-safe
      return z > 30.0 ? z : std::log1p(std::exp(z));
  }
  return 0.0;
}

double act_slope(Activation a, double z) {
  switch (a) {
    case Activation::kTanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::kSoftplus:
      return 1.0 / (1.0 + std::exp(-z));
  }
  return 0.0;
}

}  // namespace

std::string activation_name(Activation a) {
  return a == Activation::kTanh ? "tanh" : "softplus";
}

Activation activation_from_name(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "softplus") return Activation::kSoftplus;
  throw std::invalid_argument("unknown activation: " + name);
}

Mlp::Mlp(std::vector<int> layer_sizes, Activation act, std::uint64_t seed)
    : layer_sizes_(std::move(layer_sizes)), act_(act) {
  if (layer_sizes_.size() < 2) {
    throw std::invalid_argument("Mlp: need at least input and output sizes");
  }
  for (int s : layer_sizes_) {
    if (s < 1) throw std::invalid_argument("Mlp: layer sizes must be >= 1");
  }
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < layer_sizes_.size(); ++l) {
    const int in = layer_sizes_[l];
    const int out = layer_sizes_[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Eigen::MatrixXd W(out, in);
    for (int i = 0; i < out; ++i)
      for (int j = 0; j < in; ++j) W(i, j) = dist(rng);
    weights_.push_back(std::move(W));
    biases_.push_back(Eigen::VectorXd::Zero(out));
  }
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  if (x.size() != input_dim()) {
    throw std::invalid_argument("Mlp::forward: bad input size");
  }
  Eigen::VectorXd a = x;
  const int L = layer_count();
  for (int l = 0; l < L; ++l) {
    Eigen::VectorXd z = weights_[l] * a + biases_[l];
    if (l + 1 < L) {
      for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = act_eval(act_, z(i));
    }
    a = std::move(z);
  }
  return a;
}

Eigen::MatrixXd Mlp::forward_batch(const Eigen::MatrixXd& X, Workspace& ws) const {
  if (X.rows() != input_dim()) {
    throw std::invalid_argument("Mlp::forward_batch: bad input rows");
  }
  const int L = layer_count();
  ws.activations.assign(1, X);
  ws.pre_activations.clear();
  for (int l = 0; l < L; ++l) {
    Eigen::MatrixXd Z =
        (weights_[l] * ws.activations.back()).colwise() + biases_[l];
    ws.pre_activations.push_back(Z);
    if (l + 1 < L) {
      Eigen::MatrixXd A = Z.unaryExpr([this](double v) { return act_eval(act_, v); });
      ws.activations.push_back(std::move(A));
    } else {
      ws.activations.push_back(std::move(Z));
    }
  }
  return ws.activations.back();
}

MlpGradients Mlp::backward_batch(const Workspace& ws, const Eigen::MatrixXd& dout,
                                 Eigen::MatrixXd* dinput) const {
  const int L = layer_count();
  MlpGradients g = zero_gradients();
  Eigen::MatrixXd delta = dout;  // output layer is linear
  for (int l = L - 1; l >= 0; --l) {
    g.weights[l] = delta * ws.activations[static_cast<std::size_t>(l)].transpose();
    g.biases[l] = delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd slopes = ws.pre_activations[static_cast<std::size_t>(l - 1)]
          .unaryExpr([this](double v) { return act_slope(act_, v); });
      delta = (weights_[l].transpose() * delta).cwiseProduct(slopes);
    } else if (dinput != nullptr) {
      *dinput = weights_[0].transpose() * delta;
    }
  }
  return g;
}

Eigen::MatrixXd Mlp::input_jacobian(const Eigen::VectorXd& x) const {
  const int L = layer_count();
  Eigen::VectorXd a = x;
  Eigen::MatrixXd J = Eigen::MatrixXd::Identity(input_dim(), input_dim());
  for (int l = 0; l < L; ++l) {
    Eigen::VectorXd z = weights_[l] * a + biases_[l];
    J = (weights_[l] * J).eval();
    if (l + 1 < L) {
      Eigen::VectorXd slopes(z.size());
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        slopes(i) = act_slope(act_, z(i));
        z(i) = act_eval(act_, z(i));
      }
      J = slopes.asDiagonal() * J;
    }
    a = std::move(z);
  }
  return J;
}

MlpGradients Mlp::zero_gradients() const {
  MlpGradients g;
  for (int l = 0; l < layer_count(); ++l) {
    g.weights.push_back(Eigen::MatrixXd::Zero(weights_[l].rows(), weights_[l].cols()));
    g.biases.push_back(Eigen::VectorXd::Zero(biases_[l].size()));
  }
  return g;
}

std::int64_t Mlp::parameter_count() const {
  std::int64_t count = 0;
  for (int l = 0; l < layer_count(); ++l) {
    count += weights_[l].size() + biases_[l].size();
  }
  return count;
}

Eigen::VectorXd Mlp::parameter_vector() const {
  Eigen::VectorXd p(parameter_count());
  Eigen::Index at = 0;
  for (int l = 0; l < layer_count(); ++l) {
    const auto& W = weights_[l];
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j) p(at++) = W(i, j);
    for (Eigen::Index i = 0; i < biases_[l].size(); ++i) p(at++) = biases_[l](i);
  }
  return p;
}

void Mlp::set_parameter_vector(const Eigen::VectorXd& p) {
  if (p.size() != parameter_count()) {
    throw std::invalid_argument("Mlp::set_parameter_vector: bad length");
  }
  Eigen::Index at = 0;
  for (int l = 0; l < layer_count(); ++l) {
    auto& W = weights_[l];
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = p(at++);
    for (Eigen::Index i = 0; i < biases_[l].size(); ++i) biases_[l](i) = p(at++);
  }
}

bool Mlp::parameters_finite() const {
  for (int l = 0; l < layer_count(); ++l) {
    if (!weights_[l].allFinite() || !biases_[l].allFinite()) return false;
  }
  return true;
}

SgdMomentum::SgdMomentum(double learning_rate, double momentum)
    : lr_(learning_rate), momentum_(momentum) {}

void SgdMomentum::step(Mlp& net, const MlpGradients& grads) {
  auto& W = MlpOptimizerAccess::weights(net);
  auto& b = MlpOptimizerAccess::biases(net);
  if (vel_w_.empty()) {
    for (const auto& g : grads.weights) vel_w_.push_back(Eigen::MatrixXd::Zero(g.rows(), g.cols()));
    for (const auto& g : grads.biases) vel_b_.push_back(Eigen::VectorXd::Zero(g.size()));
  }
  for (std::size_t l = 0; l < W.size(); ++l) {
    vel_w_[l] = momentum_ * vel_w_[l] - lr_ * grads.weights[l];
    vel_b_[l] = momentum_ * vel_b_[l] - lr_ * grads.biases[l];
    W[l] += vel_w_[l];
    b[l] += vel_b_[l];
  }
}

Adam::Adam(double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(Mlp& net, const MlpGradients& grads) {
  auto& W = MlpOptimizerAccess::weights(net);
  auto& b = MlpOptimizerAccess::biases(net);
  if (m_w_.empty()) {
    for (const auto& g : grads.weights) {
      m_w_.push_back(Eigen::MatrixXd::Zero(g.rows(), g.cols()));
      v_w_.push_back(Eigen::MatrixXd::Zero(g.rows(), g.cols()));
    }
    for (const auto& g : grads.biases) {
      m_b_.push_back(Eigen::VectorXd::Zero(g.size()));
      v_b_.push_back(Eigen::VectorXd::Zero(g.size()));
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t l = 0; l < W.size(); ++l) {
    m_w_[l] = beta1_ * m_w_[l] + (1.0 - beta1_) * grads.weights[l];
    v_w_[l] = beta2_ * v_w_[l] + (1.0 - beta2_) * grads.weights[l].cwiseAbs2();
    m_b_[l] = beta1_ * m_b_[l] + (1.0 - beta1_) * grads.biases[l];
    v_b_[l] = beta2_ * v_b_[l] + (1.0 - beta2_) * grads.biases[l].cwiseAbs2();
    W[l] -= lr_ * (m_w_[l] / bc1).cwiseQuotient(((v_w_[l] / bc2).cwiseSqrt().array() + eps_).matrix());
    b[l] -= lr_ * (m_b_[l] / bc1).cwiseQuotient(((v_b_[l] / bc2).cwiseSqrt().array() + eps_).matrix());
  }
}

void save_parameter_blob(const std::string& path, const Eigen::VectorXd& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(kBlobMagic, 4);
  const std::uint32_t version = kBlobVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::uint64_t count = static_cast<std::uint64_t>(params.size());
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  out.write(reinterpret_cast<const char*>(params.data()),
            static_cast<std::streamsize>(sizeof(double) * params.size()));
  if (!out) throw std::runtime_error("short write: " + path);
}

Eigen::VectorXd load_parameter_blob(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kBlobMagic, 4) != 0) {
    throw std::runtime_error("bad parameter blob magic in " + path);
  }
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in || version != kBlobVersion) {
    throw std::runtime_error("unsupported parameter blob version in " + path);
  }
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (!in) throw std::runtime_error("truncated parameter blob: " + path);
  Eigen::VectorXd p(static_cast<Eigen::Index>(count));
  in.read(reinterpret_cast<char*>(p.data()),
          static_cast<std::streamsize>(sizeof(double) * count));
  if (!in) throw std::runtime_error("truncated parameter blob: " + path);
  return p;
}

double spectral_norm(const Eigen::MatrixXd& W, int iterations, double tol) {
  if (W.size() == 0) return 0.0;
  Eigen::VectorXd v = Eigen::VectorXd::Ones(W.cols()).normalized();
  double sigma = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Eigen::VectorXd u = W * v;
    const double un = u.norm();
    if (un == 0.0) return 0.0;
    u /= un;
    v = W.transpose() * u;
    const double next = v.norm();
    if (next == 0.0) return 0.0;
    v /= next;
    if (std::abs(next - sigma) <= tol * std::max(1.0, next)) {
      sigma = next;
      break;
    }
    sigma = next;
  }
  return sigma;
}

}  // namespace flowplan
