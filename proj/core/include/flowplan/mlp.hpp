#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace flowplan {

enum class Activation { kTanh, kSoftplus };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct MlpGradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

// Dense feedforward network, smooth hidden nonlinearity, linear output.
// Forward/backward are hand-rolled so parameter gradients and input
// Jacobians are exact and cheap to verify against finite differences.
class Mlp {
 public:
  Mlp() = default;
  // layer_sizes = {in, hidden..., out}
  Mlp(std::vector<int> layer_sizes, Activation act, std::uint64_t seed);

  int input_dim() const { return layer_sizes_.front(); }
  int output_dim() const { return layer_sizes_.back(); }
  const std::vector<int>& layer_sizes() const { return layer_sizes_; }
  Activation activation() const { return act_; }
  int layer_count() const { return static_cast<int>(weights_.size()); }
  const Eigen::MatrixXd& weight(int l) const { return weights_[l]; }
  Eigen::MatrixXd& weight(int l) { return weights_[l]; }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;

  // Columns are samples. Caches pre-activations for a following backward().
  struct Workspace {
    std::vector<Eigen::MatrixXd> activations;      // A_0 = X, ..., A_L
    std::vector<Eigen::MatrixXd> pre_activations;  // Z_1, ..., Z_L
  };
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& X, Workspace& ws) const;

  // Backpropagates dLoss/dOutput (same shape as the forward output).
  // Returns parameter gradients; optionally also dLoss/dInput.
  MlpGradients backward_batch(const Workspace& ws, const Eigen::MatrixXd& dout,
                              Eigen::MatrixXd* dinput = nullptr) const;

  // Exact d output / d input at a single point (chain-rule product).
  Eigen::MatrixXd input_jacobian(const Eigen::VectorXd& x) const;

  MlpGradients zero_gradients() const;

  std::int64_t parameter_count() const;
  Eigen::VectorXd parameter_vector() const;
  void set_parameter_vector(const Eigen::VectorXd& p);

  bool parameters_finite() const;

 private:
  std::vector<int> layer_sizes_;
  Activation act_ = Activation::kTanh;
  std::vector<Eigen::MatrixXd> weights_;  // out x in
  std::vector<Eigen::VectorXd> biases_;

  friend struct MlpOptimizerAccess;
};

// Gives optimizers mutable access without widening the public surface.
struct MlpOptimizerAccess {
  static std::vector<Eigen::MatrixXd>& weights(Mlp& net) { return net.weights_; }
  static std::vector<Eigen::VectorXd>& biases(Mlp& net) { return net.biases_; }
};

class SgdMomentum {
 public:
  SgdMomentum(double learning_rate, double momentum);
  void step(Mlp& net, const MlpGradients& grads);

 private:
  double lr_;
  double momentum_;
  std::vector<Eigen::MatrixXd> vel_w_;
  std::vector<Eigen::VectorXd> vel_b_;
};

class Adam {
 public:
  Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step(Mlp& net, const MlpGradients& grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Eigen::MatrixXd> m_w_, v_w_;
  std::vector<Eigen::VectorXd> m_b_, v_b_;
};

// Raw little-endian double blob with a short header; architecture metadata
// goes in a JSON sidecar owned by the callers.
void save_parameter_blob(const std::string& path, const Eigen::VectorXd& params);
Eigen::VectorXd load_parameter_blob(const std::string& path);

// Largest singular value via power iteration (upper-bound refinement loop).
double spectral_norm(const Eigen::MatrixXd& W, int iterations = 100,
                     double tol = 1e-12);

}  // namespace flowplan
