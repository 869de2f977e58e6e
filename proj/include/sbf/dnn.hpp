#pragma once

// Small dense network engine used by the TD3 agents: batched forward and
// reverse passes, Adam with per-layer rates, soft target updates,
// parameter-space blending and float32 persistence.

#include <Eigen/Dense>
#include <iosfwd>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "sbf/rng.hpp"

namespace sbf {

enum class LayerKind { normalization, fully_connected, relu, tanh, scale };

const char* layer_kind_name(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  int width = 0;                      // fully_connected only
  double lo = -std::numbers::pi;      // normalization: input box; scale: output range
  double hi = std::numbers::pi;

  static LayerSpec normalization(double lo, double hi) { return {LayerKind::normalization, 0, lo, hi}; }
  static LayerSpec dense(int width) { return {LayerKind::fully_connected, width, 0.0, 0.0}; }
  static LayerSpec relu() { return {LayerKind::relu, 0, 0.0, 0.0}; }
  static LayerSpec tanh() { return {LayerKind::tanh, 0, 0.0, 0.0}; }
  static LayerSpec scale(double lo, double hi) { return {LayerKind::scale, 0, lo, hi}; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// One learning rate per parameterized (fully connected) layer.
using LearningRateProfile = std::vector<double>;

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <class Scalar>
class BasicNetwork {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  struct Dense {
    Matrix weight;  // out x in
    Vector bias;
  };

  struct Gradients {
    std::vector<Dense> layers;  // empty when parameter gradients were not requested
    Matrix input;               // d loss / d input, input_dim x batch
  };

  BasicNetwork() = default;
  // Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero. Without an
  // rng all parameters start at zero.
  BasicNetwork(int input_dim, std::vector<LayerSpec> specs, Rng* init = nullptr);

  int input_dim() const { return input_dim_; }
  int output_dim() const { return output_dim_; }
  const std::vector<LayerSpec>& specs() const { return specs_; }
  int parameter_layer_count() const { return static_cast<int>(params_.size()); }
  long parameter_count() const;
  std::vector<Dense>& params() { return params_; }
  const std::vector<Dense>& params() const { return params_; }
  long adam_steps() const { return adam_t_; }

  // Same input dimension and layer stack.
  bool same_architecture(const BasicNetwork& other) const {
    return input_dim_ == other.input_dim_ && specs_ == other.specs_;
  }

  // Batched forward over columns of x; caches activations for backward().
  const Matrix& forward(const Matrix& x);
  // Forward without touching the cache.
  Matrix predict(const Matrix& x) const;
  std::vector<Scalar> forward(std::span<const Scalar> input);

  // Reverse pass from d loss / d output of the last forward(). Throws
  // TrainingError when no forward pass is cached.
  Gradients backward(const Matrix& output_grad, bool parameter_grads = true);

  // Adam update with a per-layer rate. Layers with rate 0 are left untouched
  // (parameters and moments). Throws TrainingError on non-finite gradients.
  void adam_step(const Gradients& grads, const LearningRateProfile& rates, const AdamHyper& hyper = {});
  void reset_optimizer();

  // Copies another network's parameters; architectures must match.
  void copy_parameters_from(const BasicNetwork& other);

  // Inserts a square fully connected layer (identity weights, zero bias)
  // before layer `position`, optionally followed by a ReLU. The network
  // computes the same function afterwards whenever the layer input is
  // nonnegative or no activation is added.
  void insert_identity_layer(int position, bool with_relu);

  void serialize(std::ostream& out) const;
  static BasicNetwork deserialize(std::istream& in);

  template <class Other>
  BasicNetwork<Other> cast() const;

 private:
  template <class>
  friend class BasicNetwork;

  void rebuild_index();

  int input_dim_ = 0;
  int output_dim_ = 0;
  std::vector<LayerSpec> specs_;
  std::vector<int> param_of_layer_;  // -1 for parameter-free layers
  std::vector<Dense> params_;
  std::vector<Dense> adam_m_;
  std::vector<Dense> adam_v_;
  long adam_t_ = 0;
  std::vector<Matrix> cache_;  // cache_[l] = input of layer l; cache_.back() = output
  bool cached_ = false;
};

using Network = BasicNetwork<double>;
using NetworkF = BasicNetwork<float>;

// Actor: normalization([-pi, pi] -> [-1, 1]), FC(16N'), ReLU, FC(16N'), ReLU,
// [FC(16N'), ReLU when fine_tune], FC(N'), tanh, scale to [-pi, pi].
template <class Scalar>
BasicNetwork<Scalar> build_actor(int elements, bool fine_tune, Rng* init);

// Critic on state || action (2N'): FC(32N'), ReLU, FC(16N'),
// [FC(16N') when fine_tune], tanh, FC(1).
template <class Scalar>
BasicNetwork<Scalar> build_critic(int elements, bool fine_tune, Rng* init);

// target <- tau * source + (1 - tau) * target.
template <class Scalar>
void soft_update(BasicNetwork<Scalar>& target, const BasicNetwork<Scalar>& source, double tau);

// Elementwise weighted average of architecturally identical networks. The
// weights must be nonnegative and sum to 1 within 1e-9. Optimizer state of
// the result is reset.
template <class Scalar>
BasicNetwork<Scalar> blend_params(std::span<const BasicNetwork<Scalar>* const> nets, std::span<const double> weights);

inline constexpr const char* kNetworkFormatTag = "sbf-network";
inline constexpr int kNetworkFormatVersion = 1;

}  // namespace sbf
