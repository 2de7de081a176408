#pragma once

// Dense feed-forward networks with hand-written reverse-mode gradients, an
// Adam optimizer and the few losses the agent and forecaster need. Double
// precision throughout.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace specmarket {

/// Weights are stored out x in, so a layer computes `weights * x + biases`.
struct LayerParams {
  Eigen::MatrixXd weights;
  Eigen::VectorXd biases;
};

/// Same shape as the network parameters.
using Gradients = std::vector<LayerParams>;

/// Activations recorded by a forward pass, consumed by DenseNet::backward.
/// `activations[0]` is the input batch; `activations[l + 1]` is the output of
/// layer l (post-ReLU for hidden layers). Columns are batch entries.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> activations;

  const Eigen::MatrixXd& output() const { return activations.back(); }
};

/// Fully connected network: ReLU on hidden layers, identity on the output.
class DenseNet {
public:
  DenseNet() = default;

  /// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  DenseNet(std::vector<std::size_t> layer_sizes, std::uint64_t seed);

  static DenseNet zeros(std::vector<std::size_t> layer_sizes);

  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  std::size_t input_size() const { return sizes_.front(); }
  std::size_t output_size() const { return sizes_.back(); }
  std::size_t parameter_count() const;

  std::vector<LayerParams>& layers() { return layers_; }
  const std::vector<LayerParams>& layers() const { return layers_; }

  Eigen::VectorXd forward(const Eigen::VectorXd& input) const;
  std::vector<double> forward(std::span<const double> input) const;

  /// Batched forward; `inputs` is input_size x batch.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& inputs) const;
  ForwardTrace trace(const Eigen::MatrixXd& inputs) const;

  /// Parameter gradients of sum_b <output_gradient_b, f(input_b)>.
  Gradients backward(const ForwardTrace& trace, const Eigen::MatrixXd& output_gradient) const;
  Gradients backward(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& output_gradient) const;

  bool same_architecture(const DenseNet& other) const { return sizes_ == other.sizes_; }
  bool all_finite() const;

  friend bool operator==(const DenseNet& a, const DenseNet& b);

private:
  explicit DenseNet(std::vector<std::size_t> layer_sizes);
  void check_input(const Eigen::MatrixXd& inputs) const;

  std::vector<std::size_t> sizes_;
  std::vector<LayerParams> layers_;
};

Gradients zero_gradients(const DenseNet& net);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam. Moment buffers are shaped after the network passed
/// at construction.
class AdamOptimizer {
public:
  AdamOptimizer() = default;
  AdamOptimizer(const DenseNet& net, AdamConfig config = {});

  /// Applies one update in place. Throws on shape mismatch or a non-finite
  /// gradient entry; in both cases nothing is modified.
  void step(DenseNet& net, const Gradients& grads);

  std::int64_t step_count() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<LayerParams>& first_moment() const { return m_; }
  const std::vector<LayerParams>& second_moment() const { return v_; }

private:
  AdamConfig config_;
  std::vector<LayerParams> m_;
  std::vector<LayerParams> v_;
  std::int64_t steps_ = 0;
};

struct LossResult {
  double loss = 0.0;
  Eigen::VectorXd gradient;
};

/// Mean squared error and its gradient 2 (pred - target) / n.
LossResult mse_loss(const Eigen::VectorXd& prediction, const Eigen::VectorXd& target);

/// target <- tau * online + (1 - tau) * target, elementwise.
void soft_update(DenseNet& target, const DenseNet& online, double tau);

/// Text checkpoint: a magic line, the layer sizes, then each layer's weights
/// (row-major, one row per line) and biases as C99 hex floats, so a load
/// reproduces every parameter bit for bit.
void save_checkpoint(const DenseNet& net, const std::filesystem::path& path);
DenseNet load_checkpoint(const std::filesystem::path& path);

} // namespace specmarket
