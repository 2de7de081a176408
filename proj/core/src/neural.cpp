#include "specmarket/neural.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <ios>
#include <random>
#include <sstream>
#include <string>

#include "specmarket/errors.hpp"

namespace specmarket {

namespace {

constexpr const char* kCheckpointMagic = "specmarket-densenet";
constexpr int kCheckpointVersion = 1;

void check_shapes(const std::vector<LayerParams>& a, const std::vector<LayerParams>& b, const char* what)
{
  bool ok = a.size() == b.size();
  for (std::size_t l = 0; ok && l < a.size(); ++l) {
    ok = a[l].weights.rows() == b[l].weights.rows() && a[l].weights.cols() == b[l].weights.cols()
         && a[l].biases.size() == b[l].biases.size();
  }
  if (!ok)
    throw ValidationError(std::string(what) + ": shape mismatch");
}

} // namespace

DenseNet::DenseNet(std::vector<std::size_t> layer_sizes) : sizes_(std::move(layer_sizes))
{
  if (sizes_.size() < 2)
    throw ValidationError("a network needs at least an input and an output layer");
  for (auto s : sizes_) {
    if (s == 0)
      throw ValidationError("layer sizes must be positive");
  }
  layers_.resize(sizes_.size() - 1);
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(sizes_[l]);
    const auto out = static_cast<Eigen::Index>(sizes_[l + 1]);
    layers_[l].weights = Eigen::MatrixXd::Zero(out, in);
    layers_[l].biases = Eigen::VectorXd::Zero(out);
  }
}

DenseNet::DenseNet(std::vector<std::size_t> layer_sizes, std::uint64_t seed) : DenseNet(std::move(layer_sizes))
{
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const double limit = std::sqrt(6.0 / static_cast<double>(sizes_[l] + sizes_[l + 1]));
    std::uniform_real_distribution<double> dist(-limit, limit);
    auto& w = layers_[l].weights;
    // Row-major fill so the draw order matches the checkpoint layout.
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c)
        w(r, c) = dist(rng);
  }
}

DenseNet DenseNet::zeros(std::vector<std::size_t> layer_sizes)
{
  return DenseNet(std::move(layer_sizes));
}

std::size_t DenseNet::parameter_count() const
{
  std::size_t n = 0;
  for (const auto& layer : layers_)
    n += static_cast<std::size_t>(layer.weights.size() + layer.biases.size());
  return n;
}

void DenseNet::check_input(const Eigen::MatrixXd& inputs) const
{
  if (layers_.empty())
    throw ValidationError("forward on an empty network");
  if (static_cast<std::size_t>(inputs.rows()) != sizes_.front())
    throw ValidationError("input dimension " + std::to_string(inputs.rows()) + " does not match layer size "
                          + std::to_string(sizes_.front()));
  if (!inputs.allFinite())
    throw ValidationError("non-finite network input");
}

ForwardTrace DenseNet::trace(const Eigen::MatrixXd& inputs) const
{
  check_input(inputs);
  ForwardTrace t;
  t.activations.reserve(layers_.size() + 1);
  t.activations.push_back(inputs);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = layers_[l].weights * t.activations.back();
    z.colwise() += layers_[l].biases;
    if (l + 1 < layers_.size())
      z = z.cwiseMax(0.0);
    t.activations.push_back(std::move(z));
  }
  return t;
}

Eigen::MatrixXd DenseNet::forward_batch(const Eigen::MatrixXd& inputs) const
{
  check_input(inputs);
  Eigen::MatrixXd a = inputs;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = layers_[l].weights * a;
    z.colwise() += layers_[l].biases;
    if (l + 1 < layers_.size())
      z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a;
}

Eigen::VectorXd DenseNet::forward(const Eigen::VectorXd& input) const
{
  return forward_batch(input);
}

std::vector<double> DenseNet::forward(std::span<const double> input) const
{
  const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(input.data(), static_cast<Eigen::Index>(input.size()));
  const Eigen::VectorXd y = forward(x);
  return {y.data(), y.data() + y.size()};
}

Gradients DenseNet::backward(const ForwardTrace& trace, const Eigen::MatrixXd& output_gradient) const
{
  if (trace.activations.size() != layers_.size() + 1)
    throw ValidationError("backward: trace does not belong to this network");
  const auto& out = trace.output();
  if (output_gradient.rows() != out.rows() || output_gradient.cols() != out.cols())
    throw ValidationError("backward: output gradient shape mismatch");

  Gradients grads(layers_.size());
  Eigen::MatrixXd delta = output_gradient;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& a_in = trace.activations[l];
    grads[l].weights = delta * a_in.transpose();
    grads[l].biases = delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = layers_[l].weights.transpose() * delta;
      // ReLU derivative: the post-activation is positive exactly where the
      // pre-activation was.
      delta = (a_in.array() > 0.0).select(back, 0.0);
    }
  }
  return grads;
}

Gradients DenseNet::backward(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& output_gradient) const
{
  return backward(trace(inputs), output_gradient);
}

bool DenseNet::all_finite() const
{
  for (const auto& layer : layers_) {
    if (!layer.weights.allFinite() || !layer.biases.allFinite())
      return false;
  }
  return true;
}

bool operator==(const DenseNet& a, const DenseNet& b)
{
  if (a.sizes_ != b.sizes_)
    return false;
  for (std::size_t l = 0; l < a.layers_.size(); ++l) {
    if (a.layers_[l].weights != b.layers_[l].weights || a.layers_[l].biases != b.layers_[l].biases)
      return false;
  }
  return true;
}

Gradients zero_gradients(const DenseNet& net)
{
  Gradients g(net.layers().size());
  for (std::size_t l = 0; l < g.size(); ++l) {
    g[l].weights = Eigen::MatrixXd::Zero(net.layers()[l].weights.rows(), net.layers()[l].weights.cols());
    g[l].biases = Eigen::VectorXd::Zero(net.layers()[l].biases.size());
  }
  return g;
}

AdamOptimizer::AdamOptimizer(const DenseNet& net, AdamConfig config)
    : config_(config), m_(zero_gradients(net)), v_(zero_gradients(net))
{
}

void AdamOptimizer::step(DenseNet& net, const Gradients& grads)
{
  check_shapes(net.layers(), grads, "adam step");
  check_shapes(net.layers(), m_, "adam state");
  for (const auto& g : grads) {
    if (!g.weights.allFinite() || !g.biases.allFinite())
      throw DivergenceError("adam step: non-finite gradient");
  }

  ++steps_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double lr = config_.learning_rate;
  const double eps = config_.epsilon;

  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / bias1) / ((v.array() / bias2).sqrt() + eps);
  };

  for (std::size_t l = 0; l < grads.size(); ++l) {
    auto& layer = net.layers()[l];
    update(layer.weights, m_[l].weights, v_[l].weights, grads[l].weights);
    update(layer.biases, m_[l].biases, v_[l].biases, grads[l].biases);
  }
}

LossResult mse_loss(const Eigen::VectorXd& prediction, const Eigen::VectorXd& target)
{
  if (prediction.size() != target.size())
    throw ValidationError("mse_loss: length mismatch");
  if (prediction.size() == 0)
    throw ValidationError("mse_loss: empty input");
  const auto n = static_cast<double>(prediction.size());
  const Eigen::VectorXd diff = prediction - target;
  return {diff.squaredNorm() / n, 2.0 * diff / n};
}

void soft_update(DenseNet& target, const DenseNet& online, double tau)
{
  if (!target.same_architecture(online))
    throw ValidationError("soft_update: architecture mismatch");
  if (!(tau >= 0.0 && tau <= 1.0))
    throw ValidationError("soft_update: tau must lie in [0, 1]");
  for (std::size_t l = 0; l < target.layers().size(); ++l) {
    auto& t = target.layers()[l];
    const auto& o = online.layers()[l];
    t.weights = tau * o.weights + (1.0 - tau) * t.weights;
    t.biases = tau * o.biases + (1.0 - tau) * t.biases;
  }
}

void save_checkpoint(const DenseNet& net, const std::filesystem::path& path)
{
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot write checkpoint: " + path.string());
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n' << "layers";
  for (auto s : net.layer_sizes())
    out << ' ' << s;
  out << '\n' << std::hexfloat;
  for (const auto& layer : net.layers()) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
        out << (c ? " " : "") << layer.weights(r, c);
      out << '\n';
    }
    for (Eigen::Index i = 0; i < layer.biases.size(); ++i)
      out << (i ? " " : "") << layer.biases(i);
    out << '\n';
  }
  if (!out)
    throw std::runtime_error("failed writing checkpoint: " + path.string());
}

DenseNet load_checkpoint(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw ValidationError("cannot open checkpoint: " + path.string());

  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != kCheckpointMagic || version != kCheckpointVersion)
    throw ValidationError("not a network checkpoint: " + path.string());

  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  std::istringstream header(line);
  std::string tag;
  header >> tag;
  if (tag != "layers")
    throw ValidationError("checkpoint missing layer sizes: " + path.string());
  std::vector<std::size_t> sizes;
  for (std::size_t s = 0; header >> s;)
    sizes.push_back(s);

  DenseNet net = DenseNet::zeros(sizes);
  // operator>> cannot parse hex floats portably; strtod can.
  auto next = [&]() {
    std::string token;
    if (!(in >> token))
      throw ValidationError("truncated checkpoint: " + path.string());
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end != token.c_str() + token.size())
      throw ValidationError("bad number '" + token + "' in checkpoint " + path.string());
    return v;
  };
  for (auto& layer : net.layers()) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
        layer.weights(r, c) = next();
    for (Eigen::Index i = 0; i < layer.biases.size(); ++i)
      layer.biases(i) = next();
  }
  std::string extra;
  if (in >> extra)
    throw ValidationError("trailing data in checkpoint: " + path.string());
  return net;
}

} // namespace specmarket
