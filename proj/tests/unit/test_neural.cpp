#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "specmarket/errors.hpp"
#include "specmarket/neural.hpp"
#include "support/oracles.hpp"

using namespace specmarket;

namespace {

double& param_at(DenseNet& net, std::size_t layer, bool bias, Eigen::Index r, Eigen::Index c)
{
  auto& l = net.layers()[layer];
  return bias ? l.biases(r) : l.weights(r, c);
}

} // namespace

TEST(DenseNet, ZeroParametersGiveZeroOutput)
{
  const auto net = DenseNet::zeros({4, 128, 128, 5});
  const Eigen::VectorXd y = net.forward(Eigen::VectorXd::Constant(4, 3.7));
  ASSERT_EQ(y.size(), 5);
  EXPECT_TRUE(y.isZero(0.0));
}

TEST(DenseNet, SingleLayerIsADotProduct)
{
  auto net = DenseNet::zeros({2, 1});
  net.layers()[0].weights << 1.0, 1.0;
  const std::vector<double> x{3.0, 4.0};
  EXPECT_DOUBLE_EQ(net.forward(std::span<const double>(x))[0], 7.0);
}

TEST(DenseNet, TwoLayerMatchesHandComputation)
{
  // [2,2,1]: h = relu(W1 x + b1), y = W2 h + b2
  auto net = DenseNet::zeros({2, 2, 1});
  net.layers()[0].weights << 0.5, -1.0, 2.0, 0.25;
  net.layers()[0].biases << 0.1, -0.2;
  net.layers()[1].weights << 1.5, -0.5;
  net.layers()[1].biases << 0.3;
  // x = [2, 1]: pre = [1 - 1 + 0.1, 4 + 0.25 - 0.2] = [0.1, 4.05]
  // y = 1.5 * 0.1 - 0.5 * 4.05 + 0.3 = -1.575
  const Eigen::Vector2d x(2.0, 1.0);
  EXPECT_NEAR(net.forward(Eigen::VectorXd(x))(0), -1.575, 1e-15);

  // x = [0, 1] drives the first hidden unit negative: pre = [-0.9, 0.05].
  const Eigen::Vector2d x2(0.0, 1.0);
  EXPECT_NEAR(net.forward(Eigen::VectorXd(x2))(0), -0.5 * 0.05 + 0.3, 1e-15);
}

TEST(DenseNet, MatchesScalarReferenceOnRandomNet)
{
  const DenseNet net({4, 8, 6, 5}, 11);
  std::vector<std::vector<double>> w, b;
  for (const auto& layer : net.layers()) {
    std::vector<double> wl;
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
        wl.push_back(layer.weights(r, c));
    w.push_back(wl);
    b.emplace_back(layer.biases.data(), layer.biases.data() + layer.biases.size());
  }
  const std::vector<double> x{0.3, -1.2, 0.8, 2.0};
  const auto expected = oracle::reference_forward(w, b, net.layer_sizes(), x);
  const auto got = net.forward(std::span<const double>(x));
  for (std::size_t i = 0; i < 5; ++i)
    EXPECT_NEAR(got[i], expected[i], 1e-12);
}

TEST(DenseNet, ForwardRejectsBadInput)
{
  const DenseNet net({4, 3, 2}, 1);
  EXPECT_THROW(net.forward(Eigen::VectorXd::Zero(3)), ValidationError);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(4);
  x(2) = std::nan("");
  EXPECT_THROW(net.forward(x), ValidationError);
}

TEST(DenseNet, GlorotInitIsSeededAndBounded)
{
  const DenseNet a({4, 128, 5}, 3);
  const DenseNet b({4, 128, 5}, 3);
  const DenseNet c({4, 128, 5}, 4);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == c);
  const double limit = std::sqrt(6.0 / (4 + 128));
  EXPECT_LE(a.layers()[0].weights.cwiseAbs().maxCoeff(), limit);
  EXPECT_TRUE(a.layers()[0].biases.isZero(0.0));
}

TEST(Backward, ZeroOutputGradientGivesZeroGradients)
{
  const DenseNet net({4, 8, 5}, 2);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 3);
  const auto g = net.backward(x, Eigen::MatrixXd::Zero(5, 3));
  for (const auto& layer : g) {
    EXPECT_TRUE(layer.weights.isZero(0.0));
    EXPECT_TRUE(layer.biases.isZero(0.0));
  }
}

TEST(Backward, LinearScalarCase)
{
  auto net = DenseNet::zeros({1, 1});
  net.layers()[0].weights(0, 0) = 0.7;
  Eigen::MatrixXd x(1, 1);
  x << 3.0;
  const auto g = net.backward(x, Eigen::MatrixXd::Ones(1, 1));
  EXPECT_DOUBLE_EQ(g[0].weights(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(g[0].biases(0), 1.0);
}

TEST(Backward, RejectsShapeMismatch)
{
  const DenseNet net({4, 8, 5}, 2);
  EXPECT_THROW(net.backward(Eigen::MatrixXd::Zero(4, 2), Eigen::MatrixXd::Zero(5, 3)), ValidationError);
}

class GradientCheck : public ::testing::TestWithParam<std::vector<std::size_t>> {};

TEST_P(GradientCheck, MatchesCentralDifferences)
{
  const auto sizes = GetParam();
  DenseNet net(sizes, 42);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (auto& layer : net.layers())
    for (Eigen::Index i = 0; i < layer.biases.size(); ++i)
      layer.biases(i) = 0.1 * nd(rng);

  const Eigen::Index batch = 3;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(sizes.front()), batch);
  Eigen::MatrixXd c(static_cast<Eigen::Index>(sizes.back()), batch);
  for (Eigen::Index i = 0; i < x.size(); ++i)
    x.data()[i] = nd(rng);
  for (Eigen::Index i = 0; i < c.size(); ++i)
    c.data()[i] = nd(rng);

  auto objective = [&]() { return (net.forward_batch(x).array() * c.array()).sum(); };
  const auto grads = net.backward(x, c);

  std::uniform_int_distribution<std::size_t> pick_layer(0, net.layers().size() - 1);
  double worst = 0.0;
  for (int sample = 0; sample < 100; ++sample) {
    const auto l = pick_layer(rng);
    const bool bias = std::uniform_int_distribution<int>(0, 4)(rng) == 0;
    const auto& layer = net.layers()[l];
    const auto r = std::uniform_int_distribution<Eigen::Index>(0, layer.weights.rows() - 1)(rng);
    const auto col = std::uniform_int_distribution<Eigen::Index>(0, layer.weights.cols() - 1)(rng);
    const double analytic = bias ? grads[l].biases(r) : grads[l].weights(r, col);
    const double numeric = oracle::central_difference(objective, param_at(net, l, bias, r, col), 1e-5);
    const double rel = std::abs(analytic - numeric) / std::max(1e-7, std::abs(analytic) + std::abs(numeric));
    worst = std::max(worst, rel);
  }
  EXPECT_LT(worst, 1e-5);
}

INSTANTIATE_TEST_SUITE_P(Shapes, GradientCheck,
                         ::testing::Values(std::vector<std::size_t>{4, 16, 5}, std::vector<std::size_t>{4, 8, 5},
                                           std::vector<std::size_t>{3, 6, 6, 2}));

TEST(Adam, FirstStepMovesByLearningRate)
{
  auto net = DenseNet::zeros({3, 2});
  AdamOptimizer adam(net);
  auto g = zero_gradients(net);
  g[0].weights.setOnes();
  g[0].biases.setOnes();
  adam.step(net, g);
  // m_hat = v_hat = 1, so the step is lr / (1 + eps).
  const double expected = -0.001 / (1.0 + 1e-8);
  EXPECT_NEAR(net.layers()[0].weights(0, 0), expected, 1e-8 * 0.001);
  EXPECT_NEAR(net.layers()[0].biases(1), expected, 1e-8 * 0.001);
  EXPECT_EQ(adam.step_count(), 1);
}

TEST(Adam, ZeroGradientLeavesParametersAndCountsStep)
{
  DenseNet net({3, 4, 2}, 5);
  const DenseNet before = net;
  AdamOptimizer adam(net);
  adam.step(net, zero_gradients(net));
  EXPECT_TRUE(net == before);
  EXPECT_EQ(adam.step_count(), 1);
}

TEST(Adam, StepMagnitudeBoundedByLearningRate)
{
  DenseNet net({3, 4, 2}, 5);
  AdamOptimizer adam(net);
  auto g = zero_gradients(net);
  g[0].weights.setConstant(0.37);
  g[1].biases.setConstant(-12.0);
  for (int k = 0; k < 2; ++k) {
    const DenseNet before = net;
    adam.step(net, g);
    for (std::size_t l = 0; l < 2; ++l) {
      EXPECT_LE((net.layers()[l].weights - before.layers()[l].weights).cwiseAbs().maxCoeff(), 0.001 + 1e-15);
      EXPECT_LE((net.layers()[l].biases - before.layers()[l].biases).cwiseAbs().maxCoeff(), 0.001 + 1e-15);
    }
  }
  for (const auto& v : adam.second_moment())
    EXPECT_GE(v.weights.minCoeff(), 0.0);
}

TEST(Adam, RejectsBadGradients)
{
  DenseNet net({3, 2}, 1);
  AdamOptimizer adam(net);
  const DenseNet before = net;
  auto g = zero_gradients(net);
  g[0].weights(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(adam.step(net, g), std::runtime_error);
  EXPECT_TRUE(net == before);
  EXPECT_EQ(adam.step_count(), 0);
  EXPECT_THROW(adam.step(net, zero_gradients(DenseNet::zeros({3, 3}))), ValidationError);
}

TEST(MseLoss, Cases)
{
  auto r = mse_loss(Eigen::Vector2d(1.0, 2.0), Eigen::Vector2d(1.0, 2.0));
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_TRUE(r.gradient.isZero(0.0));

  r = mse_loss(Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d(0.0, 0.0));
  EXPECT_DOUBLE_EQ(r.loss, 0.5);
  EXPECT_DOUBLE_EQ(r.gradient(0), 1.0);
  EXPECT_DOUBLE_EQ(r.gradient(1), 0.0);

  r = mse_loss(Eigen::VectorXd::Constant(1, 3.0), Eigen::VectorXd::Constant(1, 1.0));
  EXPECT_DOUBLE_EQ(r.loss, 4.0);
  EXPECT_DOUBLE_EQ(r.gradient(0), 4.0);

  EXPECT_THROW(mse_loss(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(3)), ValidationError);
}

TEST(SoftUpdate, Formula)
{
  auto target = DenseNet::zeros({2, 2});
  auto online = DenseNet::zeros({2, 2});
  online.layers()[0].weights.setOnes();
  soft_update(target, online, 0.005);
  EXPECT_DOUBLE_EQ(target.layers()[0].weights(1, 0), 0.005);
}

TEST(SoftUpdate, Extremes)
{
  DenseNet target({3, 4, 2}, 1);
  const DenseNet online({3, 4, 2}, 2);
  const DenseNet original = target;
  soft_update(target, online, 0.0);
  EXPECT_TRUE(target == original);
  soft_update(target, online, 1.0);
  EXPECT_TRUE(target == online);
  DenseNet other({3, 5, 2}, 1);
  EXPECT_THROW(soft_update(other, online, 0.5), ValidationError);
}

TEST(SoftUpdate, ConvergesGeometrically)
{
  DenseNet target({3, 4, 2}, 1);
  const DenseNet online({3, 4, 2}, 2);
  const double tau = 0.005;
  double gap = (target.layers()[0].weights - online.layers()[0].weights).cwiseAbs().maxCoeff();
  for (int k = 0; k < 50; ++k) {
    soft_update(target, online, tau);
    const double next = (target.layers()[0].weights - online.layers()[0].weights).cwiseAbs().maxCoeff();
    EXPECT_NEAR(next, gap * (1.0 - tau), 1e-12);
    gap = next;
  }
}

TEST(Checkpoint, RoundTripIsBitExact)
{
  DenseNet net({4, 128, 128, 5}, 99);
  net.layers()[2].biases(3) = -0.1;
  net.layers()[0].weights(0, 0) = 1e-300;
  const auto path = std::filesystem::temp_directory_path() / "specmarket_ckpt_test.net";
  save_checkpoint(net, path);
  const DenseNet back = load_checkpoint(path);
  EXPECT_TRUE(back == net);
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsForeignFile)
{
  const auto path = std::filesystem::temp_directory_path() / "specmarket_not_a_ckpt.net";
  {
    std::ofstream out(path);
    out << "hello world\n";
  }
  EXPECT_THROW(load_checkpoint(path), ValidationError);
  std::filesystem::remove(path);
}
