#include <cmath>
#include <random>

#include "doctest.h"
#include "fedids/checkpoint.hpp"
#include "fedids/errors.hpp"
#include "fedids/nn.hpp"
#include "oracles.hpp"

using namespace fedids;

TEST_CASE("forward: zero softmax net gives 0.5/0.5") {
  DenseNet net({3, 4, 2}, HiddenActivation::ReLU, OutputActivation::Softmax);
  const std::vector<double> x{1.5, -2, 7};
  const auto y = forward(net, x);
  CHECK(y == std::vector<double>{0.5, 0.5});
}

TEST_CASE("forward: identity linear layer") {
  DenseNet net({2, 2}, HiddenActivation::ReLU, OutputActivation::Linear);
  net.weights(0)[0] = 1;
  net.weights(0)[3] = 1;
  const std::vector<double> x{3, -1};
  CHECK(forward(net, x) == std::vector<double>{3, -1});
}

TEST_CASE("forward: hand-evaluated 2-layer ReLU net") {
  // W0 = [[1,2],[-1,3],[0.5,0]], b0 = [0,1,-0.25]; W1 = [[1,-1,2]], b1 = [0.5]
  DenseNet net({2, 3, 1}, HiddenActivation::ReLU, OutputActivation::Linear);
  const double w0[] = {1, 2, -1, 3, 0.5, 0};
  std::copy(std::begin(w0), std::end(w0), net.weights(0).begin());
  net.biases(0)[1] = 1;
  net.biases(0)[2] = -0.25;
  net.weights(1)[0] = 1;
  net.weights(1)[1] = -1;
  net.weights(1)[2] = 2;
  net.biases(1)[0] = 0.5;
  // x = [1,0]: z0 = [1, 0, 0.25] -> relu same; out = 1 - 0 + 0.5 + 0.5 = 2
  const std::vector<double> x{1, 0};
  CHECK(forward(net, x)[0] == doctest::Approx(2.0));
}

TEST_CASE("forward: wrong input width") {
  const auto net = make_classifier(1, {4, 3, 2});
  const std::vector<double> x{1, 2, 3};
  CHECK_THROWS_AS(forward(net, x), ShapeError);
}

TEST_CASE("forward matches the reference implementation") {
  std::mt19937_64 rng(11);
  for (auto h : {HiddenActivation::ReLU, HiddenActivation::Sigmoid, HiddenActivation::Tanh}) {
    const auto net = DenseNet::glorot_uniform({6, 5, 4, 6}, h, OutputActivation::Linear, 3);
    const auto x = oracle::random_vector(rng, 6);
    const auto got = forward(net, x);
    const auto want = oracle::forward(net, x);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("softmax sums to one and stays positive") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 100; ++t) {
    const auto z = oracle::random_vector(rng, 2, -50, 50);
    const auto p = softmax(z);
    CHECK(std::abs(p[0] + p[1] - 1) < 1e-12);
    CHECK(p[0] > 0);
    CHECK(p[1] > 0);
  }
}

TEST_CASE("mse_loss") {
  const std::vector<double> a{0, 2}, b{1, 1};
  CHECK(mse_loss(a, a) == 0);
  CHECK(mse_loss(a, b) == 1.0);
  std::mt19937_64 rng(2);
  const auto x = oracle::random_vector(rng, 75);
  const auto y = oracle::random_vector(rng, 75);
  double s = 0;
  for (int i = 0; i < 75; ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  CHECK(mse_loss(x, y) == doctest::Approx(s / 75).epsilon(1e-14));
  const std::vector<double> short_vec{1};
  CHECK_THROWS_AS(mse_loss(a, short_vec), ShapeError);
}

TEST_CASE("reconstruction_error") {
  // Linear 2-1-2 autoencoder with zero weights reconstructs the bias: [1,1].
  DenseNet ae({2, 1, 2}, HiddenActivation::ReLU, OutputActivation::Linear);
  ae.biases(1)[0] = 1;
  ae.biases(1)[1] = 1;
  const std::vector<double> x{0, 2};
  CHECK(reconstruction_error(ae, x) == std::vector<double>{1, 1});
  const std::vector<double> ones{1, 1};
  CHECK(reconstruction_error(ae, ones) == std::vector<double>{0, 0});

  std::mt19937_64 rng(8);
  const auto net = make_autoencoder(4, {10, 6, 3, 6, 10});
  for (int t = 0; t < 20; ++t) {
    const auto v = oracle::random_vector(rng, 10);
    const auto e = reconstruction_error(net, v);
    double mean = 0;
    for (double d : e) mean += d;
    mean /= 10;
    CHECK(std::abs(mean - mse_loss(v, oracle::forward(net, v))) < 1e-12);
  }
  const std::vector<double> bad{1, 2, 3};
  CHECK_THROWS_AS(reconstruction_error(net, bad), ShapeError);
  const std::vector<double> ten(10, 0.5);
  CHECK_THROWS_AS(reconstruction_error(make_classifier(1, {10, 4, 2}), ten), ConfigError);
}

TEST_CASE("cross_entropy_loss") {
  const double eps = kProbabilityFloor;
  const std::vector<double> confident{1 - eps, eps};
  CHECK(cross_entropy_loss(confident, 0) == doctest::Approx(0).epsilon(1e-9));
  const std::vector<double> even{0.5, 0.5};
  CHECK(cross_entropy_loss(even, 0) == doctest::Approx(std::log(2.0)));
  CHECK(cross_entropy_loss(even, 1) == doctest::Approx(0.6931).epsilon(1e-4));
  const std::vector<double> p{0.9, 0.1};
  CHECK(cross_entropy_loss(p, 1) == doctest::Approx(-std::log(0.1)));
  CHECK(cross_entropy_loss(p, 1) == doctest::Approx(2.3026).epsilon(1e-4));
  // Clamp keeps log(0) finite.
  const std::vector<double> zero{1, 0};
  CHECK(cross_entropy_loss(zero, 1) == doctest::Approx(-std::log(eps)));
  const std::vector<double> three{0.2, 0.3, 0.5};
  CHECK_THROWS_AS(cross_entropy_loss(three, 0), ShapeError);
}

TEST_CASE("backward: perfect reconstruction has zero gradient") {
  DenseNet ae({2, 1, 2}, HiddenActivation::ReLU, OutputActivation::Linear);
  ae.biases(1)[0] = 0.25;
  ae.biases(1)[1] = -3;
  const std::vector<double> x{0.25, -3};
  const auto g = backward(ae, x, x, LossKind::MeanSquared);
  for (double v : g.values) CHECK(v == 0);
}

TEST_CASE("backward: finite-difference check on a 4-3-4 net") {
  std::mt19937_64 rng(21);
  for (auto h : {HiddenActivation::ReLU, HiddenActivation::Sigmoid, HiddenActivation::Tanh}) {
    const auto net = DenseNet::glorot_uniform({4, 3, 4}, h, OutputActivation::Linear, 9);
    const auto x = oracle::random_vector(rng, 4);
    const auto t = oracle::random_vector(rng, 4);
    const auto g = backward(net, x, t, LossKind::MeanSquared);
    const auto num = oracle::numeric_gradient(net, x, t, LossKind::MeanSquared);
    CHECK(oracle::max_relative_error(g.values, num) < 1e-4);
  }
}

TEST_CASE("backward: softmax + cross-entropy output delta is probs - one_hot") {
  const auto net = DenseNet::glorot_uniform({3, 4, 2}, HiddenActivation::Tanh, OutputActivation::Softmax, 17);
  const std::vector<double> x{0.3, -0.8, 1.1};
  const auto probs = oracle::forward(net, x);
  for (int label : {0, 1}) {
    std::vector<double> t{label == 0 ? 1.0 : 0.0, label == 1 ? 1.0 : 0.0};
    const auto g = backward(net, x, t, LossKind::CrossEntropy);
    // The output-layer bias gradient is exactly the output delta; it is the
    // last two entries of the flat vector.
    const std::size_t n = g.values.size();
    CHECK(g.values[n - 2] == doctest::Approx(probs[0] - t[0]).epsilon(1e-12));
    CHECK(g.values[n - 1] == doctest::Approx(probs[1] - t[1]).epsilon(1e-12));
  }
}

TEST_CASE("backward: loss/output mismatch") {
  const auto clf = make_classifier(1, {3, 2, 2});
  const auto ae = make_autoencoder(1, {3, 2, 3});
  const std::vector<double> x{1, 2, 3}, t2{1, 0};
  CHECK_THROWS_AS(backward(clf, x, t2, LossKind::MeanSquared), ConfigError);
  CHECK_THROWS_AS(backward(ae, x, x, LossKind::CrossEntropy), ConfigError);
}

TEST_CASE("flatten/unflatten round trip is exact") {
  const auto a = make_autoencoder(123);
  const auto p = flatten(a, 7);
  CHECK(p.count == 7);
  CHECK(p.values.size() == a.parameter_count());
  CHECK(p.values.size() == 75u * 48 + 48 + 48u * 16 + 16 + 16u * 48 + 48 + 48u * 75 + 75);
  DenseNet b({75, 48, 16, 48, 75}, HiddenActivation::ReLU, OutputActivation::Linear);
  unflatten(b, p);
  CHECK(std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin()));
  ParamVector wrong{std::vector<double>(3), 0};
  CHECK_THROWS_AS(unflatten(b, wrong), ShapeError);
}

TEST_CASE("glorot init bounds and determinism") {
  const auto a = DenseNet::glorot_uniform({10, 6, 2}, HiddenActivation::ReLU, OutputActivation::Softmax, 5);
  const auto b = DenseNet::glorot_uniform({10, 6, 2}, HiddenActivation::ReLU, OutputActivation::Softmax, 5);
  CHECK(flatten(a) == flatten(b));
  const double lim0 = std::sqrt(6.0 / 16), lim1 = std::sqrt(6.0 / 8);
  for (double w : a.weights(0)) CHECK(std::abs(w) <= lim0);
  for (double w : a.weights(1)) CHECK(std::abs(w) <= lim1);
  for (double v : a.biases(0)) CHECK(v == 0);
}

TEST_CASE("topology checks") {
  CHECK(make_autoencoder(1).is_autoencoder());
  CHECK(make_classifier(1).is_classifier());
  CHECK_THROWS_AS(make_autoencoder(1, {5, 6, 5}), ConfigError);
  CHECK_THROWS_AS(make_classifier(1, {5, 3}), ConfigError);
}

TEST_CASE("optimizer: zero gradient leaves parameters alone") {
  for (auto kind : {OptimizerKind::RMSProp, OptimizerKind::Adam}) {
    Optimizer opt({kind});
    std::vector<double> p{1, -2, 3};
    const std::vector<double> g(3, 0.0);
    opt.step(p, g);
    opt.step(p, g);
    CHECK(p == std::vector<double>{1, -2, 3});
  }
}

TEST_CASE("optimizer: Adam first step by hand") {
  OptimizerConfig c{OptimizerKind::Adam, 0.01, 0.9, 0.9, 0.999, 1e-8};
  Optimizer opt(c);
  std::vector<double> p{1, 1, 1};
  const std::vector<double> g{0.5, -2, 1e-3};
  opt.step(p, g);
  // m_hat = g, v_hat = g^2 -> step = lr * g / (|g| + eps)
  for (int i = 0; i < 3; ++i) {
    const double want = 1 - 0.01 * g[i] / (std::abs(g[i]) + 1e-8);
    CHECK(p[i] == doctest::Approx(want).epsilon(1e-14));
  }
  CHECK(opt.step_count() == 1);
}

TEST_CASE("optimizer: RMSProp two identical steps by hand") {
  OptimizerConfig c{OptimizerKind::RMSProp, 0.01, 0.9};
  Optimizer opt(c);
  std::vector<double> p{0};
  const std::vector<double> g{2};
  opt.step(p, g);
  const double v1 = 0.1 * 4;
  const double s1 = 0.01 * 2 / (std::sqrt(v1) + 1e-8);
  CHECK(p[0] == doctest::Approx(-s1).epsilon(1e-14));
  opt.step(p, g);
  const double v2 = 0.9 * v1 + 0.1 * 4;
  const double s2 = 0.01 * 2 / (std::sqrt(v2) + 1e-8);
  CHECK(opt.second_moment()[0] == doctest::Approx(v2));
  CHECK(v2 > v1);
  CHECK(s2 < s1);
  CHECK(p[0] == doctest::Approx(-s1 - s2).epsilon(1e-14));
}

TEST_CASE("optimizer: length mismatch and reset") {
  Optimizer opt({OptimizerKind::Adam});
  std::vector<double> p(3, 0.0);
  const std::vector<double> g(2, 1.0);
  CHECK_THROWS_AS(opt.step(p, g), ShapeError);
  const std::vector<double> g3(3, 1.0);
  opt.step(p, g3);
  CHECK(opt.first_moment().size() == 3);
  opt.reset();
  CHECK(opt.step_count() == 0);
  CHECK(opt.second_moment().empty());
}

TEST_CASE("optimizer: bad config") {
  OptimizerConfig c;
  c.beta1 = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.epsilon = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("train_batch: single example equals backward + step") {
  auto net = DenseNet::glorot_uniform({3, 4, 3}, HiddenActivation::Tanh, OutputActivation::Linear, 2);
  auto ref = net;
  Matrix x(1, 3);
  x(0, 0) = 0.1; x(0, 1) = -0.4; x(0, 2) = 0.9;
  Optimizer a({OptimizerKind::RMSProp}), b({OptimizerKind::RMSProp});
  const double before = train_batch(net, x, x, LossKind::MeanSquared, a);
  const auto g = backward(ref, x.row(0), x.row(0), LossKind::MeanSquared);
  b.step(ref.parameters(), g.values);
  CHECK(std::equal(net.parameters().begin(), net.parameters().end(), ref.parameters().begin()));
  const auto initial = DenseNet::glorot_uniform({3, 4, 3}, HiddenActivation::Tanh, OutputActivation::Linear, 2);
  const std::vector<double> xv{0.1, -0.4, 0.9};
  CHECK(before == doctest::Approx(oracle::loss(initial, xv, xv, LossKind::MeanSquared)).epsilon(1e-12));
}

TEST_CASE("train_batch: duplicated rows give the single-row step") {
  auto n1 = DenseNet::glorot_uniform({3, 4, 2}, HiddenActivation::ReLU, OutputActivation::Softmax, 4);
  auto n2 = n1;
  Matrix x1(1, 3, 0.5), x3(3, 3, 0.5);
  const std::vector<int> l1{1}, l3{1, 1, 1};
  Optimizer a({OptimizerKind::Adam}), b({OptimizerKind::Adam});
  train_batch(n1, x1, one_hot(l1), LossKind::CrossEntropy, a);
  train_batch(n2, x3, one_hot(l3), LossKind::CrossEntropy, b);
  for (std::size_t i = 0; i < n1.parameter_count(); ++i) {
    CHECK(n1.parameters()[i] == doctest::Approx(n2.parameters()[i]).epsilon(1e-14));
  }
}

TEST_CASE("train_batch: empty batch") {
  auto net = make_classifier(1, {3, 2, 2});
  Optimizer opt;
  Matrix x(2, 3), t(2, 2);
  const std::vector<std::size_t> none;
  CHECK_THROWS_AS(train_batch(net, x, t, none, LossKind::CrossEntropy, opt), EmptyInputError);
}

TEST_CASE("train_batch: loss decreases on a tiny regression problem") {
  auto net = DenseNet::glorot_uniform({2, 8, 1}, HiddenActivation::Tanh, OutputActivation::Linear, 31);
  Matrix x(8, 2), y(8, 1);
  std::mt19937_64 rng(3);
  for (std::size_t r = 0; r < 8; ++r) {
    const auto v = oracle::random_vector(rng, 2);
    x(r, 0) = v[0];
    x(r, 1) = v[1];
    y(r, 0) = 0.5 * v[0] - v[1];
  }
  Optimizer opt({OptimizerKind::Adam, 0.02});
  const double first = mean_loss(net, x, y, LossKind::MeanSquared);
  for (int s = 0; s < 50; ++s) train_batch(net, x, y, LossKind::MeanSquared, opt);
  const double last = mean_loss(net, x, y, LossKind::MeanSquared);
  CHECK(last < 0.5 * first);
}

TEST_CASE("training is deterministic") {
  auto run = [] {
    auto net = make_autoencoder(77, {6, 3, 6});
    Matrix x(5, 6, 0.25);
    x(2, 3) = -1;
    Optimizer opt({OptimizerKind::RMSProp});
    for (int s = 0; s < 20; ++s) train_batch(net, x, x, LossKind::MeanSquared, opt);
    return flatten(net);
  };
  CHECK(run() == run());
}

TEST_CASE("checkpoint round trip") {
  const auto net = DenseNet::glorot_uniform({5, 3, 2}, HiddenActivation::Sigmoid, OutputActivation::Softmax, 8);
  const auto bytes = encode_checkpoint(net);
  const auto back = decode_checkpoint(bytes);
  CHECK(back.same_topology(net));
  CHECK(flatten(back) == flatten(net));
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS(decode_checkpoint(truncated));
}
