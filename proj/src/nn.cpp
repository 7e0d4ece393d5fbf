#include "fedids/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace fedids {

std::string to_string(HiddenActivation a) {
  switch (a) {
    case HiddenActivation::ReLU: return "relu";
    case HiddenActivation::Sigmoid: return "sigmoid";
    case HiddenActivation::Tanh: return "tanh";
  }
  return "?";
}

std::string to_string(OutputActivation a) {
  return a == OutputActivation::Linear ? "linear" : "softmax";
}

std::string to_string(OptimizerKind k) {
  return k == OptimizerKind::Adam ? "adam" : "rmsprop";
}

HiddenActivation parse_hidden_activation(const std::string& name) {
  if (name == "relu") return HiddenActivation::ReLU;
  if (name == "sigmoid") return HiddenActivation::Sigmoid;
  if (name == "tanh") return HiddenActivation::Tanh;
  throw ConfigError("unknown hidden activation '" + name + "'");
}

DenseNet::DenseNet(std::vector<std::size_t> layer_sizes, HiddenActivation hidden,
                   OutputActivation output)
    : layer_sizes_(std::move(layer_sizes)), hidden_(hidden), output_(output) {
  if (layer_sizes_.size() < 2) throw ConfigError("DenseNet needs at least two layer sizes");
  for (auto s : layer_sizes_) {
    if (s == 0) throw ConfigError("DenseNet layer sizes must be positive");
  }
  if (output_ == OutputActivation::Softmax && layer_sizes_.back() < 2) {
    throw ConfigError("softmax output needs at least two units");
  }
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes_.size(); ++l) {
    weight_offset_.push_back(offset);
    offset += layer_sizes_[l] * layer_sizes_[l + 1];
    bias_offset_.push_back(offset);
    offset += layer_sizes_[l + 1];
  }
  params_.assign(offset, 0.0);
}

DenseNet DenseNet::glorot_uniform(std::vector<std::size_t> layer_sizes,
                                  HiddenActivation hidden, OutputActivation output,
                                  std::uint64_t seed) {
  DenseNet net(std::move(layer_sizes), hidden, output);
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const double fan_in = static_cast<double>(net.layer_sizes_[l]);
    const double fan_out = static_cast<double>(net.layer_sizes_[l + 1]);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& w : net.weights(l)) w = dist(rng);
  }
  return net;
}

std::span<double> DenseNet::weights(std::size_t layer) {
  return {params_.data() + weight_offset_.at(layer),
          layer_sizes_[layer] * layer_sizes_[layer + 1]};
}
std::span<const double> DenseNet::weights(std::size_t layer) const {
  return {params_.data() + weight_offset_.at(layer),
          layer_sizes_[layer] * layer_sizes_[layer + 1]};
}
std::span<double> DenseNet::biases(std::size_t layer) {
  return {params_.data() + bias_offset_.at(layer), layer_sizes_[layer + 1]};
}
std::span<const double> DenseNet::biases(std::size_t layer) const {
  return {params_.data() + bias_offset_.at(layer), layer_sizes_[layer + 1]};
}

bool DenseNet::same_topology(const DenseNet& other) const {
  return layer_sizes_ == other.layer_sizes_ && hidden_ == other.hidden_ &&
         output_ == other.output_;
}

bool DenseNet::is_autoencoder() const {
  if (layer_sizes_.size() < 3 || layer_sizes_.front() != layer_sizes_.back()) return false;
  return std::any_of(layer_sizes_.begin() + 1, layer_sizes_.end() - 1,
                     [&](std::size_t s) { return s < layer_sizes_.front(); });
}

bool DenseNet::is_classifier() const {
  return output_ == OutputActivation::Softmax && layer_sizes_.back() == 2;
}

DenseNet make_autoencoder(std::uint64_t seed, std::vector<std::size_t> layers,
                          HiddenActivation hidden) {
  auto net = DenseNet::glorot_uniform(std::move(layers), hidden, OutputActivation::Linear, seed);
  if (!net.is_autoencoder()) {
    throw ConfigError("autoencoder layers must start and end at the same width with a narrower interior");
  }
  return net;
}

DenseNet make_classifier(std::uint64_t seed, std::vector<std::size_t> layers,
                         HiddenActivation hidden) {
  auto net = DenseNet::glorot_uniform(std::move(layers), hidden, OutputActivation::Softmax, seed);
  if (!net.is_classifier()) throw ConfigError("classifier must end in two softmax units");
  return net;
}

ParamVector flatten(const DenseNet& net, std::uint64_t count) {
  auto p = net.parameters();
  return ParamVector{{p.begin(), p.end()}, count};
}

void unflatten(DenseNet& net, const ParamVector& params) {
  require_shape(params.values.size() == net.parameter_count(),
                "unflatten: parameter vector has " + std::to_string(params.values.size()) +
                    " values, network expects " + std::to_string(net.parameter_count()));
  std::copy(params.values.begin(), params.values.end(), net.parameters().begin());
}

namespace {

double activate(HiddenActivation a, double z) {
  switch (a) {
    case HiddenActivation::ReLU: return z > 0.0 ? z : 0.0;
    case HiddenActivation::Sigmoid: return 1.0 / (1.0 + std::exp(-z));
    case HiddenActivation::Tanh: return std::tanh(z);
  }
  return z;
}

// Derivative expressed through the activation output.
double activate_grad(HiddenActivation a, double out) {
  switch (a) {
    case HiddenActivation::ReLU: return out > 0.0 ? 1.0 : 0.0;
    case HiddenActivation::Sigmoid: return out * (1.0 - out);
    case HiddenActivation::Tanh: return 1.0 - out * out;
  }
  return 1.0;
}

void softmax_inplace(std::span<double> v) {
  const double peak = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (double& x : v) {
    x = std::exp(x - peak);
    total += x;
  }
  for (double& x : v) x /= total;
}

// Per-layer activations of one forward pass; reused across examples.
struct Workspace {
  std::vector<std::vector<double>> acts;
  std::vector<double> delta;
  std::vector<double> delta_prev;

  explicit Workspace(const DenseNet& net) {
    acts.resize(net.layer_sizes().size());
    for (std::size_t l = 0; l < acts.size(); ++l) acts[l].resize(net.layer_sizes()[l]);
  }
};

void run_forward(const DenseNet& net, std::span<const double> x, Workspace& ws) {
  std::copy(x.begin(), x.end(), ws.acts[0].begin());
  const std::size_t layers = net.layer_count();
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = net.layer_sizes()[l];
    const std::size_t out = net.layer_sizes()[l + 1];
    const double* w = net.weights(l).data();
    const double* b = net.biases(l).data();
    const double* a = ws.acts[l].data();
    double* z = ws.acts[l + 1].data();
    const bool last = l + 1 == layers;
    for (std::size_t j = 0; j < out; ++j) {
      double sum = b[j];
      const double* wr = w + j * in;
      for (std::size_t k = 0; k < in; ++k) sum += wr[k] * a[k];
      z[j] = last ? sum : activate(net.hidden_activation(), sum);
    }
    if (last && net.output_activation() == OutputActivation::Softmax) {
      softmax_inplace(ws.acts[l + 1]);
    }
  }
}

void check_pairing(const DenseNet& net, LossKind loss) {
  const bool ok = (loss == LossKind::MeanSquared &&
                   net.output_activation() == OutputActivation::Linear) ||
                  (loss == LossKind::CrossEntropy &&
                   net.output_activation() == OutputActivation::Softmax);
  if (!ok) {
    throw ConfigError("loss/output pairing must be MSE with linear or cross-entropy with softmax");
  }
}

double loss_of(std::span<const double> out, std::span<const double> target, LossKind loss) {
  if (loss == LossKind::MeanSquared) return mse_loss(target, out);
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (target[i] != 0.0) total -= target[i] * std::log(std::clamp(out[i], kProbabilityFloor, 1.0));
  }
  return total;
}

// Adds the example gradient into grad (ParamVector layout); returns the loss.
double accumulate_gradient(const DenseNet& net, std::span<const double> x,
                           std::span<const double> target, LossKind loss, Workspace& ws,
                           std::span<double> grad) {
  run_forward(net, x, ws);
  const std::size_t layers = net.layer_count();
  const auto& out = ws.acts[layers];
  const double value = loss_of(out, target, loss);

  ws.delta.assign(out.size(), 0.0);
  if (loss == LossKind::MeanSquared) {
    const double scale = 2.0 / static_cast<double>(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) ws.delta[i] = scale * (out[i] - target[i]);
  } else {
    // softmax + cross-entropy: dL/dlogit = p - t (targets sum to one)
    for (std::size_t i = 0; i < out.size(); ++i) ws.delta[i] = out[i] - target[i];
  }

  std::size_t offset = net.parameter_count();
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = net.layer_sizes()[l];
    const std::size_t outw = net.layer_sizes()[l + 1];
    offset -= outw;
    double* gb = grad.data() + offset;
    offset -= in * outw;
    double* gw = grad.data() + offset;
    const double* a = ws.acts[l].data();
    const double* w = net.weights(l).data();
    for (std::size_t j = 0; j < outw; ++j) {
      const double d = ws.delta[j];
      gb[j] += d;
      if (d == 0.0) continue;
      double* gr = gw + j * in;
      for (std::size_t k = 0; k < in; ++k) gr[k] += d * a[k];
    }
    if (l == 0) break;
    ws.delta_prev.assign(in, 0.0);
    for (std::size_t j = 0; j < outw; ++j) {
      const double d = ws.delta[j];
      if (d == 0.0) continue;
      const double* wr = w + j * in;
      for (std::size_t k = 0; k < in; ++k) ws.delta_prev[k] += wr[k] * d;
    }
    for (std::size_t k = 0; k < in; ++k) {
      ws.delta_prev[k] *= activate_grad(net.hidden_activation(), a[k]);
    }
    ws.delta.swap(ws.delta_prev);
  }
  return value;
}

void check_input(const DenseNet& net, std::span<const double> x) {
  require_shape(x.size() == net.input_size(),
                "input has width " + std::to_string(x.size()) + ", network expects " +
                    std::to_string(net.input_size()));
}

void check_target(const DenseNet& net, std::span<const double> t) {
  require_shape(t.size() == net.output_size(),
                "target has width " + std::to_string(t.size()) + ", network outputs " +
                    std::to_string(net.output_size()));
}

}  // namespace

std::vector<double> forward(const DenseNet& net, std::span<const double> x) {
  check_input(net, x);
  Workspace ws(net);
  run_forward(net, x, ws);
  return ws.acts.back();
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw EmptyInputError("softmax of empty vector");
  std::vector<double> v(logits.begin(), logits.end());
  softmax_inplace(v);
  return v;
}

std::vector<double> reconstruction_error(const DenseNet& autoencoder,
                                         std::span<const double> x) {
  if (!autoencoder.is_autoencoder()) throw ConfigError("reconstruction_error needs an autoencoder");
  auto x_hat = forward(autoencoder, x);
  std::vector<double> err(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - x_hat[i];
    err[i] = d * d;
  }
  return err;
}

double mse_loss(std::span<const double> x, std::span<const double> x_hat) {
  require_shape(x.size() == x_hat.size(), "mse_loss: length mismatch");
  if (x.empty()) throw EmptyInputError("mse_loss of empty vectors");
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - x_hat[i];
    total += d * d;
  }
  return total / static_cast<double>(x.size());
}

double cross_entropy_loss(std::span<const double> probs, int label) {
  require_shape(probs.size() == 2, "cross_entropy_loss expects a 2-vector");
  if (label != 0 && label != 1) throw ConfigError("label must be 0 or 1");
  return -std::log(std::clamp(probs[static_cast<std::size_t>(label)], kProbabilityFloor, 1.0));
}

double example_loss(const DenseNet& net, std::span<const double> x,
                    std::span<const double> target, LossKind loss) {
  check_pairing(net, loss);
  check_target(net, target);
  return loss_of(forward(net, x), target, loss);
}

ParamVector backward(const DenseNet& net, std::span<const double> x,
                     std::span<const double> target, LossKind loss) {
  check_pairing(net, loss);
  check_input(net, x);
  check_target(net, target);
  Workspace ws(net);
  ParamVector grad{std::vector<double>(net.parameter_count(), 0.0), 1};
  accumulate_gradient(net, x, target, loss, ws, grad.values);
  return grad;
}

void OptimizerConfig::validate() const {
  auto in_unit = [](double v) { return v > 0.0 && v < 1.0; };
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be a finite non-negative number");
  }
  if (!in_unit(decay) || !in_unit(beta1) || !in_unit(beta2)) {
    throw ConfigError("optimizer decay/beta coefficients must lie in (0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("optimizer epsilon must be positive");
}

Optimizer::Optimizer(OptimizerConfig config) : config_(config) { config_.validate(); }

void Optimizer::reset() {
  first_.clear();
  second_.clear();
  step_count_ = 0;
}

void Optimizer::step(std::span<double> params, std::span<const double> grads) {
  require_shape(params.size() == grads.size(), "optimizer step: params/grads length mismatch");
  if (second_.empty()) {
    second_.assign(params.size(), 0.0);
    if (config_.kind == OptimizerKind::Adam) first_.assign(params.size(), 0.0);
  }
  require_shape(second_.size() == params.size(),
                "optimizer step: parameter count changed between steps");
  ++step_count_;
  const double lr = config_.learning_rate;
  const double eps = config_.epsilon;
  if (config_.kind == OptimizerKind::RMSProp) {
    const double rho = config_.decay;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = grads[i];
      second_[i] = rho * second_[i] + (1.0 - rho) * g * g;
      params[i] -= lr * g / (std::sqrt(second_[i]) + eps);
    }
    return;
  }
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double t = static_cast<double>(step_count_);
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    first_[i] = b1 * first_[i] + (1.0 - b1) * g;
    second_[i] = b2 * second_[i] + (1.0 - b2) * g * g;
    const double m_hat = first_[i] / c1;
    const double v_hat = second_[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

ParamVector Optimizer::step(const ParamVector& params, const ParamVector& grads) {
  ParamVector out = params;
  step(out.values, grads.values);
  return out;
}

double train_batch(DenseNet& net, const Matrix& inputs, const Matrix& targets,
                   std::span<const std::size_t> rows, LossKind loss, Optimizer& optimizer) {
  if (rows.empty()) throw EmptyInputError("train_batch: empty batch");
  check_pairing(net, loss);
  require_shape(inputs.cols() == net.input_size(), "train_batch: input width mismatch");
  require_shape(targets.cols() == net.output_size(), "train_batch: target width mismatch");
  require_shape(inputs.rows() == targets.rows(), "train_batch: inputs/targets row mismatch");

  Workspace ws(net);
  std::vector<double> grad(net.parameter_count(), 0.0);
  double total = 0.0;
  for (std::size_t r : rows) {
    require_shape(r < inputs.rows(), "train_batch: row index out of range");
    total += accumulate_gradient(net, inputs.row(r), targets.row(r), loss, ws, grad);
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (double& g : grad) g *= inv;
  optimizer.step(net.parameters(), grad);
  return total * inv;
}

double train_batch(DenseNet& net, const Matrix& inputs, const Matrix& targets, LossKind loss,
                   Optimizer& optimizer) {
  std::vector<std::size_t> rows(inputs.rows());
  std::iota(rows.begin(), rows.end(), 0);
  return train_batch(net, inputs, targets, rows, loss, optimizer);
}

double mean_loss(const DenseNet& net, const Matrix& inputs, const Matrix& targets,
                 LossKind loss) {
  if (inputs.empty()) throw EmptyInputError("mean_loss: no rows");
  check_pairing(net, loss);
  require_shape(inputs.cols() == net.input_size(), "mean_loss: input width mismatch");
  require_shape(targets.cols() == net.output_size() && targets.rows() == inputs.rows(),
                "mean_loss: target shape mismatch");
  Workspace ws(net);
  double total = 0.0;
  for (std::size_t r = 0; r < inputs.rows(); ++r) {
    run_forward(net, inputs.row(r), ws);
    total += loss_of(ws.acts.back(), targets.row(r), loss);
  }
  return total / static_cast<double>(inputs.rows());
}

Matrix one_hot(std::span<const int> labels, std::size_t classes) {
  Matrix m(labels.size(), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    if (l < 0 || static_cast<std::size_t>(l) >= classes) throw ConfigError("label out of range");
    m(i, static_cast<std::size_t>(l)) = 1.0;
  }
  return m;
}

}  // namespace fedids
