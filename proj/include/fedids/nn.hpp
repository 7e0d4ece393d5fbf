#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedids/matrix.hpp"

namespace fedids {

enum class HiddenActivation { ReLU, Sigmoid, Tanh };
enum class OutputActivation { Linear, Softmax };
enum class LossKind { MeanSquared, CrossEntropy };

std::string to_string(HiddenActivation a);
std::string to_string(OutputActivation a);
HiddenActivation parse_hidden_activation(const std::string& name);

/// Probabilities are clamped to [kProbabilityFloor, 1] before taking logs.
inline constexpr double kProbabilityFloor = 1e-12;

/// Default topologies: an undercomplete autoencoder and a small softmax
/// classifier over 75 flow features.
inline const std::vector<std::size_t> kDefaultAutoencoderLayers{75, 48, 16, 48, 75};
inline const std::vector<std::size_t> kDefaultClassifierLayers{75, 32, 16, 2};

/// Feed-forward network with dense layers. All parameters live in one flat
/// buffer: for each layer, the out x in weight matrix (row-major) followed by
/// the bias vector. That order is the ParamVector order.
class DenseNet {
 public:
  DenseNet() = default;
  /// Zero-initialised network.
  DenseNet(std::vector<std::size_t> layer_sizes, HiddenActivation hidden,
           OutputActivation output);

  /// Uniform(+-sqrt(6 / (fan_in + fan_out))) weights, zero biases.
  static DenseNet glorot_uniform(std::vector<std::size_t> layer_sizes,
                                 HiddenActivation hidden, OutputActivation output,
                                 std::uint64_t seed);

  const std::vector<std::size_t>& layer_sizes() const { return layer_sizes_; }
  std::size_t layer_count() const { return layer_sizes_.empty() ? 0 : layer_sizes_.size() - 1; }
  std::size_t input_size() const { return layer_sizes_.front(); }
  std::size_t output_size() const { return layer_sizes_.back(); }
  std::size_t parameter_count() const { return params_.size(); }

  HiddenActivation hidden_activation() const { return hidden_; }
  OutputActivation output_activation() const { return output_; }

  std::span<double> weights(std::size_t layer);
  std::span<const double> weights(std::size_t layer) const;
  std::span<double> biases(std::size_t layer);
  std::span<const double> biases(std::size_t layer) const;

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  /// Same layer sizes and activations.
  bool same_topology(const DenseNet& other) const;

  /// Input and output widths match and some interior layer is narrower.
  bool is_autoencoder() const;
  /// Two softmax outputs.
  bool is_classifier() const;

 private:
  std::vector<std::size_t> layer_sizes_;
  HiddenActivation hidden_ = HiddenActivation::ReLU;
  OutputActivation output_ = OutputActivation::Linear;
  std::vector<double> params_;
  std::vector<std::size_t> weight_offset_;
  std::vector<std::size_t> bias_offset_;
};

DenseNet make_autoencoder(std::uint64_t seed,
                          std::vector<std::size_t> layers = kDefaultAutoencoderLayers,
                          HiddenActivation hidden = HiddenActivation::ReLU);
DenseNet make_classifier(std::uint64_t seed,
                         std::vector<std::size_t> layers = kDefaultClassifierLayers,
                         HiddenActivation hidden = HiddenActivation::ReLU);

/// Flattened model parameters together with the number of training examples
/// they were computed from. This is what clients and server exchange.
struct ParamVector {
  std::vector<double> values;
  std::uint64_t count = 0;

  bool operator==(const ParamVector&) const = default;
};

ParamVector flatten(const DenseNet& net, std::uint64_t count = 0);
void unflatten(DenseNet& net, const ParamVector& params);

std::vector<double> forward(const DenseNet& net, std::span<const double> x);
std::vector<double> softmax(std::span<const double> logits);

/// Per-feature squared reconstruction error (x_i - xhat_i)^2.
std::vector<double> reconstruction_error(const DenseNet& autoencoder,
                                         std::span<const double> x);
double mse_loss(std::span<const double> x, std::span<const double> x_hat);
double cross_entropy_loss(std::span<const double> probs, int label);

/// Loss of one example; targets are one-hot rows for cross-entropy.
double example_loss(const DenseNet& net, std::span<const double> x,
                    std::span<const double> target, LossKind loss);

/// Gradient of the example loss w.r.t. every parameter, in ParamVector order.
ParamVector backward(const DenseNet& net, std::span<const double> x,
                     std::span<const double> target, LossKind loss);

enum class OptimizerKind { RMSProp, Adam };
std::string to_string(OptimizerKind k);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double decay = 0.9;  // RMSProp moving-average coefficient
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// RMSProp or Adam with per-parameter accumulators. Accumulators are sized on
/// the first step and must keep the same length afterwards.
class Optimizer {
 public:
  Optimizer() = default;
  explicit Optimizer(OptimizerConfig config);

  void step(std::span<double> params, std::span<const double> grads);
  ParamVector step(const ParamVector& params, const ParamVector& grads);

  /// Drop accumulators and the step counter.
  void reset();

  const OptimizerConfig& config() const { return config_; }
  std::uint64_t step_count() const { return step_count_; }
  const std::vector<double>& first_moment() const { return first_; }
  const std::vector<double>& second_moment() const { return second_; }

 private:
  OptimizerConfig config_;
  std::vector<double> first_;
  std::vector<double> second_;
  std::uint64_t step_count_ = 0;
};

/// One optimizer step on the mean gradient over the listed rows. Returns the
/// mean loss measured before the step.
double train_batch(DenseNet& net, const Matrix& inputs, const Matrix& targets,
                   std::span<const std::size_t> rows, LossKind loss,
                   Optimizer& optimizer);
/// Same, over every row of the matrices.
double train_batch(DenseNet& net, const Matrix& inputs, const Matrix& targets,
                   LossKind loss, Optimizer& optimizer);

/// Mean example loss over all rows, no training.
double mean_loss(const DenseNet& net, const Matrix& inputs, const Matrix& targets,
                 LossKind loss);

/// One-hot 2-column targets from 0/1 labels.
Matrix one_hot(std::span<const int> labels, std::size_t classes = 2);

}  // namespace fedids
