#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fedids/fusion.hpp"
#include "fedids/ingest.hpp"
#include "fedids/nn.hpp"
#include "fedids/scaler.hpp"
#include "fedids/transport.hpp"

namespace fedids {

/// What the classifier sees for each row: the per-feature squared
/// reconstruction error, or its mean as a single value.
enum class FeatureMode { Vector, Scalar };

struct ModelConfig {
  std::vector<std::size_t> ae_layers = kDefaultAutoencoderLayers;
  std::vector<std::size_t> clf_layers = kDefaultClassifierLayers;
  HiddenActivation hidden = HiddenActivation::ReLU;
  OptimizerConfig ae_optimizer{OptimizerKind::RMSProp};
  OptimizerConfig clf_optimizer{OptimizerKind::Adam};
  FeatureMode feature_mode = FeatureMode::Vector;
  bool clamp_scaled = false;

  /// Classifier input width implied by the feature mode.
  std::size_t classifier_input() const;
  void validate() const;
};

struct FederationPlan {
  std::size_t ae_rounds = 200;
  std::size_t clf_rounds = 200;
  FusionStrategy strategy;
  std::uint64_t seed = 0;
  std::size_t eval_every = 10;
  /// Train clients on separate threads between broadcast and aggregation.
  bool parallel_clients = false;

  void validate() const;
};

/// Deterministic sub-seed for a named purpose (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t base, const std::string& purpose, std::uint64_t index = 0);

/// Initial global models for a run.
DenseNet initial_autoencoder(const ModelConfig& model, std::uint64_t seed);
DenseNet initial_classifier(const ModelConfig& model, std::uint64_t seed);

struct RoundLog {
  std::size_t round = 0;
  Phase phase = Phase::Autoencoder;
  double global_eval_loss = 0.0;
  std::map<std::string, std::uint64_t> per_client_counts;
};

/// Maps each row of a labeled dataset to its reconstruction-error features.
/// Labels and row order are kept.
FlowDataset reconstruction_features(const DenseNet& autoencoder, const MinMaxScaler& scaler,
                                    const FlowDataset& raw, FeatureMode mode, bool clamp = false);

/// Local training state of one participant: scaled data, local models and
/// per-phase optimizer/RNG state. Shared by federated clients and central
/// training so both follow the exact same arithmetic.
class LocalLearner {
 public:
  LocalLearner(FlowDataset ae_train, std::optional<FlowDataset> clf_train, ModelConfig model,
               FusionStrategy strategy, std::uint64_t seed);

  const FlowDataset& ae_train() const { return ae_train_; }
  const std::optional<FlowDataset>& clf_train() const { return clf_train_; }
  bool participates_in_classifier() const { return clf_train_.has_value(); }

  /// Every local row (autoencoder and classifier data) for scaler fitting.
  MinMaxScaler update_scaler(const MinMaxScaler& scaler) const;
  MinMaxScaler fit_own_scaler() const;

  void set_scaler(MinMaxScaler scaler);
  const std::optional<MinMaxScaler>& scaler() const { return scaler_; }

  ParamVector train_autoencoder_round(const ParamVector& global);
  /// Builds the derived classifier dataset from the final autoencoder.
  void generate_features(const ParamVector& final_autoencoder);
  const std::optional<FlowDataset>& classifier_features() const { return features_; }
  ParamVector train_classifier_round(const ParamVector& global);

  const DenseNet& autoencoder() const { return ae_; }
  const DenseNet& classifier() const { return clf_; }

 private:
  FlowDataset ae_train_;
  std::optional<FlowDataset> clf_train_;
  ModelConfig model_;
  FusionStrategy strategy_;
  std::optional<MinMaxScaler> scaler_;
  Matrix ae_inputs_;
  std::optional<FlowDataset> features_;
  Matrix clf_targets_;
  DenseNet ae_;
  DenseNet clf_;
  ClientTrainingState ae_state_;
  ClientTrainingState clf_state_;
};

/// A federated participant. Raw rows stay inside; only parameters and
/// scalers leave through replies.
class ClientNode : public MessageHandler {
 public:
  ClientNode(std::string id, FlowDataset ae_train, std::optional<FlowDataset> clf_train,
             ModelConfig model, FusionStrategy strategy, std::uint64_t seed);

  std::optional<FLMessage> handle(const FLMessage& message) override;

  const std::string& id() const { return id_; }
  bool participates_in_classifier() const { return learner_.participates_in_classifier(); }
  Phase phase() const { return phase_; }
  const LocalLearner& learner() const { return learner_; }

 private:
  std::string id_;
  LocalLearner learner_;
  Phase phase_ = Phase::Scaler;
};

/// Server-side evaluation data; never client-private rows.
struct EvalSets {
  FlowDataset benign;   // autoencoder loss per logged round
  FlowDataset labeled;  // classifier loss per logged round
};

enum class ScalerScope { Global, Individual };

struct ClientInfo {
  std::string id;
  bool participates_in_classifier = true;
};

/// Sequential round driver: scaler phase, autoencoder rounds, feature
/// generation, classifier rounds. Phase order is enforced.
class FederationServer {
 public:
  using CheckpointHook = std::function<void(Phase, std::size_t round, const DenseNet&)>;

  FederationServer(Transport& transport, std::vector<ClientInfo> clients, FederationPlan plan,
                   ModelConfig model, EvalSets eval);

  MinMaxScaler run_scaler_phase(ScalerScope scope, const ScalerInitConfig& init);
  DenseNet run_ae_phase();
  void run_feature_phase();
  DenseNet run_clf_phase();

  /// Scaler the server applies to its own evaluation data. Under individual
  /// scalers this is fitted on the evaluation data itself.
  const MinMaxScaler& eval_scaler() const;
  const std::optional<MinMaxScaler>& global_scaler() const { return global_scaler_; }
  const DenseNet& autoencoder() const { return ae_; }
  const DenseNet& classifier() const { return clf_; }
  const std::vector<RoundLog>& logs() const { return logs_; }
  Phase phase() const { return phase_; }

  void set_checkpoint_hook(std::size_t every, CheckpointHook hook);

 private:
  void require_phase(Phase expected, const char* action) const;
  void broadcast_phase(const PhaseNotice& notice, const std::vector<ClientInfo>& to);
  ParamVector run_round(DenseNet& global, std::size_t round, const std::vector<ClientInfo>& members,
                        std::map<std::string, std::uint64_t>& counts);
  bool should_log(std::size_t round, std::size_t total) const;

  Transport& transport_;
  std::vector<ClientInfo> clients_;
  FederationPlan plan_;
  ModelConfig model_;
  EvalSets eval_;
  Phase phase_ = Phase::Scaler;
  bool individual_ = false;
  std::optional<MinMaxScaler> global_scaler_;
  std::optional<MinMaxScaler> eval_scaler_;
  std::mt19937_64 rng_;
  DenseNet ae_;
  DenseNet clf_;
  std::vector<RoundLog> logs_;
  std::size_t checkpoint_every_ = 0;
  CheckpointHook checkpoint_;
};

struct Prediction {
  int label = 0;
  std::vector<double> probabilities;
};

/// scale -> reconstruction error -> classifier. A 0.5/0.5 tie is benign (0).
Prediction predict(const DenseNet& autoencoder, const DenseNet& classifier,
                   const MinMaxScaler& scaler, std::span<const double> x_raw,
                   FeatureMode mode = FeatureMode::Vector, bool clamp = false);
std::vector<int> predict_labels(const DenseNet& autoencoder, const DenseNet& classifier,
                                const MinMaxScaler& scaler, const FlowDataset& data,
                                FeatureMode mode = FeatureMode::Vector, bool clamp = false);

/// Result of training without federation.
struct CentralResult {
  MinMaxScaler scaler;
  DenseNet autoencoder;
  DenseNet classifier;
  std::vector<RoundLog> logs;
};

/// Central training on one participant's data with the same round structure
/// (strategy, seeds, round counts) as a one-client federation.
CentralResult train_central(const FlowDataset& ae_train, const FlowDataset& clf_train,
                            const FederationPlan& plan, const ModelConfig& model,
                            const ScalerInitConfig& init, const EvalSets* eval = nullptr);

}  // namespace fedids
