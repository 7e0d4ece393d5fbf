#include "fedids/federation.hpp"

#include <algorithm>
#include <future>

#include "fedids/log.hpp"

namespace fedids {

namespace {

constexpr const char* kServer = "server";

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, const std::string& purpose, std::uint64_t index) {
  std::uint64_t h = splitmix64(base);
  for (unsigned char c : purpose) h = splitmix64(h ^ c);
  return splitmix64(h ^ splitmix64(index));
}

std::size_t ModelConfig::classifier_input() const {
  return feature_mode == FeatureMode::Vector ? ae_layers.front() : 1;
}

void ModelConfig::validate() const {
  ae_optimizer.validate();
  clf_optimizer.validate();
  DenseNet ae(ae_layers, hidden, OutputActivation::Linear);
  if (!ae.is_autoencoder()) {
    throw ConfigError("autoencoder layers must start and end at the same width with a narrower interior");
  }
  DenseNet clf(clf_layers, hidden, OutputActivation::Softmax);
  if (!clf.is_classifier()) throw ConfigError("classifier layers must end in 2 units");
  if (clf_layers.front() != classifier_input()) {
    throw ConfigError("classifier input width " + std::to_string(clf_layers.front()) +
                      " does not match the reconstruction feature width " +
                      std::to_string(classifier_input()));
  }
}

void FederationPlan::validate() const {
  if (ae_rounds == 0 || clf_rounds == 0) throw ConfigError("round counts must be >= 1");
  if (eval_every == 0) throw ConfigError("eval_every must be >= 1");
  strategy.validate();
}

DenseNet initial_autoencoder(const ModelConfig& model, std::uint64_t seed) {
  return make_autoencoder(derive_seed(seed, "ae-init"), model.ae_layers, model.hidden);
}

DenseNet initial_classifier(const ModelConfig& model, std::uint64_t seed) {
  return make_classifier(derive_seed(seed, "clf-init"), model.clf_layers, model.hidden);
}

FlowDataset reconstruction_features(const DenseNet& autoencoder, const MinMaxScaler& scaler,
                                    const FlowDataset& raw, FeatureMode mode, bool clamp) {
  if (!raw.labeled()) {
    throw ParticipationError("dataset '" + raw.name +
                             "' has no labels; it cannot feed the classifier phase");
  }
  FlowDataset out;
  out.name = raw.name + "/recon";
  out.labels = raw.labels;
  const std::size_t width = mode == FeatureMode::Vector ? raw.width() : 1;
  if (mode == FeatureMode::Vector) {
    for (const auto& n : raw.feature_names) out.feature_names.push_back("err " + n);
  } else {
    out.feature_names = {"recon mse"};
  }
  out.features = Matrix(raw.rows(), width);
  for (std::size_t r = 0; r < raw.rows(); ++r) {
    const auto scaled = scale(scaler, raw.features.row(r), clamp);
    const auto err = reconstruction_error(autoencoder, scaled);
    auto dst = out.features.row(r);
    if (mode == FeatureMode::Vector) {
      std::copy(err.begin(), err.end(), dst.begin());
    } else {
      double total = 0.0;
      for (double e : err) total += e;
      dst[0] = total / static_cast<double>(err.size());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// LocalLearner

LocalLearner::LocalLearner(FlowDataset ae_train, std::optional<FlowDataset> clf_train,
                           ModelConfig model, FusionStrategy strategy, std::uint64_t seed)
    : ae_train_(std::move(ae_train)),
      clf_train_(std::move(clf_train)),
      model_(std::move(model)),
      strategy_(strategy),
      ae_(model_.ae_layers, model_.hidden, OutputActivation::Linear),
      clf_(model_.clf_layers, model_.hidden, OutputActivation::Softmax),
      ae_state_(derive_seed(seed, "ae-train"), model_.ae_optimizer),
      clf_state_(derive_seed(seed, "clf-train"), model_.clf_optimizer) {
  if (ae_train_.width() != ae_.input_size()) {
    throw SchemaError("autoencoder data '" + ae_train_.name + "' has width " +
                      std::to_string(ae_train_.width()) + ", model expects " +
                      std::to_string(ae_.input_size()));
  }
  if (clf_train_) {
    if (!clf_train_->labeled()) {
      throw ParticipationError("classifier data '" + clf_train_->name + "' must be labeled");
    }
    if (clf_train_->width() != ae_train_.width()) {
      throw SchemaError("classifier data '" + clf_train_->name + "' differs in width");
    }
  }
}

MinMaxScaler LocalLearner::update_scaler(const MinMaxScaler& scaler) const {
  auto s = client_update(scaler, ae_train_);
  if (clf_train_) s = client_update(s, *clf_train_);
  return s;
}

MinMaxScaler LocalLearner::fit_own_scaler() const {
  std::mt19937_64 unused(0);
  return update_scaler(init_scaler(ae_train_.feature_names, {ScalerInit::Sentinel}, unused));
}

void LocalLearner::set_scaler(MinMaxScaler scaler) {
  ae_inputs_ = scale(scaler, ae_train_.features, model_.clamp_scaled);
  scaler_ = std::move(scaler);
}

ParamVector LocalLearner::train_autoencoder_round(const ParamVector& global) {
  if (!scaler_) throw ProtocolError("autoencoder training before a scaler was set");
  unflatten(ae_, global);
  TrainingData data{&ae_inputs_, &ae_inputs_, LossKind::MeanSquared};
  return client_round(ae_, strategy_, data, ae_state_);
}

void LocalLearner::generate_features(const ParamVector& final_autoencoder) {
  if (!clf_train_) {
    throw ParticipationError("unlabeled participant cannot generate classifier features");
  }
  if (!scaler_) throw ProtocolError("feature generation before a scaler was set");
  unflatten(ae_, final_autoencoder);
  features_ = reconstruction_features(ae_, *scaler_, *clf_train_, model_.feature_mode,
                                      model_.clamp_scaled);
  clf_targets_ = one_hot(*features_->labels);
}

ParamVector LocalLearner::train_classifier_round(const ParamVector& global) {
  if (!features_) throw ProtocolError("classifier training before feature generation");
  unflatten(clf_, global);
  TrainingData data{&features_->features, &clf_targets_, LossKind::CrossEntropy};
  return client_round(clf_, strategy_, data, clf_state_);
}

// ---------------------------------------------------------------------------
// ClientNode

ClientNode::ClientNode(std::string id, FlowDataset ae_train, std::optional<FlowDataset> clf_train,
                       ModelConfig model, FusionStrategy strategy, std::uint64_t seed)
    : id_(std::move(id)),
      learner_(std::move(ae_train), std::move(clf_train), std::move(model), strategy, seed) {}

std::optional<FLMessage> ClientNode::handle(const FLMessage& m) {
  switch (m.kind) {
    case MessageKind::PhaseAdvance: {
      const auto notice = decode_phase(m.payload);
      switch (notice.phase) {
        case Phase::Scaler:
          if (notice.individual_scalers) learner_.set_scaler(learner_.fit_own_scaler());
          break;
        case Phase::Autoencoder:
          if (!learner_.scaler()) throw ProtocolError("client '" + id_ + "' has no scaler yet");
          break;
        case Phase::FeatureGeneration:
          if (!notice.model) throw ProtocolError("feature generation notice carries no model");
          learner_.generate_features(*notice.model);
          break;
        case Phase::Classifier:
          if (!learner_.classifier_features()) {
            throw ProtocolError("client '" + id_ + "' entered classifier phase without features");
          }
          break;
        case Phase::Done: break;
      }
      phase_ = notice.phase;
      return std::nullopt;
    }
    case MessageKind::ScalerPass: {
      if (phase_ != Phase::Scaler) throw ProtocolError("scaler pass outside the scaler phase");
      auto updated = learner_.update_scaler(decode_scaler(m.payload));
      return make_message(MessageKind::ScalerPass, m.round, id_, encode_scaler(updated));
    }
    case MessageKind::ScalerBroadcast:
      learner_.set_scaler(decode_scaler(m.payload));
      return std::nullopt;
    case MessageKind::GlobalModel: {
      const auto global = decode_params(m.payload);
      ParamVector update;
      if (phase_ == Phase::Autoencoder) {
        update = learner_.train_autoencoder_round(global);
      } else if (phase_ == Phase::Classifier) {
        update = learner_.train_classifier_round(global);
      } else {
        throw ProtocolError("global model received in phase " + to_string(phase_));
      }
      return make_message(MessageKind::ClientUpdate, m.round, id_, encode_params(update));
    }
    case MessageKind::ClientUpdate:
      throw ProtocolError("client '" + id_ + "' received a ClientUpdate");
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// FederationServer

FederationServer::FederationServer(Transport& transport, std::vector<ClientInfo> clients,
                                   FederationPlan plan, ModelConfig model, EvalSets eval)
    : transport_(transport),
      clients_(std::move(clients)),
      plan_(plan),
      model_(std::move(model)),
      eval_(std::move(eval)),
      rng_(derive_seed(plan.seed, "scaler-ring")) {
  plan_.validate();
  model_.validate();
  if (clients_.empty()) throw ConfigError("federation needs at least one client");
  std::vector<std::string> ids;
  for (const auto& c : clients_) ids.push_back(c.id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw ConfigError("client ids must be unique");
  }
  if (eval_.benign.rows() == 0) throw EmptyInputError("server needs benign evaluation rows");
  ae_ = initial_autoencoder(model_, plan_.seed);
  clf_ = initial_classifier(model_, plan_.seed);
}

void FederationServer::set_checkpoint_hook(std::size_t every, CheckpointHook hook) {
  checkpoint_every_ = every;
  checkpoint_ = std::move(hook);
}

void FederationServer::require_phase(Phase expected, const char* action) const {
  if (phase_ != expected) {
    throw ProtocolError(std::string(action) + " requires phase " + to_string(expected) +
                        ", server is in phase " + to_string(phase_));
  }
}

const MinMaxScaler& FederationServer::eval_scaler() const {
  if (!eval_scaler_) throw ProtocolError("scaler phase has not run");
  return *eval_scaler_;
}

void FederationServer::broadcast_phase(const PhaseNotice& notice, const std::vector<ClientInfo>& to) {
  const auto payload = encode_phase(notice);
  for (const auto& c : to) {
    transport_.deliver(c.id, make_message(MessageKind::PhaseAdvance, 0, kServer, payload));
  }
}

MinMaxScaler FederationServer::run_scaler_phase(ScalerScope scope, const ScalerInitConfig& init) {
  require_phase(Phase::Scaler, "scaler phase");
  individual_ = scope == ScalerScope::Individual;
  broadcast_phase({Phase::Scaler, individual_, std::nullopt}, clients_);

  if (individual_) {
    std::vector<FlowDataset> parts{eval_.benign};
    if (eval_.labeled.rows() > 0) parts.push_back(eval_.labeled);
    eval_scaler_ = fit_local_scaler(concat(parts, "eval"));
  } else {
    std::vector<std::string> ids;
    for (const auto& c : clients_) ids.push_back(c.id);
    std::uint32_t step = 0;
    auto visit = [&](const std::string& id, const MinMaxScaler& s) {
      auto reply = transport_.request(
          id, make_message(MessageKind::ScalerPass, ++step, kServer, encode_scaler(s)));
      if (reply.kind != MessageKind::ScalerPass) {
        throw ProtocolError("client '" + id + "' answered a scaler pass with " + to_string(reply.kind));
      }
      auto updated = decode_scaler(reply.payload);
      if (updated.width() != s.width()) throw ProtocolError("client '" + id + "' changed scaler width");
      return updated;
    };
    global_scaler_ = ring_orchestrate(ids, eval_.benign.feature_names, init, rng_, visit);
    const auto payload = encode_scaler(*global_scaler_);
    for (const auto& c : clients_) {
      transport_.deliver(c.id, make_message(MessageKind::ScalerBroadcast, 0, kServer, payload));
    }
    eval_scaler_ = global_scaler_;
    if (global_scaler_->initialized_randomly) {
      log::info("scaler features still holding random init bounds: " +
                std::to_string(global_scaler_->init_retained_count()));
    }
  }
  phase_ = Phase::Autoencoder;
  broadcast_phase({Phase::Autoencoder, individual_, std::nullopt}, clients_);
  return individual_ ? *eval_scaler_ : *global_scaler_;
}

bool FederationServer::should_log(std::size_t round, std::size_t total) const {
  return round == 1 || round % plan_.eval_every == 0 || round == total;
}

ParamVector FederationServer::run_round(DenseNet& global, std::size_t round,
                                        const std::vector<ClientInfo>& members,
                                        std::map<std::string, std::uint64_t>& counts) {
  const auto payload = encode_params(flatten(global));
  const auto msg = make_message(MessageKind::GlobalModel, static_cast<std::uint32_t>(round), kServer, payload);
  std::vector<FLMessage> replies(members.size());
  if (plan_.parallel_clients && members.size() > 1) {
    std::vector<std::future<FLMessage>> pending;
    for (const auto& c : members) {
      pending.push_back(std::async(std::launch::async, [&, id = c.id] { return transport_.request(id, msg); }));
    }
    for (std::size_t i = 0; i < pending.size(); ++i) replies[i] = pending[i].get();
  } else {
    for (std::size_t i = 0; i < members.size(); ++i) replies[i] = transport_.request(members[i].id, msg);
  }

  std::vector<ParamVector> updates;
  for (std::size_t i = 0; i < members.size(); ++i) {
    const auto& r = replies[i];
    if (r.kind != MessageKind::ClientUpdate || r.round != round) {
      throw ProtocolError("client '" + members[i].id + "' sent an unexpected reply in round " +
                          std::to_string(round));
    }
    auto update = decode_params(r.payload);
    if (update.values.size() != global.parameter_count()) {
      throw ProtocolError("client '" + members[i].id + "' update has " +
                          std::to_string(update.values.size()) + " parameters, global model has " +
                          std::to_string(global.parameter_count()));
    }
    counts[members[i].id] = update.count;
    updates.push_back(std::move(update));
  }
  auto fused = fed_avg(updates);
  unflatten(global, fused);
  return fused;
}

DenseNet FederationServer::run_ae_phase() {
  require_phase(Phase::Autoencoder, "autoencoder phase");
  const auto eval_inputs = scale(*eval_scaler_, eval_.benign.features, model_.clamp_scaled);
  for (std::size_t r = 1; r <= plan_.ae_rounds; ++r) {
    std::map<std::string, std::uint64_t> counts;
    run_round(ae_, r, clients_, counts);
    if (should_log(r, plan_.ae_rounds)) {
      const double loss = mean_loss(ae_, eval_inputs, eval_inputs, LossKind::MeanSquared);
      logs_.push_back({r, Phase::Autoencoder, loss, std::move(counts)});
      log::debug("AE round " + std::to_string(r) + " eval loss " + std::to_string(loss));
    }
    if (checkpoint_ && checkpoint_every_ > 0 && r % checkpoint_every_ == 0) {
      checkpoint_(Phase::Autoencoder, r, ae_);
    }
  }
  phase_ = Phase::FeatureGeneration;
  return ae_;
}

void FederationServer::run_feature_phase() {
  require_phase(Phase::FeatureGeneration, "feature generation");
  std::vector<ClientInfo> members;
  for (const auto& c : clients_) {
    if (c.participates_in_classifier) members.push_back(c);
  }
  if (members.empty()) throw ConfigError("no client takes part in the classifier phase");
  broadcast_phase({Phase::FeatureGeneration, individual_, flatten(ae_)}, members);
  phase_ = Phase::Classifier;
  broadcast_phase({Phase::Classifier, individual_, std::nullopt}, members);
}

DenseNet FederationServer::run_clf_phase() {
  require_phase(Phase::Classifier, "classifier phase");
  std::vector<ClientInfo> members;
  for (const auto& c : clients_) {
    if (c.participates_in_classifier) members.push_back(c);
  }
  std::optional<FlowDataset> eval_features;
  Matrix eval_targets;
  if (eval_.labeled.rows() > 0) {
    eval_features = reconstruction_features(ae_, *eval_scaler_, eval_.labeled, model_.feature_mode,
                                            model_.clamp_scaled);
    eval_targets = one_hot(*eval_features->labels);
  }
  for (std::size_t r = 1; r <= plan_.clf_rounds; ++r) {
    std::map<std::string, std::uint64_t> counts;
    run_round(clf_, r, members, counts);
    if (should_log(r, plan_.clf_rounds)) {
      const double loss = eval_features ? mean_loss(clf_, eval_features->features, eval_targets,
                                                    LossKind::CrossEntropy)
                                        : 0.0;
      logs_.push_back({r, Phase::Classifier, loss, std::move(counts)});
    }
    if (checkpoint_ && checkpoint_every_ > 0 && r % checkpoint_every_ == 0) {
      checkpoint_(Phase::Classifier, r, clf_);
    }
  }
  phase_ = Phase::Done;
  broadcast_phase({Phase::Done, individual_, std::nullopt}, clients_);
  return clf_;
}

// ---------------------------------------------------------------------------

Prediction predict(const DenseNet& autoencoder, const DenseNet& classifier,
                   const MinMaxScaler& scaler, std::span<const double> x_raw, FeatureMode mode,
                   bool clamp) {
  const auto scaled = scale(scaler, x_raw, clamp);
  const auto err = reconstruction_error(autoencoder, scaled);
  std::vector<double> input;
  if (mode == FeatureMode::Vector) {
    input = err;
  } else {
    double total = 0.0;
    for (double e : err) total += e;
    input = {total / static_cast<double>(err.size())};
  }
  Prediction p;
  p.probabilities = forward(classifier, input);
  p.label = p.probabilities[1] > p.probabilities[0] ? 1 : 0;
  return p;
}

std::vector<int> predict_labels(const DenseNet& autoencoder, const DenseNet& classifier,
                                const MinMaxScaler& scaler, const FlowDataset& data,
                                FeatureMode mode, bool clamp) {
  std::vector<int> out(data.rows());
  for (std::size_t r = 0; r < data.rows(); ++r) {
    out[r] = predict(autoencoder, classifier, scaler, data.features.row(r), mode, clamp).label;
  }
  return out;
}

CentralResult train_central(const FlowDataset& ae_train, const FlowDataset& clf_train,
                            const FederationPlan& plan, const ModelConfig& model,
                            const ScalerInitConfig& init, const EvalSets* eval) {
  plan.validate();
  model.validate();
  LocalLearner learner(ae_train, clf_train, model, plan.strategy, derive_seed(plan.seed, "client", 0));
  std::mt19937_64 ring_rng(derive_seed(plan.seed, "scaler-ring"));
  const std::vector<std::string> ids{"central"};
  CentralResult result;
  result.scaler = ring_orchestrate(ids, ae_train.feature_names, init, ring_rng,
                                   [&](const std::string&, const MinMaxScaler& s) {
                                     return learner.update_scaler(s);
                                   });
  learner.set_scaler(result.scaler);

  auto should_log = [&](std::size_t r, std::size_t total) {
    return eval != nullptr && (r == 1 || r % plan.eval_every == 0 || r == total);
  };

  result.autoencoder = initial_autoencoder(model, plan.seed);
  Matrix eval_inputs;
  if (eval) eval_inputs = scale(result.scaler, eval->benign.features, model.clamp_scaled);
  for (std::size_t r = 1; r <= plan.ae_rounds; ++r) {
    const auto update = learner.train_autoencoder_round(flatten(result.autoencoder));
    unflatten(result.autoencoder, update);
    if (should_log(r, plan.ae_rounds)) {
      result.logs.push_back({r, Phase::Autoencoder,
                             mean_loss(result.autoencoder, eval_inputs, eval_inputs, LossKind::MeanSquared),
                             {{"central", update.count}}});
    }
  }

  learner.generate_features(flatten(result.autoencoder));
  result.classifier = initial_classifier(model, plan.seed);
  std::optional<FlowDataset> eval_features;
  Matrix eval_targets;
  if (eval && eval->labeled.rows() > 0) {
    eval_features = reconstruction_features(result.autoencoder, result.scaler, eval->labeled,
                                            model.feature_mode, model.clamp_scaled);
    eval_targets = one_hot(*eval_features->labels);
  }
  for (std::size_t r = 1; r <= plan.clf_rounds; ++r) {
    const auto update = learner.train_classifier_round(flatten(result.classifier));
    unflatten(result.classifier, update);
    if (should_log(r, plan.clf_rounds) && eval_features) {
      result.logs.push_back({r, Phase::Classifier,
                             mean_loss(result.classifier, eval_features->features, eval_targets,
                                       LossKind::CrossEntropy),
                             {{"central", update.count}}});
    }
  }
  return result;
}

}  // namespace fedids
