#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedids/eval.hpp"
#include "fedids/federation.hpp"
#include "fedids/ingest.hpp"

namespace fedids {

inline constexpr int kConfigSchemaVersion = 1;

/// Exactly one of csv / synth is set.
struct DataSource {
  std::optional<std::filesystem::path> csv;
  std::optional<SynthClientSpec> synth;
  std::optional<std::uint64_t> seed;  // synth only; derived from the run seed when absent
};

struct ClientConfig {
  std::string name;
  DataSource source;
  SplitSpec split;
  bool labeled = true;
};

/// Extra evaluation data not used for training (e.g. a held-out capture).
struct TestSourceConfig {
  std::string name;
  DataSource source;
  /// When absent, the entire dataset is test data.
  std::optional<SplitSpec> split;
};

struct TestConfig {
  bool from_clients = true;
  std::vector<TestSourceConfig> extra;
};

struct BaselineConfig {
  /// Also train each labeled client alone and score it on the global test set.
  bool individual_models = false;
  /// Autoencoder threshold detector (validation = clients' classifier rows).
  bool threshold_baseline = false;
};

enum class ExperimentMode { Central, Federated };
enum class TransportKind { InProcess, Socket };

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  std::string name;
  ExperimentMode mode = ExperimentMode::Federated;
  std::uint64_t seed = 0;
  bool allow_single_client = false;
  std::vector<ClientConfig> clients;
  ScalerScope scaler_scope = ScalerScope::Global;
  ScalerInitConfig scaler_init;
  FederationPlan plan;
  ModelConfig model;
  TestConfig test;
  BaselineConfig baselines;
  TransportKind transport = TransportKind::InProcess;
  /// Relative paths resolve against the working directory, not the config.
  std::filesystem::path output_dir = "runs";
  std::size_t checkpoint_every = 0;
  /// Directory relative paths in the config resolve against.
  std::filesystem::path base_dir = ".";
};

/// Reads the JSON config. Syntax errors raise ParseError with the location;
/// malformed fields raise ConfigError.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir = ".");
/// Normalised JSON echo of a config (what the run actually used).
std::string config_to_json(const ExperimentConfig& config);

/// Every rule violation in a parsed config; empty means runnable.
std::vector<std::string> validate_config(const ExperimentConfig& config);
/// Parses and validates a file. Field-level problems come back as violations;
/// a syntax error throws ParseError.
std::vector<std::string> validate_config_file(const std::filesystem::path& path);

struct ExperimentResult {
  std::filesystem::path run_dir;
  ClassReport report;
  std::vector<RoundLog> logs;
  MinMaxScaler eval_scaler;
  DenseNet autoencoder;
  DenseNet classifier;
  std::map<std::string, ClassReport> individual_reports;
  std::optional<ThresholdBaseline> threshold;
  std::size_t transport_messages = 0;
  std::size_t transport_invalid_payloads = 0;
};

/// Runs the configured experiment and writes, under
/// <output_dir>/<name>/seed-<seed>/: config.json, scaler.txt, round_log.csv,
/// loss_curve.csv, report.json, report.txt, checkpoints/, metadata.json.
/// Only metadata.json carries timestamps.
ExperimentResult run_experiment(const ExperimentConfig& config);

}  // namespace fedids
