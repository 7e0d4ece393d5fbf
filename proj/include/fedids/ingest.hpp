#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedids/matrix.hpp"

namespace fedids {

/// Ordered input columns plus the columns that are not used as features.
struct FeatureSchema {
  std::vector<std::string> column_names;
  std::vector<std::string> dropped_columns;

  /// Kept columns in input order.
  std::vector<std::string> feature_names() const;
  std::size_t feature_count() const { return column_names.size() - dropped_columns.size(); }

  /// The 80-column CIC-FlowMeter layout with Dst Port, Timestamp,
  /// Flow Byts/s, Flow Pkts/s and Label dropped (75 features).
  static const FeatureSchema& cic_flowmeter();
  /// A generic schema named f0..f{n-1} with nothing dropped.
  static FeatureSchema anonymous(std::size_t features);
};

/// Name of the label column in the CIC layout.
inline constexpr const char* kLabelColumn = "Label";

/// Normalises a header cell (trim, lower-case, collapse whitespace, strip
/// underscores) and resolves known spelling variants to the canonical CIC
/// column name. Returns the cleaned-up name when no alias applies.
std::string canonical_column_name(const std::string& raw);

/// Feature rows with optional 0/1 labels (0 = benign, 1 = any attack).
/// Unlabeled datasets stand for benign-only captures without ground truth.
struct FlowDataset {
  Matrix features;
  std::optional<std::vector<int>> labels;
  std::vector<std::string> feature_names;
  std::string name;

  std::size_t rows() const { return features.rows(); }
  std::size_t width() const { return features.cols(); }
  bool labeled() const { return labels.has_value(); }

  /// Label of row r; unlabeled rows read as benign.
  int label(std::size_t r) const { return labels ? (*labels)[r] : 0; }

  FlowDataset subset(std::span<const std::size_t> indices, std::string new_name = {}) const;
  /// Row indices per class (unlabeled rows are class 0).
  std::vector<std::size_t> rows_of_class(int cls) const;

  bool operator==(const FlowDataset&) const = default;
};

/// Stack datasets of equal width. The result is labeled only if every part is.
FlowDataset concat(std::span<const FlowDataset> parts, std::string name);

struct LoadStats {
  std::size_t rows_read = 0;
  std::size_t dropped_non_finite = 0;
  std::size_t dropped_unparseable = 0;
};

struct LoadResult {
  FlowDataset dataset;
  LoadStats stats;
};

/// Benign (case-insensitive, trimmed) maps to 0; every other label to 1.
int map_label(const std::string& raw);

/// Reads a CIC-FlowMeter style CSV. Feature columns are matched by canonical
/// name; dropped columns may be absent. A missing Label column yields an
/// unlabeled dataset.
LoadResult load_flow_csv(const std::filesystem::path& path,
                         const FeatureSchema& schema = FeatureSchema::cic_flowmeter());
LoadResult parse_flow_csv(const std::string& text, const FeatureSchema& schema,
                          std::string name);

struct SplitSpec {
  std::size_t ae_train_benign = 0;
  std::size_t clf_train_benign = 0;
  std::size_t clf_train_attack = 0;
  std::size_t test_benign = 0;
  std::size_t test_attack = 0;
  std::uint64_t seed = 0;
};

struct SplitResult {
  FlowDataset ae_train;   // benign only
  FlowDataset clf_train;  // labeled, requested per-class counts
  FlowDataset test;
};

/// Disjoint, seeded partition. Unlabeled datasets may only request benign
/// autoencoder rows.
SplitResult split(const FlowDataset& dataset, const SplitSpec& spec);

/// Shorthand for a per-feature vector in configs: a fill value plus
/// [begin, end) ranges overridden with other values.
struct FeatureVector {
  double fill = 0.0;
  struct Range {
    std::size_t begin = 0;
    std::size_t end = 0;
    double value = 0.0;
  };
  std::vector<Range> ranges;
  std::optional<std::vector<double>> explicit_values;

  std::vector<double> expand(std::size_t width) const;
  static FeatureVector constant(double v) { return FeatureVector{v, {}, std::nullopt}; }
};

struct GaussianComponent {
  double weight = 1.0;
  FeatureVector mean;
  FeatureVector stddev = FeatureVector::constant(1.0);
  /// Full covariance; when present it replaces stddev.
  std::optional<std::vector<std::vector<double>>> covariance;
};

struct SynthClientSpec {
  std::string name;
  std::size_t benign_rows = 0;
  std::size_t attack_rows = 0;
  std::vector<GaussianComponent> components;
  /// Attack rows: benign component mean + offset, spread scaled by attack_scale.
  FeatureVector attack_offset;
  double attack_scale = 1.0;
  bool labeled = true;
};

/// Draws each client's rows from its own Gaussian mixture. Different clients
/// get independent RNG streams derived from seed and client position.
std::vector<FlowDataset> synth_generate(std::span<const SynthClientSpec> clients,
                                        std::uint64_t seed, std::size_t width = 75);
FlowDataset synth_client(const SynthClientSpec& client, std::uint64_t seed,
                         std::size_t width = 75);

}  // namespace fedids
