#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fedids/federation.hpp"

namespace fedids {

/// Counts with attack (label 1) as the positive class.
struct ConfusionMatrix {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels);

/// Builds the matrix from table-style rows: benign = [predicted benign,
/// predicted attack], attack = [predicted benign, predicted attack].
ConfusionMatrix confusion_from_rows(std::array<std::uint64_t, 2> benign_row,
                                    std::array<std::uint64_t, 2> attack_row);

/// Same counts with benign treated as the positive class.
ConfusionMatrix swap_classes(const ConfusionMatrix& m);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
  /// [predicted benign, predicted attack] for rows of this class.
  std::array<std::uint64_t, 2> confusion_row{0, 0};
  /// False when the class has no rows; its metrics are then not reported.
  bool present = false;
  /// A zero denominator was replaced by 0.
  bool zero_division = false;
};

struct ClassReport {
  ClassMetrics benign;
  ClassMetrics attack;
  double accuracy = 0.0;
  std::uint64_t total = 0;
};

ClassReport class_report(const ConfusionMatrix& m);

/// Attack-class F1 for a given split of counts; 0 when undefined.
double f1_from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn);

struct ThresholdChoice {
  double threshold = 0.0;
  double f1 = 0.0;
};

/// Candidate thresholds are the midpoints between consecutive distinct
/// losses plus one just below the smallest loss (everything flagged). A row is
/// an attack when its loss is strictly greater than the threshold. Picks the
/// highest attack F1; ties go to the lowest threshold.
ThresholdChoice select_threshold(std::span<const double> benign_losses,
                                 std::span<const double> attack_losses);

std::vector<int> apply_threshold(std::span<const double> losses, double threshold);

/// Mean squared reconstruction error of each scaled row.
std::vector<double> scalar_losses(const DenseNet& autoencoder, const MinMaxScaler& scaler,
                                  const FlowDataset& data, bool clamp = false);

struct ThresholdBaseline {
  double threshold = 0.0;
  double validation_f1 = 0.0;
  ClassReport report;
};

/// Autoencoder-only detector: threshold chosen on validation rows, report
/// computed on the (disjoint) test rows.
ThresholdBaseline threshold_baseline(const DenseNet& autoencoder, const MinMaxScaler& scaler,
                                     const FlowDataset& val_benign, const FlowDataset& val_attack,
                                     const FlowDataset& test, bool clamp = false);

/// CSV "round,phase,loss" ordered by round (stable for equal rounds).
void emit_loss_curve(std::span<const RoundLog> logs, const std::filesystem::path& path);
std::string loss_curve_csv(std::span<const RoundLog> logs);

/// CSV "round,phase,loss,counts" in log order; counts are id=n pairs joined by ';'.
std::string round_log_csv(std::span<const RoundLog> logs);

/// Variance of successive loss differences for one phase, over logs whose
/// round lies in the final `tail_fraction` of that phase's rounds.
double round_to_round_variance(std::span<const RoundLog> logs, Phase phase, double tail_fraction = 0.5);

/// Text table: one block per class with precision, recall, F1 and
/// confusion row. Absent classes print "--".
std::string format_report(const std::string& title, const ClassReport& report);

/// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace fedids
