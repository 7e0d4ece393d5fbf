#include "fedids/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

namespace fedids {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels) {
  require_shape(preds.size() == labels.size(), "confusion: predictions and labels differ in length");
  ConfusionMatrix m;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int p = preds[i];
    const int l = labels[i];
    if ((p != 0 && p != 1) || (l != 0 && l != 1)) throw ConfigError("confusion: values must be 0 or 1");
    if (l == 1) {
      (p == 1 ? m.tp : m.fn)++;
    } else {
      (p == 1 ? m.fp : m.tn)++;
    }
  }
  return m;
}

ConfusionMatrix confusion_from_rows(std::array<std::uint64_t, 2> benign_row,
                                    std::array<std::uint64_t, 2> attack_row) {
  return ConfusionMatrix{attack_row[1], benign_row[1], benign_row[0], attack_row[0]};
}

ConfusionMatrix swap_classes(const ConfusionMatrix& m) {
  return ConfusionMatrix{m.tn, m.fn, m.tp, m.fp};
}

namespace {

// Metrics of one class given its true-positive / false-positive / false-negative counts.
ClassMetrics metrics_for(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
  ClassMetrics c;
  c.support = tp + fn;
  c.present = c.support > 0;
  if (tp + fp > 0) {
    c.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  } else {
    c.zero_division = true;
  }
  if (tp + fn > 0) {
    c.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  } else {
    c.zero_division = true;
  }
  if (c.precision + c.recall > 0.0) {
    c.f1 = 2.0 * c.precision * c.recall / (c.precision + c.recall);
  } else {
    c.zero_division = true;
  }
  return c;
}

}  // namespace

double f1_from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
  return metrics_for(tp, fp, fn).f1;
}

ClassReport class_report(const ConfusionMatrix& m) {
  if (m.total() == 0) throw EmptyInputError("class_report: empty confusion matrix");
  ClassReport r;
  r.total = m.total();
  r.attack = metrics_for(m.tp, m.fp, m.fn);
  r.attack.confusion_row = {m.fn, m.tp};
  r.benign = metrics_for(m.tn, m.fn, m.fp);
  r.benign.confusion_row = {m.tn, m.fp};
  r.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(m.total());
  return r;
}

ThresholdChoice select_threshold(std::span<const double> benign_losses,
                                 std::span<const double> attack_losses) {
  if (benign_losses.empty() || attack_losses.empty()) {
    throw ConfigError("threshold selection needs both benign and attack validation rows");
  }
  std::vector<std::pair<double, int>> all;
  all.reserve(benign_losses.size() + attack_losses.size());
  for (double v : benign_losses) all.emplace_back(v, 0);
  for (double v : attack_losses) all.emplace_back(v, 1);
  std::sort(all.begin(), all.end());

  const std::uint64_t attacks = attack_losses.size();
  const std::uint64_t benigns = benign_losses.size();
  // Below everything: every row flagged.
  ThresholdChoice best{std::nextafter(all.front().first, -std::numeric_limits<double>::infinity()),
                       f1_from_counts(attacks, benigns, 0)};
  std::uint64_t below_attack = 0;
  std::uint64_t below_benign = 0;
  for (std::size_t i = 0; i < all.size();) {
    const double value = all[i].first;
    while (i < all.size() && all[i].first == value) {
      (all[i].second == 1 ? below_attack : below_benign)++;
      ++i;
    }
    if (i == all.size()) break;
    const double threshold = value + (all[i].first - value) / 2.0;
    const double f1 = f1_from_counts(attacks - below_attack, benigns - below_benign, below_attack);
    if (f1 > best.f1) best = {threshold, f1};
  }
  return best;
}

std::vector<int> apply_threshold(std::span<const double> losses, double threshold) {
  std::vector<int> out(losses.size());
  for (std::size_t i = 0; i < losses.size(); ++i) out[i] = losses[i] > threshold ? 1 : 0;
  return out;
}

std::vector<double> scalar_losses(const DenseNet& autoencoder, const MinMaxScaler& scaler,
                                  const FlowDataset& data, bool clamp) {
  std::vector<double> out(data.rows());
  for (std::size_t r = 0; r < data.rows(); ++r) {
    const auto x = scale(scaler, data.features.row(r), clamp);
    out[r] = mse_loss(x, forward(autoencoder, x));
  }
  return out;
}

ThresholdBaseline threshold_baseline(const DenseNet& autoencoder, const MinMaxScaler& scaler,
                                     const FlowDataset& val_benign, const FlowDataset& val_attack,
                                     const FlowDataset& test, bool clamp) {
  if (val_benign.rows() == 0 || val_attack.rows() == 0) {
    throw ConfigError("threshold baseline needs benign and attack validation rows");
  }
  if (!test.labeled()) throw ConfigError("threshold baseline test set must be labeled");
  ThresholdBaseline out;
  const auto choice = select_threshold(scalar_losses(autoencoder, scaler, val_benign, clamp),
                                       scalar_losses(autoencoder, scaler, val_attack, clamp));
  out.threshold = choice.threshold;
  out.validation_f1 = choice.f1;
  const auto preds = apply_threshold(scalar_losses(autoencoder, scaler, test, clamp), choice.threshold);
  out.report = class_report(confusion(preds, *test.labels));
  return out;
}

std::string loss_curve_csv(std::span<const RoundLog> logs) {
  std::vector<const RoundLog*> sorted;
  for (const auto& l : logs) sorted.push_back(&l);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const RoundLog* a, const RoundLog* b) { return a->round < b->round; });
  std::ostringstream out;
  out << "round,phase,loss\n";
  for (const auto* l : sorted) {
    out << l->round << ',' << to_string(l->phase) << ',' << format_double(l->global_eval_loss) << '\n';
  }
  return out.str();
}

void emit_loss_curve(std::span<const RoundLog> logs, const std::filesystem::path& path) {
  if (logs.empty()) throw EmptyInputError("emit_loss_curve: no round logs");
  std::ofstream out(path);
  if (!out) throw FilesystemError("cannot write loss curve " + path.string());
  out << loss_curve_csv(logs);
  if (!out) throw FilesystemError("failed writing loss curve " + path.string());
}

std::string round_log_csv(std::span<const RoundLog> logs) {
  std::ostringstream out;
  out << "round,phase,loss,counts\n";
  for (const auto& l : logs) {
    out << l.round << ',' << to_string(l.phase) << ',' << format_double(l.global_eval_loss) << ',';
    bool first = true;
    for (const auto& [id, n] : l.per_client_counts) {
      out << (first ? "" : ";") << id << '=' << n;
      first = false;
    }
    out << '\n';
  }
  return out.str();
}

double round_to_round_variance(std::span<const RoundLog> logs, Phase phase, double tail_fraction) {
  std::vector<const RoundLog*> sel;
  std::size_t last = 0;
  for (const auto& l : logs) {
    if (l.phase == phase) {
      sel.push_back(&l);
      last = std::max(last, l.round);
    }
  }
  std::sort(sel.begin(), sel.end(), [](auto* a, auto* b) { return a->round < b->round; });
  const double cutoff = static_cast<double>(last) * (1.0 - tail_fraction);
  std::vector<double> tail;
  for (auto* l : sel) {
    if (static_cast<double>(l->round) > cutoff) tail.push_back(l->global_eval_loss);
  }
  if (tail.size() < 3) throw EmptyInputError("round_to_round_variance: too few logged rounds");
  std::vector<double> diffs;
  for (std::size_t i = 1; i < tail.size(); ++i) diffs.push_back(tail[i] - tail[i - 1]);
  const double mean = std::accumulate(diffs.begin(), diffs.end(), 0.0) / static_cast<double>(diffs.size());
  double var = 0.0;
  for (double d : diffs) var += (d - mean) * (d - mean);
  return var / static_cast<double>(diffs.size());
}

std::string format_report(const std::string& title, const ClassReport& report) {
  std::ostringstream out;
  out << title << '\n';
  out << std::left << std::setw(8) << "Data" << std::setw(11) << "Precision" << std::setw(8)
      << "Recall" << std::setw(10) << "F1 Score" << "Confusion Matrix\n";
  auto line = [&](const char* name, const ClassMetrics& c) {
    out << std::left << std::setw(8) << name;
    if (c.present) {
      out << std::fixed << std::setprecision(2) << std::setw(11) << c.precision << std::setw(8)
          << c.recall << std::setw(10) << c.f1;
    } else {
      out << std::setw(11) << "--" << std::setw(8) << "--" << std::setw(10) << "--";
    }
    out << '[' << c.confusion_row[0] << ',' << c.confusion_row[1] << "]\n";
  };
  line("Benign", report.benign);
  line("Attack", report.attack);
  out << "Accuracy " << std::fixed << std::setprecision(4) << report.accuracy << " over "
      << report.total << " rows\n";
  return out.str();
}

}  // namespace fedids
