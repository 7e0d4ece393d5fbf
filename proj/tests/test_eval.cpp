#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "doctest.h"
#include "fedids/errors.hpp"
#include "fedids/eval.hpp"

using namespace fedids;

namespace {

struct Printed {
  double precision, recall, f1;
};

void check_class(const ClassMetrics& c, Printed p, double tol = 0.005) {
  CHECK(std::abs(c.precision - p.precision) <= tol);
  CHECK(std::abs(c.recall - p.recall) <= tol);
  CHECK(std::abs(c.f1 - p.f1) <= tol);
}

// Independent F1 for attack at a threshold, by direct counting.
double f1_at(const std::vector<double>& benign, const std::vector<double>& attack, double t) {
  double tp = 0, fp = 0, fn = 0;
  for (double v : attack) (v > t ? tp : fn) += 1;
  for (double v : benign) fp += v > t ? 1 : 0;
  if (tp == 0) return 0.0;
  const double p = tp / (tp + fp), r = tp / (tp + fn);
  return 2 * p * r / (p + r);
}

}  // namespace

TEST_CASE("confusion counts") {
  const std::vector<int> preds{1, 0, 1, 1, 0, 0};
  const std::vector<int> labels{1, 1, 0, 1, 0, 0};
  const auto m = confusion(preds, labels);
  CHECK(m == ConfusionMatrix{2, 1, 2, 1});
  CHECK(m.total() == 6);
  CHECK_THROWS_AS(confusion(std::vector<int>{1}, std::vector<int>{1, 0}), ShapeError);
  CHECK_THROWS_AS(confusion(std::vector<int>{2}, std::vector<int>{1}), ConfigError);
}

TEST_CASE("confusion matches a brute-force tally") {
  std::mt19937_64 rng(5);
  std::vector<int> p(1000), l(1000);
  for (auto& v : p) v = static_cast<int>(rng() % 2);
  for (auto& v : l) v = static_cast<int>(rng() % 2);
  std::uint64_t cells[2][2] = {};
  for (std::size_t i = 0; i < p.size(); ++i) cells[l[i]][p[i]]++;
  const auto m = confusion(p, l);
  CHECK(m.tp == cells[1][1]);
  CHECK(m.fn == cells[1][0]);
  CHECK(m.fp == cells[0][1]);
  CHECK(m.tn == cells[0][0]);
  CHECK(m == confusion_from_rows({cells[0][0], cells[0][1]}, {cells[1][0], cells[1][1]}));
}

TEST_CASE("published confusion matrix: weak central model") {
  const auto r = class_report(confusion_from_rows({16985, 7015}, {7509, 16500}));
  check_class(r.benign, {0.69, 0.71, 0.70});
  CHECK(std::abs(r.attack.precision - 0.70) <= 0.005);
  CHECK(std::abs(r.attack.recall - 0.69) <= 0.005);
  // The published attack F1 is 0.68, but these counts give 0.694.
  CHECK(r.attack.f1 == doctest::Approx(0.6944).epsilon(1e-3));
  CHECK(r.benign.confusion_row == std::array<std::uint64_t, 2>{16985, 7015});
  CHECK(r.attack.confusion_row == std::array<std::uint64_t, 2>{7509, 16500});
}

TEST_CASE("published confusion matrix: pooled central model") {
  const auto r = class_report(confusion_from_rows({23831, 169}, {119, 23881}));
  check_class(r.benign, {1.00, 0.99, 0.99});
  check_class(r.attack, {0.99, 1.00, 0.99});
}

TEST_CASE("published federated confusion matrices reproduce") {
  struct Row {
    std::array<std::uint64_t, 2> b, a;
    Printed pb, pa;
  };
  const std::vector<Row> rows{
      {{12674, 11326}, {6587, 17413}, {0.66, 0.53, 0.59}, {0.61, 0.73, 0.66}},
      {{7352, 16648}, {11506, 12494}, {0.39, 0.31, 0.34}, {0.43, 0.52, 0.47}},
      {{15330, 8670}, {2977, 21023}, {0.84, 0.64, 0.72}, {0.71, 0.88, 0.78}},
      {{16778, 7222}, {9153, 14847}, {0.65, 0.70, 0.67}, {0.67, 0.62, 0.64}},
      {{17327, 6673}, {10729, 13271}, {0.62, 0.72, 0.67}, {0.67, 0.55, 0.60}},
      {{19138, 4862}, {1574, 22426}, {0.92, 0.80, 0.86}, {0.82, 0.93, 0.87}},
      {{20935, 3065}, {1303, 22697}, {0.94, 0.87, 0.91}, {0.88, 0.95, 0.91}},
  };
  for (const auto& row : rows) {
    const auto r = class_report(confusion_from_rows(row.b, row.a));
    check_class(r.benign, row.pb);
    check_class(r.attack, row.pa);
  }
}

TEST_CASE("perfect predictor") {
  const auto r = class_report(ConfusionMatrix{40, 0, 60, 0});
  for (const auto* c : {&r.benign, &r.attack}) {
    CHECK(c->precision == 1.0);
    CHECK(c->recall == 1.0);
    CHECK(c->f1 == 1.0);
    CHECK_FALSE(c->zero_division);
  }
  CHECK(r.accuracy == 1.0);
}

TEST_CASE("zero division and absent class") {
  // No attack rows and nothing flagged.
  const auto r = class_report(ConfusionMatrix{0, 0, 10, 0});
  CHECK_FALSE(r.attack.present);
  CHECK(r.attack.zero_division);
  CHECK(r.attack.f1 == 0.0);
  CHECK(r.benign.present);
  CHECK(r.benign.f1 == 1.0);
  const auto text = format_report("t", r);
  CHECK(text.find("Attack  --") != std::string::npos);
  CHECK(text.find("Benign  1.00") != std::string::npos);

  // Attack rows present but never predicted: precision undefined.
  const auto q = class_report(ConfusionMatrix{0, 0, 5, 5});
  CHECK(q.attack.present);
  CHECK(q.attack.zero_division);
  CHECK(q.attack.precision == 0.0);
  CHECK_THROWS_AS(class_report(ConfusionMatrix{}), EmptyInputError);
}

TEST_CASE("swapping classes swaps the per-class metrics") {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 200; ++t) {
    const ConfusionMatrix m{1 + rng() % 500, 1 + rng() % 500, 1 + rng() % 500, 1 + rng() % 500};
    const auto a = class_report(m);
    const auto b = class_report(swap_classes(m));
    CHECK(a.attack.precision == b.benign.precision);
    CHECK(a.attack.recall == b.benign.recall);
    CHECK(a.benign.f1 == b.attack.f1);
    CHECK(a.accuracy == b.accuracy);
    CHECK(swap_classes(swap_classes(m)) == m);
  }
}

TEST_CASE("confusion is invariant under row permutation") {
  std::mt19937_64 rng(12);
  std::vector<int> p(300), l(300);
  for (auto& v : p) v = static_cast<int>(rng() % 2);
  for (auto& v : l) v = static_cast<int>(rng() % 2);
  const auto base = confusion(p, l);
  std::vector<std::size_t> idx(p.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (int t = 0; t < 5; ++t) {
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<int> p2, l2;
    for (auto i : idx) {
      p2.push_back(p[i]);
      l2.push_back(l[i]);
    }
    CHECK(confusion(p2, l2) == base);
  }
}

TEST_CASE("select_threshold separable and identical") {
  const std::vector<double> benign{0.1, 0.2, 0.3};
  const std::vector<double> attack{0.7, 0.8};
  const auto s = select_threshold(benign, attack);
  CHECK(s.f1 == 1.0);
  CHECK(s.threshold == doctest::Approx(0.5));
  CHECK(apply_threshold(benign, s.threshold) == std::vector<int>{0, 0, 0});
  CHECK(apply_threshold(attack, s.threshold) == std::vector<int>{1, 1});

  // Same losses on both sides: only "flag everything" helps, F1 = 2/3.
  const std::vector<double> same{0.4, 0.4, 0.4};
  const auto t = select_threshold(same, same);
  CHECK(t.f1 == doctest::Approx(2.0 / 3.0));
  CHECK(t.threshold < 0.4);

  CHECK_THROWS_AS(select_threshold(std::vector<double>{}, attack), ConfigError);
  CHECK_THROWS_AS(select_threshold(benign, std::vector<double>{}), ConfigError);
}

TEST_CASE("select_threshold matches a brute-force sweep") {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> nb(1.0, 0.6), na(2.0, 0.8);
  for (int t = 0; t < 25; ++t) {
    std::vector<double> benign(20 + rng() % 60), attack(5 + rng() % 60);
    // Rounded so ties appear.
    for (auto& v : benign) v = std::round(nb(rng) * 20) / 20;
    for (auto& v : attack) v = std::round(na(rng) * 20) / 20;
    std::vector<double> all(benign);
    all.insert(all.end(), attack.begin(), attack.end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    double best = f1_at(benign, attack, all.front() - 1.0);
    for (std::size_t i = 0; i + 1 < all.size(); ++i) {
      best = std::max(best, f1_at(benign, attack, (all[i] + all[i + 1]) / 2));
    }
    const auto s = select_threshold(benign, attack);
    CHECK(s.f1 == doctest::Approx(best).epsilon(1e-12));
    CHECK(f1_at(benign, attack, s.threshold) == doctest::Approx(s.f1).epsilon(1e-12));
    // No hand-picked threshold does better.
    for (double h : {0.0, 1.0, 1.5, 2.0, 3.0}) CHECK(f1_at(benign, attack, h) <= s.f1 + 1e-12);
  }
}

TEST_CASE("loss curve csv") {
  std::vector<RoundLog> logs(3);
  logs[0] = {20, Phase::Classifier, 0.25, {}};
  logs[1] = {10, Phase::Autoencoder, 0.5, {}};
  logs[2] = {10, Phase::Classifier, 0.125, {{"a", 3}, {"b", 4}}};
  CHECK(loss_curve_csv(logs) == "round,phase,loss\n10,AE,0.5\n10,CLF,0.125\n20,CLF,0.25\n");
  CHECK(round_log_csv(logs) ==
        "round,phase,loss,counts\n20,CLF,0.25,\n10,AE,0.5,\n10,CLF,0.125,a=3;b=4\n");

  const auto path = std::filesystem::temp_directory_path() / "fedids_loss_curve_test.csv";
  emit_loss_curve(logs, path);
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto body = ss.str();
  CHECK(body == loss_curve_csv(logs));
  const auto lines = std::count(body.begin(), body.end(), '\n');
  CHECK(lines == 4);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(emit_loss_curve(std::vector<RoundLog>{}, path), EmptyInputError);
}

TEST_CASE("round_to_round_variance") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<RoundLog> logs;
  for (std::size_t r = 1; r <= 40; ++r) {
    logs.push_back({r, Phase::Autoencoder, u(rng), {}});
    logs.push_back({r, Phase::Classifier, 100 + u(rng), {}});
  }
  // Oracle: rounds 21..40 of the AE phase.
  std::vector<double> d;
  for (std::size_t r = 21; r < 40; ++r) {
    d.push_back(logs[2 * r].global_eval_loss - logs[2 * (r - 1)].global_eval_loss);
  }
  double mean = 0;
  for (double x : d) mean += x;
  mean /= d.size();
  double var = 0;
  for (double x : d) var += (x - mean) * (x - mean);
  var /= d.size();
  CHECK(round_to_round_variance(logs, Phase::Autoencoder) == doctest::Approx(var).epsilon(1e-12));

  // A linear trend has zero variance of differences.
  std::vector<RoundLog> linear;
  for (std::size_t r = 1; r <= 10; ++r) linear.push_back({r, Phase::Classifier, 2.0 * r, {}});
  CHECK(round_to_round_variance(linear, Phase::Classifier) == doctest::Approx(0.0));
  CHECK_THROWS_AS(round_to_round_variance(linear, Phase::Autoencoder), EmptyInputError);
}

TEST_CASE("format_report layout") {
  const auto r = class_report(confusion_from_rows({23831, 169}, {119, 23881}));
  const auto text = format_report("Model 4", r);
  CHECK(text.rfind("Model 4\n", 0) == 0);
  CHECK(text.find("Benign  1.00       0.99    0.99      [23831,169]") != std::string::npos);
  CHECK(text.find("Attack  0.99       1.00    0.99      [119,23881]") != std::string::npos);
  CHECK(text.find("over 48000 rows") != std::string::npos);
}

TEST_CASE("format_double round trips") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5, 123456789.125}) {
    CHECK(std::stod(format_double(v)) == v);
  }
}
