#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "fedids/errors.hpp"
#include "fedids/ingest.hpp"
#include "fedids/nn.hpp"

using namespace fedids;

namespace {

std::string fixture(const char* name) { return std::string(FEDIDS_FIXTURES) + "/" + name; }

FlowDataset toy(std::size_t benign, std::size_t attack) {
  FlowDataset d;
  d.name = "toy";
  d.features = Matrix(benign + attack, 2);
  std::vector<int> labels;
  for (std::size_t r = 0; r < benign + attack; ++r) {
    d.features(r, 0) = static_cast<double>(r);
    labels.push_back(r < benign ? 0 : 1);
  }
  d.labels = labels;
  d.feature_names = {"a", "b"};
  return d;
}

// Mann-Whitney AUC of scores for positives vs negatives.
double auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  double wins = 0;
  for (double p : pos) {
    for (double n : neg) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  }
  return wins / static_cast<double>(pos.size() * neg.size());
}

}  // namespace

TEST_CASE("CIC schema drops exactly five columns") {
  const auto& s = FeatureSchema::cic_flowmeter();
  CHECK(s.column_names.size() == 80);
  CHECK(s.feature_count() == 75);
  CHECK(s.feature_names().size() == 75);
  const std::vector<std::string> dropped{"Dst Port", "Timestamp", "Flow Byts/s", "Flow Pkts/s", "Label"};
  CHECK(s.dropped_columns == dropped);
  for (const auto& d : dropped) {
    const auto names = s.feature_names();
    CHECK(std::find(names.begin(), names.end(), d) == names.end());
  }
}

TEST_CASE("label mapping") {
  CHECK(map_label("Benign") == 0);
  CHECK(map_label(" BENIGN ") == 0);
  CHECK(map_label("benign") == 0);
  CHECK(map_label("DoS Hulk") == 1);
  CHECK(map_label("Infilteration") == 1);
  CHECK(map_label("") == 1);
}

TEST_CASE("header aliases") {
  CHECK(canonical_column_name(" Total Fwd Packets") == "Tot Fwd Pkts");
  CHECK(canonical_column_name("Init_Win_bytes_forward") == "Init Fwd Win Byts");
  CHECK(canonical_column_name("flow  duration") == "Flow Duration");
  CHECK(canonical_column_name("Dst Port") == "Dst Port");
}

TEST_CASE("load: three rows, labels, width 75") {
  const auto r = load_flow_csv(fixture("cic2018_three_rows.csv"));
  CHECK(r.dataset.width() == 75);
  CHECK(r.dataset.rows() == 3);
  CHECK(*r.dataset.labels == std::vector<int>{0, 1, 0});
  CHECK(r.dataset.feature_names.front() == "Protocol");
  CHECK(r.dataset.features(0, 0) == 6);
  CHECK(r.dataset.features(0, 1) == doctest::Approx(10 + 3 * 0.5));  // Flow Duration, column 3
}

TEST_CASE("load: non-finite and unparseable rows are dropped and counted") {
  const auto r = load_flow_csv(fixture("cic2018_non_finite.csv"));
  CHECK(r.stats.rows_read == 5);
  CHECK(r.stats.dropped_non_finite == 1);
  CHECK(r.stats.dropped_unparseable == 1);
  CHECK(r.dataset.rows() == 3);
  CHECK(*r.dataset.labels == std::vector<int>{0, 1, 0});
  for (double v : r.dataset.features.data()) CHECK(std::isfinite(v));
}

TEST_CASE("load: CIC-IDS2017 spellings map onto the same features") {
  const auto a = load_flow_csv(fixture("cic2017_traffic_labelling.csv"));
  const auto b = load_flow_csv(fixture("cic2018_three_rows.csv"));
  CHECK(a.dataset.width() == 75);
  CHECK(a.dataset.rows() == 4);
  CHECK(*a.dataset.labels == std::vector<int>{0, 1, 0, 1});
  CHECK(a.dataset.feature_names == b.dataset.feature_names);
  // Row 0 of both fixtures is generated from the same seed.
  for (std::size_t j = 0; j < 75; ++j) CHECK(a.dataset.features(0, j) == b.dataset.features(0, j));
}

TEST_CASE("load: missing label column gives an unlabeled dataset") {
  const auto r = load_flow_csv(fixture("unlabeled_benign.csv"));
  CHECK_FALSE(r.dataset.labeled());
  CHECK(r.dataset.rows() == 5);
  CHECK(r.dataset.label(2) == 0);
}

TEST_CASE("load: errors") {
  CHECK_THROWS_AS(load_flow_csv(fixture("empty.csv")), EmptyInputError);
  try {
    load_flow_csv(fixture("missing_column.csv"));
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("Flow IAT Std") != std::string::npos);
  }
  CHECK_THROWS_AS(load_flow_csv(fixture("no_such_file.csv")), FilesystemError);
}

TEST_CASE("load is idempotent") {
  const auto a = load_flow_csv(fixture("cic2018_non_finite.csv"));
  const auto b = load_flow_csv(fixture("cic2018_non_finite.csv"));
  CHECK(a.dataset == b.dataset);
}

TEST_CASE("split: toy counts and disjointness") {
  const auto d = toy(4, 2);
  const auto s = split(d, {2, 1, 1, 1, 1, 9});
  CHECK(s.ae_train.rows() == 2);
  CHECK(s.clf_train.rows() == 2);
  CHECK(s.test.rows() == 2);
  std::set<double> seen;
  for (const auto* part : {&s.ae_train, &s.clf_train, &s.test}) {
    for (std::size_t r = 0; r < part->rows(); ++r) CHECK(seen.insert(part->features(r, 0)).second);
  }
  for (std::size_t r = 0; r < 2; ++r) CHECK(s.ae_train.label(r) == 0);
  CHECK(std::count(s.clf_train.labels->begin(), s.clf_train.labels->end(), 1) == 1);
  CHECK(std::count(s.test.labels->begin(), s.test.labels->end(), 1) == 1);
}

TEST_CASE("split: determinism and seed sensitivity") {
  const auto d = toy(200, 100);
  const SplitSpec spec{50, 40, 40, 30, 30, 3};
  const auto a = split(d, spec);
  const auto b = split(d, spec);
  CHECK(a.ae_train == b.ae_train);
  CHECK(a.clf_train == b.clf_train);
  CHECK(a.test == b.test);
  auto other = spec;
  other.seed = 4;
  CHECK_FALSE(split(d, other).ae_train == a.ae_train);
}

TEST_CASE("split: property sweep keeps parts disjoint and sized") {
  std::mt19937_64 rng(99);
  for (int t = 0; t < 50; ++t) {
    const std::size_t nb = 20 + rng() % 50, na = 10 + rng() % 30;
    const auto d = toy(nb, na);
    SplitSpec s;
    s.ae_train_benign = rng() % (nb / 2);
    s.clf_train_benign = rng() % (nb / 4);
    s.test_benign = rng() % (nb / 4);
    s.clf_train_attack = rng() % (na / 2);
    s.test_attack = rng() % (na / 2);
    s.seed = rng();
    const auto out = split(d, s);
    CHECK(out.ae_train.rows() == s.ae_train_benign);
    CHECK(out.clf_train.rows() == s.clf_train_benign + s.clf_train_attack);
    CHECK(out.test.rows() == s.test_benign + s.test_attack);
    std::set<double> seen;
    for (const auto* part : {&out.ae_train, &out.clf_train, &out.test}) {
      for (std::size_t r = 0; r < part->rows(); ++r) CHECK(seen.insert(part->features(r, 0)).second);
    }
  }
}

TEST_CASE("split: capacity errors name the class") {
  const auto d = toy(4, 2);
  try {
    split(d, {3, 1, 1, 1, 1, 0});
    FAIL("expected CapacityError");
  } catch (const CapacityError& e) {
    CHECK(std::string(e.what()).find("benign") != std::string::npos);
  }
  try {
    split(d, {1, 1, 2, 1, 1, 0});
    FAIL("expected CapacityError");
  } catch (const CapacityError& e) {
    CHECK(std::string(e.what()).find("attack") != std::string::npos);
  }
}

TEST_CASE("split: unlabeled data only feeds the autoencoder and benign test") {
  auto d = toy(10, 0);
  d.labels.reset();
  const auto s = split(d, {6, 0, 0, 4, 0, 1});
  CHECK_FALSE(s.ae_train.labeled());
  CHECK(*s.test.labels == std::vector<int>(4, 0));
  CHECK_THROWS_AS(split(d, {6, 1, 0, 0, 0, 1}), CapacityError);
}

TEST_CASE("split spec accepts large counts") {
  // CIC-IDS2017 row of the splits table; only the spec is exercised here.
  SplitSpec s{1136538, 61000, 60400, 8000, 8000, 0};
  CHECK(s.ae_train_benign + s.clf_train_benign + s.test_benign == 1205538);
  CHECK(s.clf_train_attack + s.test_attack == 68400);
}

TEST_CASE("synth: zero attack rows gives all-benign labels") {
  SynthClientSpec c{"a", 50, 0, {GaussianComponent{}}, {}, 1.0, true};
  const auto d = synth_client(c, 1);
  CHECK(d.width() == 75);
  CHECK(std::all_of(d.labels->begin(), d.labels->end(), [](int l) { return l == 0; }));
}

TEST_CASE("synth: client means differ by the configured offset") {
  const std::size_t n = 10000;
  const double sigma = 1.5;
  GaussianComponent ca, cb;
  ca.mean = FeatureVector::constant(0.0);
  cb.mean = FeatureVector{0.0, {{0, 10, 4.0}}, std::nullopt};
  ca.stddev = cb.stddev = FeatureVector::constant(sigma);
  std::vector<SynthClientSpec> clients{{"a", n, 0, {ca}, {}, 1.0, true}, {"b", n, 0, {cb}, {}, 1.0, true}};
  const auto ds = synth_generate(clients, 5, 20);
  const double tol = 3 * sigma / std::sqrt(static_cast<double>(n));
  for (std::size_t j = 0; j < 20; ++j) {
    double ma = 0, mb = 0;
    for (std::size_t r = 0; r < n; ++r) {
      ma += ds[0].features(r, j);
      mb += ds[1].features(r, j);
    }
    ma /= n;
    mb /= n;
    const double want = j < 10 ? 4.0 : 0.0;
    CHECK(std::abs(ma) < tol);
    CHECK(std::abs(mb - want) < tol);
  }
}

TEST_CASE("synth: full covariance and validation") {
  GaussianComponent g;
  g.covariance = std::vector<std::vector<double>>{{1, 0.5}, {0.5, 1}};
  SynthClientSpec c{"a", 20, 0, {g}, {}, 1.0, true};
  CHECK(synth_client(c, 2, 2).rows() == 20);
  c.components[0].covariance = std::vector<std::vector<double>>{{1, 2}, {2, 1}};
  CHECK_THROWS_AS(synth_client(c, 2, 2), ConfigError);
  c.components[0].covariance.reset();
  c.components[0].stddev = FeatureVector::constant(0.0);
  CHECK_THROWS_AS(synth_client(c, 2, 2), ConfigError);
}

TEST_CASE("synth: same seed same data, unlabeled clients have no labels") {
  SynthClientSpec c{"a", 30, 5, {GaussianComponent{}}, FeatureVector::constant(1.0), 1.0, true};
  CHECK(synth_client(c, 3) == synth_client(c, 3));
  c.labeled = false;
  c.attack_rows = 0;
  CHECK_FALSE(synth_client(c, 3).labeled());
}

namespace {

// Trains a small classifier on half of the rows and returns the held-out AUC.
double holdout_auc(const FlowDataset& d) {
  std::vector<std::size_t> train, test;
  for (std::size_t r = 0; r < d.rows(); ++r) (r % 2 ? test : train).push_back(r);
  const auto tr = d.subset(train);
  auto net = make_classifier(3, {d.width(), 8, 2});
  Optimizer opt({OptimizerKind::Adam, 0.01});
  const auto targets = one_hot(*tr.labels);
  std::vector<std::size_t> rows(tr.rows());
  std::iota(rows.begin(), rows.end(), 0);
  for (int epoch = 0; epoch < 20; ++epoch) {
    for (std::size_t b = 0; b < rows.size(); b += 50) {
      std::span<const std::size_t> batch(rows.data() + b, std::min<std::size_t>(50, rows.size() - b));
      train_batch(net, tr.features, targets, batch, LossKind::CrossEntropy, opt);
    }
  }
  std::vector<double> pos, neg;
  for (auto r : test) (d.label(r) ? pos : neg).push_back(forward(net, d.features.row(r))[1]);
  return auc(pos, neg);
}

}  // namespace

TEST_CASE("synth: attack offset controls separability") {
  GaussianComponent g;
  SynthClientSpec c{"a", 2000, 2000, {g}, FeatureVector::constant(0.0), 1.0, true};
  const double flat = holdout_auc(synth_client(c, 8, 10));
  CHECK(std::abs(flat - 0.5) <= 0.05);
  c.attack_offset = FeatureVector{0.0, {{0, 3, 2.0}}, std::nullopt};
  CHECK(holdout_auc(synth_client(c, 8, 10)) > 0.95);
}
