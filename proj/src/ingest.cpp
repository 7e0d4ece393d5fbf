#include "fedids/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>

namespace fedids {

namespace {

const std::vector<std::string> kCicColumns = {
    "Dst Port", "Protocol", "Timestamp", "Flow Duration", "Tot Fwd Pkts",
    "Tot Bwd Pkts", "TotLen Fwd Pkts", "TotLen Bwd Pkts", "Fwd Pkt Len Max",
    "Fwd Pkt Len Min", "Fwd Pkt Len Mean", "Fwd Pkt Len Std", "Bwd Pkt Len Max",
    "Bwd Pkt Len Min", "Bwd Pkt Len Mean", "Bwd Pkt Len Std", "Flow Byts/s",
    "Flow Pkts/s", "Flow IAT Mean", "Flow IAT Std", "Flow IAT Max", "Flow IAT Min",
    "Fwd IAT Tot", "Fwd IAT Mean", "Fwd IAT Std", "Fwd IAT Max", "Fwd IAT Min",
    "Bwd IAT Tot", "Bwd IAT Mean", "Bwd IAT Std", "Bwd IAT Max", "Bwd IAT Min",
    "Fwd PSH Flags", "Bwd PSH Flags", "Fwd URG Flags", "Bwd URG Flags",
    "Fwd Header Len", "Bwd Header Len", "Fwd Pkts/s", "Bwd Pkts/s", "Pkt Len Min",
    "Pkt Len Max", "Pkt Len Mean", "Pkt Len Std", "Pkt Len Var", "FIN Flag Cnt",
    "SYN Flag Cnt", "RST Flag Cnt", "PSH Flag Cnt", "ACK Flag Cnt", "URG Flag Cnt",
    "CWE Flag Count", "ECE Flag Cnt", "Down/Up Ratio", "Pkt Size Avg",
    "Fwd Seg Size Avg", "Bwd Seg Size Avg", "Fwd Byts/b Avg", "Fwd Pkts/b Avg",
    "Fwd Blk Rate Avg", "Bwd Byts/b Avg", "Bwd Pkts/b Avg", "Bwd Blk Rate Avg",
    "Subflow Fwd Pkts", "Subflow Fwd Byts", "Subflow Bwd Pkts", "Subflow Bwd Byts",
    "Init Fwd Win Byts", "Init Bwd Win Byts", "Fwd Act Data Pkts", "Fwd Seg Size Min",
    "Active Mean", "Active Std", "Active Max", "Active Min", "Idle Mean", "Idle Std",
    "Idle Max", "Idle Min", "Label"};

const std::vector<std::string> kCicDropped = {"Dst Port", "Timestamp", "Flow Byts/s",
                                              "Flow Pkts/s", "Label"};

// CIC-IDS2017 (long) spellings -> CIC-IDS2018 (short) canonical names.
// Keys are already normalised.
const std::unordered_map<std::string, std::string>& alias_table() {
  static const std::unordered_map<std::string, std::string> table = {
      {"destination port", "Dst Port"},
      {"total fwd packets", "Tot Fwd Pkts"},
      {"total backward packets", "Tot Bwd Pkts"},
      {"total length of fwd packets", "TotLen Fwd Pkts"},
      {"total length of bwd packets", "TotLen Bwd Pkts"},
      {"fwd packet length max", "Fwd Pkt Len Max"},
      {"fwd packet length min", "Fwd Pkt Len Min"},
      {"fwd packet length mean", "Fwd Pkt Len Mean"},
      {"fwd packet length std", "Fwd Pkt Len Std"},
      {"bwd packet length max", "Bwd Pkt Len Max"},
      {"bwd packet length min", "Bwd Pkt Len Min"},
      {"bwd packet length mean", "Bwd Pkt Len Mean"},
      {"bwd packet length std", "Bwd Pkt Len Std"},
      {"flow bytes/s", "Flow Byts/s"},
      {"flow packets/s", "Flow Pkts/s"},
      {"fwd iat total", "Fwd IAT Tot"},
      {"bwd iat total", "Bwd IAT Tot"},
      {"fwd header length", "Fwd Header Len"},
      {"bwd header length", "Bwd Header Len"},
      {"fwd packets/s", "Fwd Pkts/s"},
      {"bwd packets/s", "Bwd Pkts/s"},
      {"min packet length", "Pkt Len Min"},
      {"max packet length", "Pkt Len Max"},
      {"packet length mean", "Pkt Len Mean"},
      {"packet length std", "Pkt Len Std"},
      {"packet length variance", "Pkt Len Var"},
      {"fin flag count", "FIN Flag Cnt"},
      {"syn flag count", "SYN Flag Cnt"},
      {"rst flag count", "RST Flag Cnt"},
      {"psh flag count", "PSH Flag Cnt"},
      {"ack flag count", "ACK Flag Cnt"},
      {"urg flag count", "URG Flag Cnt"},
      {"ece flag count", "ECE Flag Cnt"},
      {"average packet size", "Pkt Size Avg"},
      {"avg fwd segment size", "Fwd Seg Size Avg"},
      {"avg bwd segment size", "Bwd Seg Size Avg"},
      {"fwd avg bytes/bulk", "Fwd Byts/b Avg"},
      {"fwd avg packets/bulk", "Fwd Pkts/b Avg"},
      {"fwd avg bulk rate", "Fwd Blk Rate Avg"},
      {"bwd avg bytes/bulk", "Bwd Byts/b Avg"},
      {"bwd avg packets/bulk", "Bwd Pkts/b Avg"},
      {"bwd avg bulk rate", "Bwd Blk Rate Avg"},
      {"subflow fwd packets", "Subflow Fwd Pkts"},
      {"subflow fwd bytes", "Subflow Fwd Byts"},
      {"subflow bwd packets", "Subflow Bwd Pkts"},
      {"subflow bwd bytes", "Subflow Bwd Byts"},
      {"init win bytes forward", "Init Fwd Win Byts"},
      {"init win bytes backward", "Init Bwd Win Byts"},
      {"act data pkt fwd", "Fwd Act Data Pkts"},
      {"min seg size forward", "Fwd Seg Size Min"},
  };
  return table;
}

std::string normalise(const std::string& raw) {
  std::string out;
  bool pending_space = false;
  for (char c : raw) {
    if (c == '_' || std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(std::move(cell));
  return cells;
}

enum class CellStatus { Ok, NonFinite, Unparseable };

CellStatus parse_cell(const std::string& raw, double& out) {
  std::string s = trim(raw);
  if (!s.empty() && s.front() == '+') s.erase(0, 1);
  if (s.empty()) return CellStatus::Unparseable;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  if (ec == std::errc::result_out_of_range) return CellStatus::NonFinite;
  if (ec != std::errc() || ptr != end) return CellStatus::Unparseable;
  return std::isfinite(out) ? CellStatus::Ok : CellStatus::NonFinite;
}

}  // namespace

std::vector<std::string> FeatureSchema::feature_names() const {
  std::vector<std::string> out;
  for (const auto& c : column_names) {
    if (std::find(dropped_columns.begin(), dropped_columns.end(), c) == dropped_columns.end()) {
      out.push_back(c);
    }
  }
  return out;
}

const FeatureSchema& FeatureSchema::cic_flowmeter() {
  static const FeatureSchema schema{kCicColumns, kCicDropped};
  return schema;
}

FeatureSchema FeatureSchema::anonymous(std::size_t features) {
  FeatureSchema s;
  for (std::size_t i = 0; i < features; ++i) s.column_names.push_back("f" + std::to_string(i));
  return s;
}

std::string canonical_column_name(const std::string& raw) {
  static const std::unordered_map<std::string, std::string> lookup = [] {
    std::unordered_map<std::string, std::string> m(alias_table());
    for (const auto& c : kCicColumns) m.emplace(normalise(c), c);
    return m;
  }();
  const std::string key = normalise(raw);
  auto it = lookup.find(key);
  return it == lookup.end() ? key : it->second;
}

FlowDataset FlowDataset::subset(std::span<const std::size_t> indices, std::string new_name) const {
  FlowDataset out;
  out.features = features.select_rows(indices);
  if (labels) {
    std::vector<int> l;
    l.reserve(indices.size());
    for (auto i : indices) l.push_back((*labels)[i]);
    out.labels = std::move(l);
  }
  out.feature_names = feature_names;
  out.name = new_name.empty() ? name : std::move(new_name);
  return out;
}

std::vector<std::size_t> FlowDataset::rows_of_class(int cls) const {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < rows(); ++r) {
    if (label(r) == cls) out.push_back(r);
  }
  return out;
}

FlowDataset concat(std::span<const FlowDataset> parts, std::string name) {
  FlowDataset out;
  out.name = std::move(name);
  if (parts.empty()) return out;
  const bool all_labeled =
      std::all_of(parts.begin(), parts.end(), [](const FlowDataset& d) { return d.labeled(); });
  std::vector<int> labels;
  out.feature_names = parts.front().feature_names;
  out.features = Matrix(0, parts.front().width());
  for (const auto& p : parts) {
    require_shape(p.width() == out.features.cols(), "concat: datasets differ in width");
    for (std::size_t r = 0; r < p.rows(); ++r) {
      out.features.append_row(p.features.row(r));
      if (all_labeled) labels.push_back(p.label(r));
    }
  }
  if (all_labeled) out.labels = std::move(labels);
  return out;
}

int map_label(const std::string& raw) {
  return normalise(raw) == "benign" ? 0 : 1;
}

LoadResult parse_flow_csv(const std::string& text, const FeatureSchema& schema, std::string name) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) {
    throw EmptyInputError("flow CSV '" + name + "' is empty");
  }
  const auto header = split_csv_line(line);
  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < header.size(); ++i) {
    position.emplace(canonical_column_name(header[i]), i);
  }

  // Schema columns resolve to canonical spellings too, so anonymous schemas work.
  const auto features = schema.feature_names();
  std::vector<std::size_t> source;
  std::vector<std::string> missing;
  for (const auto& f : features) {
    auto it = position.find(canonical_column_name(f));
    if (it == position.end()) {
      missing.push_back(f);
    } else {
      source.push_back(it->second);
    }
  }
  if (!missing.empty()) {
    std::string msg = "flow CSV '" + name + "' is missing required column(s):";
    for (const auto& m : missing) msg += " '" + m + "'";
    throw SchemaError(msg);
  }
  std::optional<std::size_t> label_pos;
  if (auto it = position.find(canonical_column_name(kLabelColumn)); it != position.end()) {
    label_pos = it->second;
  }

  LoadResult result;
  result.dataset.name = std::move(name);
  result.dataset.feature_names = features;
  result.dataset.features = Matrix(0, features.size());
  std::vector<int> labels;
  std::vector<double> row(features.size());
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++result.stats.rows_read;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      ++result.stats.dropped_unparseable;
      continue;
    }
    CellStatus worst = CellStatus::Ok;
    for (std::size_t j = 0; j < source.size(); ++j) {
      const auto st = parse_cell(cells[source[j]], row[j]);
      if (st == CellStatus::Unparseable) {
        worst = st;
        break;
      }
      if (st == CellStatus::NonFinite) worst = st;
    }
    if (worst == CellStatus::Unparseable) {
      ++result.stats.dropped_unparseable;
      continue;
    }
    if (worst == CellStatus::NonFinite) {
      ++result.stats.dropped_non_finite;
      continue;
    }
    result.dataset.features.append_row(row);
    if (label_pos) labels.push_back(map_label(cells[*label_pos]));
  }
  if (label_pos) result.dataset.labels = std::move(labels);
  return result;
}

LoadResult load_flow_csv(const std::filesystem::path& path, const FeatureSchema& schema) {
  std::ifstream in(path);
  if (!in) throw FilesystemError("cannot open flow CSV " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_flow_csv(buf.str(), schema, path.stem().string());
}

SplitResult split(const FlowDataset& dataset, const SplitSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  auto benign = dataset.rows_of_class(0);
  auto attack = dataset.rows_of_class(1);

  const std::size_t need_benign = spec.ae_train_benign + spec.clf_train_benign + spec.test_benign;
  const std::size_t need_attack = spec.clf_train_attack + spec.test_attack;
  if (!dataset.labeled() && (spec.clf_train_benign > 0 || need_attack > 0)) {
    throw CapacityError("dataset '" + dataset.name +
                        "' is unlabeled: only autoencoder and benign test rows can be drawn");
  }
  if (need_benign > benign.size()) {
    throw CapacityError("dataset '" + dataset.name + "' has " + std::to_string(benign.size()) +
                        " benign rows, split needs " + std::to_string(need_benign));
  }
  if (need_attack > attack.size()) {
    throw CapacityError("dataset '" + dataset.name + "' has " + std::to_string(attack.size()) +
                        " attack rows, split needs " + std::to_string(need_attack));
  }
  std::shuffle(benign.begin(), benign.end(), rng);
  std::shuffle(attack.begin(), attack.end(), rng);

  auto take = [](std::vector<std::size_t>& from, std::size_t& cursor, std::size_t n,
                 std::vector<std::size_t>& into) {
    into.insert(into.end(), from.begin() + static_cast<std::ptrdiff_t>(cursor),
                from.begin() + static_cast<std::ptrdiff_t>(cursor + n));
    cursor += n;
  };
  std::size_t bc = 0;
  std::size_t ac = 0;
  std::vector<std::size_t> ae, clf, test;
  take(benign, bc, spec.ae_train_benign, ae);
  take(benign, bc, spec.clf_train_benign, clf);
  take(attack, ac, spec.clf_train_attack, clf);
  take(benign, bc, spec.test_benign, test);
  take(attack, ac, spec.test_attack, test);
  std::sort(ae.begin(), ae.end());
  std::sort(clf.begin(), clf.end());
  std::sort(test.begin(), test.end());

  SplitResult out{dataset.subset(ae, dataset.name + "/ae_train"),
                  dataset.subset(clf, dataset.name + "/clf_train"),
                  dataset.subset(test, dataset.name + "/test")};
  // Unlabeled test rows are scored as benign.
  if (!dataset.labeled()) out.test.labels = std::vector<int>(test.size(), 0);
  return out;
}

}  // namespace fedids
