#include "fedids/scaler.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "fedids/bytes.hpp"

namespace fedids {

std::size_t MinMaxScaler::init_retained_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < width(); ++i) n += (min_from_init[i] || max_from_init[i]) ? 1 : 0;
  return n;
}

bool MinMaxScaler::same_bounds(const MinMaxScaler& o) const {
  return feature_names == o.feature_names && mins == o.mins && maxs == o.maxs &&
         initialized_randomly == o.initialized_randomly && min_from_init == o.min_from_init &&
         max_from_init == o.max_from_init;
}

MinMaxScaler init_scaler(std::span<const std::string> feature_names, const ScalerInitConfig& init,
                         std::mt19937_64& rng) {
  if (feature_names.empty()) throw ConfigError("scaler needs at least one feature");
  const std::size_t n = feature_names.size();
  MinMaxScaler s;
  s.feature_names.assign(feature_names.begin(), feature_names.end());
  s.min_from_init.assign(n, 1);
  s.max_from_init.assign(n, 1);
  if (init.mode == ScalerInit::Sentinel) {
    s.mins.assign(n, std::numeric_limits<double>::infinity());
    s.maxs.assign(n, -std::numeric_limits<double>::infinity());
    return s;
  }
  if (!std::isfinite(init.low) || !std::isfinite(init.high) || !(init.low < init.high)) {
    throw ConfigError("random scaler init needs finite low < high");
  }
  s.initialized_randomly = true;
  std::uniform_real_distribution<double> dist(init.low, init.high);
  s.mins.resize(n);
  s.maxs.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = dist(rng);
    const double b = dist(rng);
    s.mins[i] = std::min(a, b);
    s.maxs[i] = std::max(a, b);
  }
  return s;
}

MinMaxScaler client_update(const MinMaxScaler& scaler, const Matrix& rows) {
  MinMaxScaler out = scaler;
  if (rows.empty()) return out;
  if (rows.cols() != scaler.width()) {
    throw SchemaError("client data has " + std::to_string(rows.cols()) +
                      " features, scaler has " + std::to_string(scaler.width()));
  }
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    auto x = rows.row(r);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] < out.mins[i]) {
        out.mins[i] = x[i];
        out.min_from_init[i] = 0;
      }
      if (x[i] > out.maxs[i]) {
        out.maxs[i] = x[i];
        out.max_from_init[i] = 0;
      }
    }
  }
  return out;
}

MinMaxScaler client_update(const MinMaxScaler& scaler, const FlowDataset& local_data) {
  return client_update(scaler, local_data.features);
}

MinMaxScaler ring_pass(MinMaxScaler scaler, std::span<const std::string> order,
                       const ScalerVisit& visit) {
  auto log = scaler.visit_log;
  for (std::size_t step = 0; step < order.size(); ++step) {
    const auto& id = order[step];
    try {
      scaler = visit(id, scaler);
    } catch (const ProtocolError&) {
      throw;
    } catch (const std::exception& e) {
      throw ProtocolError("scaler ring step " + std::to_string(step + 1) + ": client '" + id +
                          "' unreachable: " + e.what());
    }
    log.push_back(id);
  }
  scaler.visit_log = std::move(log);
  return scaler;
}

MinMaxScaler ring_orchestrate(std::span<const std::string> client_ids,
                              std::span<const std::string> feature_names,
                              const ScalerInitConfig& init, std::mt19937_64& rng,
                              const ScalerVisit& visit) {
  if (client_ids.empty()) throw EmptyInputError("scaler ring needs at least one client");
  auto scaler = init_scaler(feature_names, init, rng);
  std::vector<std::string> pending(client_ids.begin(), client_ids.end());
  std::vector<std::string> order;
  while (!pending.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, pending.size() - 1);
    const auto i = pick(rng);
    order.push_back(pending[i]);
    pending.erase(pending.begin() + static_cast<std::ptrdiff_t>(i));
  }
  auto result = ring_pass(std::move(scaler), order, visit);
  if (result.visit_log.size() != client_ids.size()) {
    throw ProtocolError("scaler ring finished with unvisited clients");
  }
  return result;
}

std::vector<double> scale(const MinMaxScaler& scaler, std::span<const double> x, bool clamp) {
  if (x.size() != scaler.width()) {
    throw SchemaError("scale: input has " + std::to_string(x.size()) + " features, scaler has " +
                      std::to_string(scaler.width()));
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double range = scaler.maxs[i] - scaler.mins[i];
    double v = (range > 0.0 && std::isfinite(range)) ? (x[i] - scaler.mins[i]) / range : 0.0;
    if (clamp) v = std::clamp(v, 0.0, 1.0);
    out[i] = v;
  }
  return out;
}

Matrix scale(const MinMaxScaler& scaler, const Matrix& rows, bool clamp) {
  Matrix out(rows.rows(), rows.cols());
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    auto v = scale(scaler, rows.row(r), clamp);
    std::copy(v.begin(), v.end(), out.row(r).begin());
  }
  return out;
}

MinMaxScaler fit_local_scaler(const FlowDataset& data) {
  std::mt19937_64 unused(0);
  auto s = init_scaler(data.feature_names, {ScalerInit::Sentinel}, unused);
  return client_update(s, data);
}

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError("scaler file line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

}  // namespace

std::string serialize_scaler(const MinMaxScaler& s) {
  std::ostringstream out;
  out << "fedids-scaler 1\n";
  out << "random_init " << (s.initialized_randomly ? 1 : 0) << "\n";
  for (std::size_t i = 0; i < s.width(); ++i) {
    out << s.feature_names[i] << '\t' << format_double(s.mins[i]) << '\t'
        << format_double(s.maxs[i]) << '\t' << int(s.min_from_init[i]) << '\t'
        << int(s.max_from_init[i]) << '\n';
  }
  return out.str();
}

MinMaxScaler parse_scaler(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "fedids-scaler 1") {
    throw ParseError("scaler file line 1: expected 'fedids-scaler 1'");
  }
  MinMaxScaler s;
  if (!std::getline(in, line) || line.rfind("random_init ", 0) != 0) {
    throw ParseError("scaler file line 2: expected 'random_init <0|1>'");
  }
  s.initialized_randomly = line.substr(12) == "1";
  std::size_t lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find('\t', start)) != std::string::npos; start = pos + 1) {
      f.push_back(line.substr(start, pos - start));
    }
    f.push_back(line.substr(start));
    if (f.size() != 5) {
      throw ParseError("scaler file line " + std::to_string(lineno) + ": expected 5 tab-separated fields");
    }
    s.feature_names.push_back(f[0]);
    s.mins.push_back(parse_double(f[1], lineno));
    s.maxs.push_back(parse_double(f[2], lineno));
    s.min_from_init.push_back(f[3] == "1" ? 1 : 0);
    s.max_from_init.push_back(f[4] == "1" ? 1 : 0);
  }
  return s;
}

void save_scaler(const MinMaxScaler& scaler, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FilesystemError("cannot write scaler " + path.string());
  out << serialize_scaler(scaler);
  if (!out) throw FilesystemError("failed writing scaler " + path.string());
}

MinMaxScaler load_scaler(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FilesystemError("cannot open scaler " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scaler(buf.str());
}

std::vector<std::uint8_t> encode_scaler(const MinMaxScaler& s) {
  ByteWriter w;
  w.u8(s.initialized_randomly ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(s.width()));
  for (std::size_t i = 0; i < s.width(); ++i) {
    w.str16(s.feature_names[i]);
    w.f64(s.mins[i]);
    w.f64(s.maxs[i]);
    w.u8(static_cast<std::uint8_t>((s.min_from_init[i] ? 1 : 0) | (s.max_from_init[i] ? 2 : 0)));
  }
  return w.take();
}

MinMaxScaler decode_scaler(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  MinMaxScaler s;
  s.initialized_randomly = r.u8() != 0;
  const std::size_t n = r.u32();
  for (std::size_t i = 0; i < n; ++i) {
    s.feature_names.push_back(r.str16());
    s.mins.push_back(r.f64());
    s.maxs.push_back(r.f64());
    const auto flags = r.u8();
    s.min_from_init.push_back(flags & 1);
    s.max_from_init.push_back((flags >> 1) & 1);
  }
  if (!r.done()) throw ShapeError("trailing bytes after scaler payload");
  return s;
}

}  // namespace fedids
