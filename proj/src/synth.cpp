#include <cmath>
#include <random>

#include "fedids/ingest.hpp"

namespace fedids {

std::vector<double> FeatureVector::expand(std::size_t width) const {
  if (explicit_values) {
    if (explicit_values->size() != width) {
      throw ConfigError("feature vector has " + std::to_string(explicit_values->size()) +
                        " entries, expected " + std::to_string(width));
    }
    return *explicit_values;
  }
  std::vector<double> v(width, fill);
  for (const auto& r : ranges) {
    if (r.begin > r.end || r.end > width) {
      throw ConfigError("feature range [" + std::to_string(r.begin) + ", " +
                        std::to_string(r.end) + ") outside width " + std::to_string(width));
    }
    for (std::size_t i = r.begin; i < r.end; ++i) v[i] = r.value;
  }
  return v;
}

namespace {

// Lower-triangular Cholesky factor, row-major. Throws if not positive definite.
std::vector<double> cholesky(const std::vector<std::vector<double>>& cov, std::size_t n) {
  if (cov.size() != n) throw ConfigError("covariance must be " + std::to_string(n) + "x" + std::to_string(n));
  for (const auto& row : cov) {
    if (row.size() != n) throw ConfigError("covariance must be square");
  }
  std::vector<double> l(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      if (cov[i][j] != cov[j][i]) throw ConfigError("covariance is not symmetric");
      double sum = cov[i][j];
      for (std::size_t k = 0; k < j; ++k) sum -= l[i * n + k] * l[j * n + k];
      if (i == j) {
        if (!(sum > 0.0)) throw ConfigError("covariance is not positive definite");
        l[i * n + i] = std::sqrt(sum);
      } else {
        l[i * n + j] = sum / l[j * n + j];
      }
    }
  }
  return l;
}

struct PreparedComponent {
  std::vector<double> mean;
  std::vector<double> stddev;       // used when chol is empty
  std::vector<double> chol;
};

PreparedComponent prepare(const GaussianComponent& c, std::size_t width) {
  PreparedComponent p;
  p.mean = c.mean.expand(width);
  if (c.covariance) {
    p.chol = cholesky(*c.covariance, width);
  } else {
    p.stddev = c.stddev.expand(width);
    for (double s : p.stddev) {
      if (!(s > 0.0)) throw ConfigError("component stddev must be positive (covariance not positive definite)");
    }
  }
  return p;
}

void draw(const PreparedComponent& c, std::span<const double> offset, double scale,
          std::mt19937_64& rng, std::vector<double>& z, std::span<double> out) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t n = out.size();
  for (auto& v : z) v = normal(rng);
  for (std::size_t i = 0; i < n; ++i) {
    double noise;
    if (c.chol.empty()) {
      noise = c.stddev[i] * z[i];
    } else {
      noise = 0.0;
      for (std::size_t k = 0; k <= i; ++k) noise += c.chol[i * n + k] * z[k];
    }
    out[i] = c.mean[i] + offset[i] + scale * noise;
  }
}

}  // namespace

FlowDataset synth_client(const SynthClientSpec& client, std::uint64_t seed, std::size_t width) {
  if (client.components.empty()) throw ConfigError("synthetic client '" + client.name + "' has no components");
  if (!(client.attack_scale > 0.0)) throw ConfigError("attack_scale must be positive");
  std::vector<PreparedComponent> comps;
  std::vector<double> weights;
  for (const auto& c : client.components) {
    if (!(c.weight > 0.0)) throw ConfigError("component weights must be positive");
    comps.push_back(prepare(c, width));
    weights.push_back(c.weight);
  }
  const auto offset = client.attack_offset.expand(width);
  const std::vector<double> zero(width, 0.0);

  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  std::mt19937_64 rng(seq);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());

  FlowDataset out;
  out.name = client.name;
  const auto names = FeatureSchema::cic_flowmeter().feature_names();
  if (names.size() == width) {
    out.feature_names = names;
  } else {
    out.feature_names = FeatureSchema::anonymous(width).column_names;
  }
  out.features = Matrix(client.benign_rows + client.attack_rows, width);
  std::vector<int> labels;
  labels.reserve(out.features.rows());
  std::vector<double> z(width);
  std::size_t r = 0;
  for (std::size_t i = 0; i < client.benign_rows; ++i, ++r) {
    draw(comps[pick(rng)], zero, 1.0, rng, z, out.features.row(r));
    labels.push_back(0);
  }
  for (std::size_t i = 0; i < client.attack_rows; ++i, ++r) {
    draw(comps[pick(rng)], offset, client.attack_scale, rng, z, out.features.row(r));
    labels.push_back(1);
  }
  if (client.labeled) out.labels = std::move(labels);
  return out;
}

std::vector<FlowDataset> synth_generate(std::span<const SynthClientSpec> clients,
                                        std::uint64_t seed, std::size_t width) {
  if (clients.empty()) throw ConfigError("synthetic generator needs at least one client");
  std::vector<FlowDataset> out;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  std::vector<std::uint32_t> raw(clients.size() * 2);
  seq.generate(raw.begin(), raw.end());
  for (std::size_t i = 0; i < clients.size(); ++i) {
    const std::uint64_t s = (static_cast<std::uint64_t>(raw[2 * i]) << 32) | raw[2 * i + 1];
    out.push_back(synth_client(clients[i], s, width));
  }
  return out;
}

}  // namespace fedids
