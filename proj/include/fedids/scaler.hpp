#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fedids/ingest.hpp"

namespace fedids {

/// Per-feature (min, max) bounds. The object that travels around the ring.
struct MinMaxScaler {
  std::vector<std::string> feature_names;
  std::vector<double> mins;
  std::vector<double> maxs;
  bool initialized_randomly = false;
  /// Bounds still holding their initial value (never replaced by client data).
  std::vector<std::uint8_t> min_from_init;
  std::vector<std::uint8_t> max_from_init;
  /// Orchestrator-side audit trail; never serialized or sent to clients.
  std::vector<std::string> visit_log;

  std::size_t width() const { return mins.size(); }
  /// Features whose min or max is still the initial value.
  std::size_t init_retained_count() const;
  /// Bound values and provenance flags; ignores the visit log.
  bool same_bounds(const MinMaxScaler& other) const;
};

enum class ScalerInit { Random, Sentinel };

struct ScalerInitConfig {
  ScalerInit mode = ScalerInit::Sentinel;
  double low = -1.0;  // random draws are Uniform(low, high)
  double high = 1.0;
};

/// Random mode draws two values per feature and stores the smaller as min.
/// Sentinel mode uses +inf/-inf so the first client value replaces both.
MinMaxScaler init_scaler(std::span<const std::string> feature_names,
                         const ScalerInitConfig& init, std::mt19937_64& rng);

/// Widens bounds to cover the rows of local_data. Empty data is a no-op.
MinMaxScaler client_update(const MinMaxScaler& scaler, const FlowDataset& local_data);
MinMaxScaler client_update(const MinMaxScaler& scaler, const Matrix& local_rows);

/// Hands the scaler to one client and receives it back updated. May throw to
/// signal an unreachable client.
using ScalerVisit = std::function<MinMaxScaler(const std::string& client_id, const MinMaxScaler&)>;

/// Visits the listed clients in the given order, recording the order.
MinMaxScaler ring_pass(MinMaxScaler scaler, std::span<const std::string> order,
                       const ScalerVisit& visit);

/// Ring pass over every client exactly once in uniformly random order: the
/// next client is drawn from the pending list and removed from it.
MinMaxScaler ring_orchestrate(std::span<const std::string> client_ids,
                              std::span<const std::string> feature_names,
                              const ScalerInitConfig& init, std::mt19937_64& rng,
                              const ScalerVisit& visit);

/// (x - min) / (max - min) per feature; max == min maps to 0. Values outside
/// the bounds pass through unclamped unless clamp is set.
std::vector<double> scale(const MinMaxScaler& scaler, std::span<const double> x, bool clamp = false);
Matrix scale(const MinMaxScaler& scaler, const Matrix& rows, bool clamp = false);

/// Scaler fitted on one dataset alone (sentinel init + one update).
MinMaxScaler fit_local_scaler(const FlowDataset& data);

/// Text format:
///   fedids-scaler 1
///   random_init <0|1>
///   <name>\t<min>\t<max>\t<min_from_init>\t<max_from_init>   (one per feature)
/// Doubles use the shortest round-trip representation.
std::string serialize_scaler(const MinMaxScaler& scaler);
MinMaxScaler parse_scaler(const std::string& text);
void save_scaler(const MinMaxScaler& scaler, const std::filesystem::path& path);
MinMaxScaler load_scaler(const std::filesystem::path& path);

/// Compact binary form used inside federation messages (no visit log).
std::vector<std::uint8_t> encode_scaler(const MinMaxScaler& scaler);
MinMaxScaler decode_scaler(std::span<const std::uint8_t> bytes);

}  // namespace fedids
