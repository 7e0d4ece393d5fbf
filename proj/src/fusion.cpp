#include "fedids/fusion.hpp"

#include <algorithm>
#include <numeric>

#include "fedids/log.hpp"

namespace fedids {

std::string to_string(FusionKind k) {
  switch (k) {
    case FusionKind::FedAvgMultiEpoch: return "fedavg";
    case FusionKind::FedMMB: return "fedmmb";
    case FusionKind::FedSam: return "fedsam";
  }
  return "?";
}

FusionKind parse_fusion_kind(const std::string& name) {
  if (name == "fedavg") return FusionKind::FedAvgMultiEpoch;
  if (name == "fedmmb") return FusionKind::FedMMB;
  if (name == "fedsam") return FusionKind::FedSam;
  throw ConfigError("unknown fusion strategy '" + name + "' (fedavg, fedmmb, fedsam)");
}

void FusionStrategy::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  switch (kind) {
    case FusionKind::FedAvgMultiEpoch:
      if (epochs == 0) throw ConfigError("fedavg needs epochs >= 1");
      break;
    case FusionKind::FedMMB:
      if (batch_count == 0) throw ConfigError("fedmmb needs batch_count >= 1");
      break;
    case FusionKind::FedSam:
      if (sample_size < batch_size) throw ConfigError("fedsam needs sample_size >= batch_size");
      break;
  }
}

FusionStrategy FusionStrategy::fed_avg(std::size_t epochs, std::size_t batch_size) {
  FusionStrategy s;
  s.kind = FusionKind::FedAvgMultiEpoch;
  s.epochs = epochs;
  s.batch_size = batch_size;
  return s;
}

FusionStrategy FusionStrategy::fed_mmb(std::size_t batch_count, std::size_t batch_size) {
  FusionStrategy s;
  s.kind = FusionKind::FedMMB;
  s.batch_count = batch_count;
  s.batch_size = batch_size;
  return s;
}

FusionStrategy FusionStrategy::fed_sam(std::size_t sample_size, std::size_t batch_size) {
  FusionStrategy s;
  s.kind = FusionKind::FedSam;
  s.sample_size = sample_size;
  s.batch_size = batch_size;
  return s;
}

ParamVector fed_avg(std::span<const ParamVector> updates) {
  if (updates.empty()) throw EmptyInputError("fed_avg: no updates");
  const std::size_t n = updates.front().values.size();
  for (const auto& u : updates) {
    require_shape(u.values.size() == n, "fed_avg: updates differ in length");
    if (u.count == 0) throw ConfigError("fed_avg: update with zero example count");
  }
  std::vector<std::size_t> order(updates.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ua = updates[a];
    const auto& ub = updates[b];
    if (ua.count != ub.count) return ua.count < ub.count;
    return ua.values < ub.values;
  });

  ParamVector out;
  out.values.resize(n);
  double total = 0.0;
  for (const auto& u : updates) {
    out.count += u.count;
    total += static_cast<double>(u.count);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double first = updates[order[0]].values[i];
    bool uniform = true;
    double sum = 0.0;
    for (std::size_t k : order) {
      const double v = updates[k].values[i];
      uniform = uniform && v == first;
      sum += static_cast<double>(updates[k].count) * v;
    }
    out.values[i] = uniform ? first : sum / total;
  }
  return out;
}

ClientCursor ClientCursor::start(std::size_t rows, std::mt19937_64& rng) {
  ClientCursor c;
  c.shuffled_order.resize(rows);
  std::iota(c.shuffled_order.begin(), c.shuffled_order.end(), 0);
  std::shuffle(c.shuffled_order.begin(), c.shuffled_order.end(), rng);
  return c;
}

std::size_t batches_per_epoch(std::size_t rows, std::size_t batch_size) {
  return (rows + batch_size - 1) / batch_size;
}

std::vector<std::vector<std::size_t>> fedmmb_select(ClientCursor& cursor, std::size_t rows,
                                                    std::size_t batch_size,
                                                    std::size_t batch_count,
                                                    std::mt19937_64& rng) {
  if (rows == 0) throw EmptyInputError("fedmmb_select: empty dataset");
  if (batch_size == 0 || batch_count == 0) throw ConfigError("fedmmb_select: zero batch size/count");
  if (cursor.shuffled_order.size() != rows) {
    throw ShapeError("fedmmb_select: cursor was built for a different row count");
  }
  const std::size_t total = batches_per_epoch(rows, batch_size);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t b = 0; b < batch_count; ++b) {
    const std::size_t begin = cursor.next_batch_index * batch_size;
    const std::size_t end = std::min(begin + batch_size, rows);
    out.emplace_back(cursor.shuffled_order.begin() + static_cast<std::ptrdiff_t>(begin),
                     cursor.shuffled_order.begin() + static_cast<std::ptrdiff_t>(end));
    if (++cursor.next_batch_index == total) {
      cursor.next_batch_index = 0;
      ++cursor.epoch_count;
      std::shuffle(cursor.shuffled_order.begin(), cursor.shuffled_order.end(), rng);
    }
  }
  return out;
}

std::vector<std::size_t> fedsam_sample(std::size_t rows, std::size_t sample_size,
                                       std::mt19937_64& rng) {
  if (rows == 0) throw EmptyInputError("fedsam_sample: empty dataset");
  if (sample_size == 0) throw ConfigError("fedsam_sample: sample_size must be >= 1");
  if (sample_size > rows) {
    std::uniform_int_distribution<std::size_t> pick(0, rows - 1);
    std::vector<std::size_t> out(sample_size);
    for (auto& i : out) i = pick(rng);
    return out;
  }
  // Partial Fisher-Yates: the first sample_size slots end up uniformly chosen.
  std::vector<std::size_t> idx(rows);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < sample_size; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, rows - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(sample_size);
  return idx;
}

std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> rows,
                                                   std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("make_batches: zero batch size");
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t b = 0; b < rows.size(); b += batch_size) {
    const std::size_t e = std::min(b + batch_size, rows.size());
    out.emplace_back(rows.begin() + static_cast<std::ptrdiff_t>(b),
                     rows.begin() + static_cast<std::ptrdiff_t>(e));
  }
  return out;
}

ParamVector client_round(DenseNet& net, const FusionStrategy& strategy, const TrainingData& data,
                         ClientTrainingState& state) {
  strategy.validate();
  if (data.inputs == nullptr || data.targets == nullptr || data.rows() == 0) {
    throw EmptyInputError("client_round: no training rows");
  }
  if (!strategy.persist_optimizer) state.optimizer.reset();

  const std::size_t rows = data.rows();
  std::uint64_t used = 0;
  auto train = [&](const std::vector<std::vector<std::size_t>>& batches) {
    for (const auto& b : batches) {
      train_batch(net, *data.inputs, *data.targets, b, data.loss, state.optimizer);
      used += b.size();
    }
  };

  switch (strategy.kind) {
    case FusionKind::FedAvgMultiEpoch: {
      std::vector<std::size_t> order(rows);
      std::iota(order.begin(), order.end(), 0);
      for (std::size_t e = 0; e < strategy.epochs; ++e) {
        std::shuffle(order.begin(), order.end(), state.rng);
        train(make_batches(order, strategy.batch_size));
      }
      break;
    }
    case FusionKind::FedMMB: {
      if (!state.cursor_started) {
        state.cursor = ClientCursor::start(rows, state.rng);
        state.cursor_started = true;
      }
      train(fedmmb_select(state.cursor, rows, strategy.batch_size, strategy.batch_count, state.rng));
      break;
    }
    case FusionKind::FedSam: {
      if (strategy.sample_size > rows) {
        if (state.oversampled_rounds++ == 0) {
          log::warn("sample_size " + std::to_string(strategy.sample_size) + " exceeds the " +
                    std::to_string(rows) + " local rows; sampling with replacement");
        }
      }
      const auto sample = fedsam_sample(rows, strategy.sample_size, state.rng);
      train(make_batches(sample, strategy.batch_size));
      break;
    }
  }
  return flatten(net, used);
}

}  // namespace fedids
