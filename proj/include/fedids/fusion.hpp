#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fedids/nn.hpp"

namespace fedids {

enum class FusionKind { FedAvgMultiEpoch, FedMMB, FedSam };
std::string to_string(FusionKind k);
FusionKind parse_fusion_kind(const std::string& name);

/// How a client trains between two aggregations.
///  - FedAvgMultiEpoch: `epochs` full shuffled passes.
///  - FedMMB: the next `batch_count` mini-batches of an ordered epoch.
///  - FedSam: one pass over `sample_size` freshly sampled rows.
struct FusionStrategy {
  FusionKind kind = FusionKind::FedSam;
  std::size_t batch_size = 20;
  std::size_t batch_count = 1;
  std::size_t sample_size = 5000;
  std::size_t epochs = 1;
  /// Keep optimizer accumulators across rounds instead of resetting them.
  bool persist_optimizer = false;

  void validate() const;

  static FusionStrategy fed_avg(std::size_t epochs, std::size_t batch_size);
  static FusionStrategy fed_mmb(std::size_t batch_count, std::size_t batch_size);
  static FusionStrategy fed_sam(std::size_t sample_size, std::size_t batch_size);
};

/// Weighted mean sum(n_k w_k) / sum(n_k). Updates are summed in a canonical
/// order (by count, then values) so the result does not depend on argument
/// order. Components on which every update agrees are copied verbatim.
ParamVector fed_avg(std::span<const ParamVector> updates);

/// FedMMB position within a client's current epoch.
struct ClientCursor {
  std::vector<std::size_t> shuffled_order;
  std::size_t next_batch_index = 0;
  /// Completed epochs; bumped when the last batch of an epoch is handed out.
  std::size_t epoch_count = 0;

  static ClientCursor start(std::size_t rows, std::mt19937_64& rng);
};

std::size_t batches_per_epoch(std::size_t rows, std::size_t batch_size);

/// Next batch_count batches in order. Finishing an epoch reshuffles
/// immediately and selection carries on in the new order.
std::vector<std::vector<std::size_t>> fedmmb_select(ClientCursor& cursor, std::size_t rows,
                                                    std::size_t batch_size,
                                                    std::size_t batch_count,
                                                    std::mt19937_64& rng);

/// Uniform sample of exactly sample_size row indices: without replacement when
/// rows >= sample_size, with replacement otherwise.
std::vector<std::size_t> fedsam_sample(std::size_t rows, std::size_t sample_size,
                                       std::mt19937_64& rng);

/// Split row indices into consecutive mini-batches (last one may be short).
std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> rows,
                                                   std::size_t batch_size);

/// Inputs, targets and loss for one client's local training.
struct TrainingData {
  const Matrix* inputs = nullptr;
  const Matrix* targets = nullptr;
  LossKind loss = LossKind::MeanSquared;

  std::size_t rows() const { return inputs->rows(); }
};

/// Per-client state that lives across rounds.
struct ClientTrainingState {
  std::mt19937_64 rng;
  ClientCursor cursor;
  bool cursor_started = false;
  Optimizer optimizer;
  /// Rows trained on with replacement because sample_size exceeded the data.
  std::size_t oversampled_rounds = 0;

  ClientTrainingState(std::uint64_t seed, OptimizerConfig config)
      : rng(seed), optimizer(config) {}
};

/// Local training for one round according to the strategy. Returns the
/// trained parameters; count is the number of rows used this round.
ParamVector client_round(DenseNet& net, const FusionStrategy& strategy, const TrainingData& data,
                         ClientTrainingState& state);

}  // namespace fedids
