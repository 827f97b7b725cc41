#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "encoder.hpp"
#include "labeling.hpp"
#include "losses.hpp"
#include "optimizer.hpp"

namespace fussl {

enum class LossKind {
  kTriplet,
  kNPair,
  kContrastive,
  kNonContrastive,
  kWmse,
  kBarlowTwins
};

LossKind parse_loss_kind(const std::string& text);
std::string loss_kind_name(LossKind kind);

// Full schedule of the two-phase double-supervision protocol.
struct ProtocolConfig {
  std::size_t m = 3;
  LossKind loss_kind = LossKind::kBarlowTwins;
  std::size_t phase1_epochs = 200;
  std::size_t phase2_epochs = 100;
  std::size_t phase2_full_epochs = 25;  // unfrozen stretch of phase 2
  std::size_t batch_size = 128;
  double lr_phase1_warm = 3e-3;
  double lr_phase1_main = 1e-3;
  double lr_phase2 = 1e-3;
  std::size_t freeze_boundary = 2;  // backbone layers frozen after the stretch
  LabelMode label_mode = LabelMode::kFuzzy;
  bool progressive = false;
  std::size_t progressive_phase1_period = 50;
  std::size_t progressive_phase2_period = 25;
  std::uint64_t seed = 1;
  bool parallel_blocks = true;
  bool byol_ema = false;  // EMA target branch instead of plain stop-gradient
  double ema_rate = 0.99;
  LossConfig loss;
  AugmentConfig augment;
  EncoderSpec encoder;
  AdamHyper optim;
};

// One JSON-lines metrics record per (phase, epoch, block).
struct MetricsRecord {
  std::string phase;
  std::int64_t epoch = 0;
  std::int64_t block = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::int64_t frozen_layers = 0;
  std::int64_t wall_ms = 0;
};

// m independently trained blocks sharing one initialization. Block i's
// augmentation stream is derived from seed XOR i, so blocks are
// reproducible independently and may train in parallel.
struct EnsembleState {
  std::vector<EncoderParams> blocks;
  std::vector<AdamState> optimizers;
  std::vector<EncoderParams> ema_targets;  // only populated with byol_ema
  std::uint64_t shared_init_seed = 0;
  std::vector<std::uint64_t> block_rng_seeds;

  std::size_t size() const { return blocks.size(); }
};

EnsembleState make_ensemble(const ProtocolConfig& cfg);

// Trains epochs [epoch_begin, epoch_end) of every block. The warmup
// learning rate covers the first ceil(phase1_epochs / 80) epochs. Appends
// one metrics record per (epoch, block), ordered by epoch then block
// regardless of block parallelism.
void phase1_train_range(EnsembleState& ens, const Dataset& ds,
                        const ProtocolConfig& cfg, std::size_t epoch_begin,
                        std::size_t epoch_end,
                        std::vector<MetricsRecord>& metrics);

EnsembleState phase1_train(const Dataset& ds, const ProtocolConfig& cfg,
                           std::vector<MetricsRecord>& metrics);

// Feeds every raw sample to every block in eval mode and applies the
// fuzzy labeling rule to the per-block argmax votes of the softmaxed
// projector outputs.
std::vector<FuzzyLabel> pseudo_label(const EnsembleState& ens,
                                     const Dataset& ds, LabelMode mode);

// Index of the block with the lowest mean soft cross-entropy between its
// softmaxed projector output and the label distribution; ties break to
// the lowest index.
std::size_t select_block(const EnsembleState& ens,
                         const std::vector<FuzzyLabel>& labels,
                         const Dataset& ds);

using Phase2Observer = std::function<void(
    const EncoderParams& params, std::size_t step, std::size_t frozen_layers)>;

// Soft cross-entropy training on raw samples. The first `full_epochs`
// epochs update everything; afterwards (when `allow_freeze`) the backbone
// below cfg.freeze_boundary is frozen. The observer, when set, runs after
// every optimizer step.
void phase2_train(EncoderParams& params, const std::vector<FuzzyLabel>& labels,
                  const Dataset& ds, const ProtocolConfig& cfg,
                  std::size_t epochs, std::size_t full_epochs,
                  bool allow_freeze, std::size_t epoch_offset,
                  std::int64_t block_index,
                  std::vector<MetricsRecord>& metrics,
                  const Phase2Observer& observer = {});

struct RunResult {
  EncoderParams final_encoder;
  EncoderParams phase1_encoder;  // selected block before phase-2 training
  EnsembleState ensemble;
  std::vector<FuzzyLabel> labels;
  std::size_t selected_block = 0;
  std::vector<MetricsRecord> metrics;
};

// The whole pipeline: phase-1 ensemble training, fuzzy pseudo-labeling,
// block selection, phase-2 conditioned training. With cfg.progressive the
// two phases alternate in periods, relabeling from scratch each cycle and
// never freezing layers.
RunResult run_fussl(const Dataset& ds, const ProtocolConfig& cfg);

// Shape/feasibility checks run before any training starts.
void validate_protocol_config(const ProtocolConfig& cfg, const Dataset& ds);

// Row-wise softmax used for vote normalization and phase-2 targets.
Matrix softmax_rows(const Matrix& logits);

std::string metrics_to_jsonl(const std::vector<MetricsRecord>& records);
std::string labels_to_jsonl(const std::vector<FuzzyLabel>& labels);

}  // namespace fussl
