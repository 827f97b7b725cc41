#include "protocol.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <future>
#include <numeric>

#include <json.hpp>

#include "error.hpp"

namespace fussl {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

std::int64_t elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now() - start)
      .count();
}

Matrix rotate_rows(const Matrix& m, std::size_t shift) {
  Matrix out(m.rows, m.cols);
  for (std::size_t r = 0; r < m.rows; ++r) {
    std::memcpy(out.row(r), m.row((r + shift) % m.rows),
                m.cols * sizeof(double));
  }
  return out;
}

void add_rotated_back(Matrix& dst, const Matrix& grad, std::size_t shift) {
  for (std::size_t r = 0; r < grad.rows; ++r) {
    double* d = dst.row((r + shift) % grad.rows);
    const double* g = grad.row(r);
    for (std::size_t c = 0; c < grad.cols; ++c) d[c] += g[c];
  }
}

void add_into(Matrix& dst, const Matrix& src) {
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

// Interleave two view batches as rows (2i, 2i+1) with the matching
// positive-pair mapping.
Matrix interleave_views(const Matrix& va, const Matrix& vb) {
  Matrix out(2 * va.rows, va.cols);
  for (std::size_t r = 0; r < va.rows; ++r) {
    std::memcpy(out.row(2 * r), va.row(r), va.cols * sizeof(double));
    std::memcpy(out.row(2 * r + 1), vb.row(r), va.cols * sizeof(double));
  }
  return out;
}

struct StepLoss {
  double value = 0.0;
  Matrix grad_a, grad_b;  // at the tapped head outputs of each view
  OutputTap tap = OutputTap::kProjector;
};

// Routes one batch's two view embeddings through the configured objective.
// `target_a` / `target_b` are the stop-gradient targets for the
// non-contrastive objective (projector outputs of either the block itself
// or its EMA target network).
StepLoss phase1_objective(const ProtocolConfig& cfg, const Activations& fa,
                          const Activations& fb, const Matrix& target_a,
                          const Matrix& target_b) {
  StepLoss step;
  const Matrix& za = fa.projector_out;
  const Matrix& zb = fb.projector_out;

  switch (cfg.loss_kind) {
    case LossKind::kBarlowTwins: {
      LossOutput out = barlow_twins_loss(za, zb, cfg.loss);
      step.value = out.value;
      step.grad_a = std::move(out.grads[0]);
      step.grad_b = std::move(out.grads[1]);
      break;
    }
    case LossKind::kWmse: {
      LossOutput out = wmse_loss(za, zb, cfg.loss);
      step.value = out.value;
      step.grad_a = std::move(out.grads[0]);
      step.grad_b = std::move(out.grads[1]);
      break;
    }
    case LossKind::kTriplet: {
      // Negatives: the other view of the next sample in the batch.
      const Matrix zk = rotate_rows(zb, 1);
      LossOutput out = triplet_loss(za, zb, zk, cfg.loss);
      step.value = out.value;
      step.grad_a = std::move(out.grads[0]);
      step.grad_b = std::move(out.grads[1]);
      add_rotated_back(step.grad_b, out.grads[2], 1);
      break;
    }
    case LossKind::kNPair: {
      // The second view's embeddings double as the shared negative set;
      // the self term is constant and gradient-neutral.
      LossOutput out = npair_loss(za, zb, zb, cfg.loss);
      step.value = out.value;
      step.grad_a = std::move(out.grads[0]);
      step.grad_b = std::move(out.grads[1]);
      add_into(step.grad_b, out.grads[2]);
      break;
    }
    case LossKind::kContrastive: {
      const Matrix stacked = interleave_views(za, zb);
      std::vector<std::size_t> pairs(stacked.rows);
      for (std::size_t i = 0; i < za.rows; ++i) {
        pairs[2 * i] = 2 * i + 1;
        pairs[2 * i + 1] = 2 * i;
      }
      LossOutput out = contrastive_loss(stacked, pairs, cfg.loss);
      step.value = out.value;
      step.grad_a = Matrix(za.rows, za.cols);
      step.grad_b = Matrix(zb.rows, zb.cols);
      for (std::size_t r = 0; r < za.rows; ++r) {
        std::memcpy(step.grad_a.row(r), out.grads[0].row(2 * r),
                    za.cols * sizeof(double));
        std::memcpy(step.grad_b.row(r), out.grads[0].row(2 * r + 1),
                    za.cols * sizeof(double));
      }
      break;
    }
    case LossKind::kNonContrastive: {
      // Symmetrized prediction task with stop-gradient targets.
      const Matrix& pa = *fa.predictor_out;
      const Matrix& pb = *fb.predictor_out;
      LossOutput first = noncontrastive_loss(za, target_b, pa);
      LossOutput second = noncontrastive_loss(zb, target_a, pb);
      step.value = 0.5 * (first.value + second.value);
      step.grad_a = std::move(first.grads[2]);
      step.grad_b = std::move(second.grads[2]);
      for (auto& v : step.grad_a.data) v *= 0.5;
      for (auto& v : step.grad_b.data) v *= 0.5;
      step.tap = OutputTap::kPredictor;
      break;
    }
  }
  return step;
}

void ema_update(EncoderParams& target, const EncoderParams& online,
                double rate) {
  const auto blend_layer = [rate](Layer& t, const Layer& o) {
    const auto blend = [rate](Matrix& a, const Matrix& b) {
      for (std::size_t i = 0; i < a.data.size(); ++i) {
        a.data[i] = rate * a.data[i] + (1.0 - rate) * b.data[i];
      }
    };
    blend(t.weight, o.weight);
    blend(t.bias, o.bias);
    if (t.spec.has_batchnorm) {
      blend(t.bn_gamma, o.bn_gamma);
      blend(t.bn_beta, o.bn_beta);
      blend(t.bn_running_mean, o.bn_running_mean);
      blend(t.bn_running_var, o.bn_running_var);
    }
  };
  for (std::size_t i = 0; i < target.backbone.size(); ++i) {
    blend_layer(target.backbone[i], online.backbone[i]);
  }
  for (std::size_t i = 0; i < target.projector.size(); ++i) {
    blend_layer(target.projector[i], online.projector[i]);
  }
  for (std::size_t i = 0; i < target.predictor.size(); ++i) {
    blend_layer(target.predictor[i], online.predictor[i]);
  }
  ++target.version;
}

std::size_t warmup_epochs(const ProtocolConfig& cfg) {
  if (cfg.phase1_epochs == 0) return 0;
  return (cfg.phase1_epochs + 79) / 80;  // ceil(total / 80)
}

// One block's training over an epoch range. Blocks share the batch order
// stream but own their augmentation streams, so this is safe to run in
// parallel across blocks and bit-identical to the sequential schedule.
std::vector<MetricsRecord> train_block_range(EnsembleState& ens,
                                             std::size_t block_index,
                                             const Dataset& ds,
                                             const ProtocolConfig& cfg,
                                             std::size_t epoch_begin,
                                             std::size_t epoch_end) {
  EncoderParams& params = ens.blocks[block_index];
  AdamState& opt = ens.optimizers[block_index];
  const std::size_t n_batches = ds.size() / cfg.batch_size;
  const std::size_t warm = warmup_epochs(cfg);

  std::vector<MetricsRecord> records;
  std::vector<std::size_t> order(ds.size());
  for (std::size_t epoch = epoch_begin; epoch < epoch_end; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const double lr = epoch < warm ? cfg.lr_phase1_warm : cfg.lr_phase1_main;
    opt.hyper.lr = lr;

    // Same sample order for every block; views differ per block.
    RngStream order_rng = RngStream::derive(
        cfg.seed, "phase1.order.epoch" + std::to_string(epoch));
    std::iota(order.begin(), order.end(), std::size_t{0});
    order_rng.shuffle(order);
    RngStream view_rng = RngStream::derive(
        ens.block_rng_seeds[block_index],
        "phase1.views.epoch" + std::to_string(epoch));

    double loss_sum = 0.0;
    for (std::size_t b = 0; b < n_batches; ++b) {
      Matrix va(cfg.batch_size, ds.dim()), vb(cfg.batch_size, ds.dim());
      std::vector<double> row(ds.dim());
      for (std::size_t i = 0; i < cfg.batch_size; ++i) {
        const double* src = ds.x.row(order[b * cfg.batch_size + i]);
        row.assign(src, src + ds.dim());
        const auto views = make_views(row, 1, cfg.augment, view_rng);
        std::memcpy(va.row(i), views[0].data(), ds.dim() * sizeof(double));
        std::memcpy(vb.row(i), views[1].data(), ds.dim() * sizeof(double));
      }

      const Activations fa = forward(params, va, ForwardMode::kTrain);
      const Activations fb = forward(params, vb, ForwardMode::kTrain);

      Matrix target_a, target_b;
      if (cfg.loss_kind == LossKind::kNonContrastive) {
        if (cfg.byol_ema) {
          target_a = forward_eval(ens.ema_targets[block_index], va).projector_out;
          target_b = forward_eval(ens.ema_targets[block_index], vb).projector_out;
        } else {
          target_a = fa.projector_out;
          target_b = fb.projector_out;
        }
      }

      const StepLoss step = phase1_objective(cfg, fa, fb, target_a, target_b);
      loss_sum += step.value;

      Gradients ga = backward(params, fa, step.grad_a, step.tap);
      const Gradients gb = backward(params, fb, step.grad_b, step.tap);
      const auto merge = [](std::vector<LayerGrads>& dst,
                            const std::vector<LayerGrads>& src) {
        for (std::size_t i = 0; i < dst.size(); ++i) {
          add_into(dst[i].weight, src[i].weight);
          add_into(dst[i].bias, src[i].bias);
          if (dst[i].bn_gamma.data.size() > 0) {
            add_into(dst[i].bn_gamma, src[i].bn_gamma);
            add_into(dst[i].bn_beta, src[i].bn_beta);
          }
        }
      };
      merge(ga.backbone, gb.backbone);
      merge(ga.projector, gb.projector);
      merge(ga.predictor, gb.predictor);

      adam_step(params, ga, opt);
      if (cfg.byol_ema && cfg.loss_kind == LossKind::kNonContrastive) {
        ema_update(ens.ema_targets[block_index], params, cfg.ema_rate);
      }
    }

    records.push_back(MetricsRecord{
        "phase1", static_cast<std::int64_t>(epoch),
        static_cast<std::int64_t>(block_index),
        loss_sum / static_cast<double>(n_batches), lr, 0, elapsed_ms(start)});
  }
  return records;
}

}  // namespace

LossKind parse_loss_kind(const std::string& text) {
  if (text == "triplet") return LossKind::kTriplet;
  if (text == "npair") return LossKind::kNPair;
  if (text == "contrastive") return LossKind::kContrastive;
  if (text == "noncontrastive") return LossKind::kNonContrastive;
  if (text == "wmse") return LossKind::kWmse;
  if (text == "barlow-twins") return LossKind::kBarlowTwins;
  throw config_error("unknown loss kind '" + text +
                     "' (expected triplet, npair, contrastive, "
                     "noncontrastive, wmse, or barlow-twins)");
}

std::string loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::kTriplet: return "triplet";
    case LossKind::kNPair: return "npair";
    case LossKind::kContrastive: return "contrastive";
    case LossKind::kNonContrastive: return "noncontrastive";
    case LossKind::kWmse: return "wmse";
    case LossKind::kBarlowTwins: return "barlow-twins";
  }
  return "barlow-twins";
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows, logits.cols);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    const double* src = logits.row(r);
    double* dst = out.row(r);
    double m = src[0];
    for (std::size_t c = 1; c < logits.cols; ++c) m = std::max(m, src[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < logits.cols; ++c) {
      dst[c] = std::exp(src[c] - m);
      sum += dst[c];
    }
    for (std::size_t c = 0; c < logits.cols; ++c) dst[c] /= sum;
  }
  return out;
}

void validate_protocol_config(const ProtocolConfig& cfg, const Dataset& ds) {
  require(cfg.m >= 1, "protocol: ensemble size m must be >= 1");
  require(cfg.batch_size >= 2, "protocol: batch size must be >= 2");
  require(ds.size() >= cfg.batch_size,
          "protocol: dataset smaller than one batch");
  require(cfg.phase2_full_epochs <= cfg.phase2_epochs,
          "protocol: phase2_full_epochs must be <= phase2_epochs");
  require(!cfg.encoder.backbone.empty() && !cfg.encoder.projector.empty(),
          "protocol: encoder spec is empty");
  require(cfg.encoder.backbone.front().in_dim == ds.dim(),
          "protocol: encoder input dim does not match dataset dim");
  require(cfg.freeze_boundary <= cfg.encoder.backbone.size(),
          "protocol: freeze boundary out of range");
  require(cfg.ema_rate > 0.0 && cfg.ema_rate < 1.0,
          "protocol: ema_rate must be in (0, 1)");
  if (cfg.progressive) {
    require(cfg.progressive_phase1_period >= 1 &&
                cfg.progressive_phase2_period >= 1,
            "protocol: progressive periods must be >= 1");
    require(cfg.phase1_epochs >= 1,
            "protocol: progressive mode needs phase1_epochs >= 1");
  }

  const std::size_t proj_dim = cfg.encoder.projector.back().out_dim;
  if (cfg.loss_kind == LossKind::kWmse) {
    require(cfg.batch_size > proj_dim,
            "protocol: W-MSE whitening needs batch size > projector dim (" +
                std::to_string(cfg.batch_size) + " <= " +
                std::to_string(proj_dim) + ")");
  }
  if (cfg.loss_kind == LossKind::kNonContrastive) {
    require(!cfg.encoder.predictor.empty(),
            "protocol: non-contrastive training needs a predictor head");
  }
}

EnsembleState make_ensemble(const ProtocolConfig& cfg) {
  require(cfg.m >= 1, "make_ensemble: m must be >= 1");
  EnsembleState ens;
  ens.shared_init_seed = cfg.seed;
  // Identical initialization keeps pseudo-class assignment synchronized
  // across blocks.
  const EncoderParams shared = init_encoder(cfg.encoder, cfg.seed);
  for (std::size_t i = 0; i < cfg.m; ++i) {
    ens.blocks.push_back(shared);
    ens.optimizers.push_back(make_adam_state(shared, cfg.optim));
    ens.block_rng_seeds.push_back(cfg.seed ^ static_cast<std::uint64_t>(i));
    if (cfg.byol_ema && cfg.loss_kind == LossKind::kNonContrastive) {
      ens.ema_targets.push_back(shared);
    }
  }
  return ens;
}

void phase1_train_range(EnsembleState& ens, const Dataset& ds,
                        const ProtocolConfig& cfg, std::size_t epoch_begin,
                        std::size_t epoch_end,
                        std::vector<MetricsRecord>& metrics) {
  validate_protocol_config(cfg, ds);
  if (epoch_begin >= epoch_end) return;

  std::vector<std::vector<MetricsRecord>> per_block(ens.size());
  if (cfg.parallel_blocks && ens.size() > 1) {
    std::vector<std::future<std::vector<MetricsRecord>>> futures;
    futures.reserve(ens.size());
    for (std::size_t i = 0; i < ens.size(); ++i) {
      futures.push_back(std::async(std::launch::async, [&, i] {
        return train_block_range(ens, i, ds, cfg, epoch_begin, epoch_end);
      }));
    }
    for (std::size_t i = 0; i < ens.size(); ++i) per_block[i] = futures[i].get();
  } else {
    for (std::size_t i = 0; i < ens.size(); ++i) {
      per_block[i] = train_block_range(ens, i, ds, cfg, epoch_begin, epoch_end);
    }
  }

  // Canonical order: epoch-major, block-minor.
  for (std::size_t e = 0; e < epoch_end - epoch_begin; ++e) {
    for (std::size_t i = 0; i < ens.size(); ++i) {
      metrics.push_back(per_block[i][e]);
    }
  }
}

EnsembleState phase1_train(const Dataset& ds, const ProtocolConfig& cfg,
                           std::vector<MetricsRecord>& metrics) {
  EnsembleState ens = make_ensemble(cfg);
  phase1_train_range(ens, ds, cfg, 0, cfg.phase1_epochs, metrics);
  return ens;
}

std::vector<FuzzyLabel> pseudo_label(const EnsembleState& ens,
                                     const Dataset& ds, LabelMode mode) {
  require(ens.size() >= 1, "pseudo_label: empty ensemble");
  const std::size_t proj_dim = ens.blocks.front().projector_out_dim();
  for (const auto& block : ens.blocks) {
    require(block.projector_out_dim() == proj_dim,
            "pseudo_label: blocks have different projector output dims");
  }

  // Per-block votes for every sample (raw inputs, eval mode).
  std::vector<std::vector<BlockVote>> votes(ds.size(),
                                            std::vector<BlockVote>(ens.size()));
  for (std::size_t bi = 0; bi < ens.size(); ++bi) {
    const Matrix probs =
        softmax_rows(forward_eval(ens.blocks[bi], ds.x).projector_out);
    for (std::size_t r = 0; r < ds.size(); ++r) {
      const double* p = probs.row(r);
      std::uint32_t best = 0;
      for (std::size_t c = 1; c < probs.cols; ++c) {
        if (p[c] > p[best]) best = static_cast<std::uint32_t>(c);
      }
      votes[r][bi] = BlockVote{best, p[best]};
    }
  }

  std::vector<FuzzyLabel> labels;
  labels.reserve(ds.size());
  for (std::size_t r = 0; r < ds.size(); ++r) {
    labels.push_back(label_from_votes(votes[r], mode));
    validate_label(labels.back(), ens.size());
  }
  return labels;
}

std::size_t select_block(const EnsembleState& ens,
                         const std::vector<FuzzyLabel>& labels,
                         const Dataset& ds) {
  require(labels.size() == ds.size(),
          "select_block: labels not aligned with dataset");

  double best_err = 0.0;
  std::size_t best = 0;
  for (std::size_t bi = 0; bi < ens.size(); ++bi) {
    const Matrix logits = forward_eval(ens.blocks[bi], ds.x).projector_out;
    const std::size_t k = logits.cols;
    double err = 0.0;
    for (std::size_t r = 0; r < ds.size(); ++r) {
      // Stable log-softmax.
      const double* z = logits.row(r);
      double m = z[0];
      for (std::size_t c = 1; c < k; ++c) m = std::max(m, z[c]);
      double lse = 0.0;
      for (std::size_t c = 0; c < k; ++c) lse += std::exp(z[c] - m);
      lse = m + std::log(lse);

      const auto cross_entropy = [&](std::uint32_t cls, double weight) {
        require(cls < k, "select_block: label class out of projector range");
        err -= weight * (z[cls] - lse);
      };
      if (labels[r].is_hard()) {
        cross_entropy(labels[r].hard_class, 1.0);
      } else {
        for (const auto& [cls, w] : labels[r].memberships) cross_entropy(cls, w);
      }
    }
    err /= static_cast<double>(ds.size());
    if (bi == 0 || err < best_err) {
      best_err = err;
      best = bi;
    }
  }
  return best;
}

void phase2_train(EncoderParams& params, const std::vector<FuzzyLabel>& labels,
                  const Dataset& ds, const ProtocolConfig& cfg,
                  std::size_t epochs, std::size_t full_epochs,
                  bool allow_freeze, std::size_t epoch_offset,
                  std::int64_t block_index,
                  std::vector<MetricsRecord>& metrics,
                  const Phase2Observer& observer) {
  require(labels.size() == ds.size(),
          "phase2_train: labels not aligned with dataset");
  require(ds.size() >= cfg.batch_size, "phase2_train: dataset smaller than one batch");
  const std::size_t k = params.projector_out_dim();
  for (const auto& label : labels) {
    if (label.is_hard()) {
      require(label.hard_class < k, "phase2_train: label class out of range");
    } else {
      for (const auto& [cls, w] : label.memberships) {
        (void)w;
        require(cls < k, "phase2_train: label class out of range");
      }
    }
  }

  AdamHyper hyper = cfg.optim;
  hyper.lr = cfg.lr_phase2;
  AdamState opt = make_adam_state(params, hyper);

  const std::size_t n_batches = ds.size() / cfg.batch_size;
  std::vector<std::size_t> order(ds.size());
  std::size_t step_count = 0;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    if (allow_freeze && epoch == full_epochs) {
      set_freeze(params, cfg.freeze_boundary);
    }

    RngStream order_rng = RngStream::derive(
        cfg.seed,
        "phase2.order.epoch" + std::to_string(epoch_offset + epoch));
    std::iota(order.begin(), order.end(), std::size_t{0});
    order_rng.shuffle(order);

    double loss_sum = 0.0;
    for (std::size_t b = 0; b < n_batches; ++b) {
      Matrix x(cfg.batch_size, ds.dim());
      Matrix target(cfg.batch_size, k);
      for (std::size_t i = 0; i < cfg.batch_size; ++i) {
        const std::size_t rowi = order[b * cfg.batch_size + i];
        std::memcpy(x.row(i), ds.x.row(rowi), ds.dim() * sizeof(double));
        const FuzzyLabel& label = labels[rowi];
        if (label.is_hard()) {
          target(i, label.hard_class) = 1.0;
        } else {
          for (const auto& [cls, w] : label.memberships) target(i, cls) = w;
        }
      }

      const Activations acts = forward(params, x, ForwardMode::kTrain);
      const Matrix probs = softmax_rows(acts.projector_out);

      double ce = 0.0;
      Matrix grad(cfg.batch_size, k);
      const double inv_b = 1.0 / static_cast<double>(cfg.batch_size);
      for (std::size_t r = 0; r < cfg.batch_size; ++r) {
        for (std::size_t c = 0; c < k; ++c) {
          if (target(r, c) > 0.0) {
            ce -= target(r, c) * std::log(std::max(probs(r, c), 1e-300));
          }
          grad(r, c) = (probs(r, c) - target(r, c)) * inv_b;
        }
      }
      loss_sum += ce * inv_b;

      const Gradients grads = backward(params, acts, grad, OutputTap::kProjector);
      adam_step(params, grads, opt);
      ++step_count;
      if (observer) observer(params, step_count, frozen_layer_count(params));
    }

    metrics.push_back(MetricsRecord{
        "phase2", static_cast<std::int64_t>(epoch_offset + epoch), block_index,
        n_batches > 0 ? loss_sum / static_cast<double>(n_batches) : 0.0,
        cfg.lr_phase2, static_cast<std::int64_t>(frozen_layer_count(params)),
        elapsed_ms(start)});
  }
}

RunResult run_fussl(const Dataset& ds, const ProtocolConfig& cfg) {
  validate_protocol_config(cfg, ds);
  RunResult result;

  if (!cfg.progressive) {
    result.ensemble = phase1_train(ds, cfg, result.metrics);
    result.labels = pseudo_label(result.ensemble, ds, cfg.label_mode);
    result.selected_block = select_block(result.ensemble, result.labels, ds);
    result.phase1_encoder = result.ensemble.blocks[result.selected_block];
    result.final_encoder = result.phase1_encoder;
    phase2_train(result.final_encoder, result.labels, ds, cfg,
                 cfg.phase2_epochs, cfg.phase2_full_epochs,
                 /*allow_freeze=*/true, /*epoch_offset=*/0,
                 static_cast<std::int64_t>(result.selected_block),
                 result.metrics);
    return result;
  }

  // Progressive relabeling: alternate phase-1 and phase-2 periods with no
  // frozen layers and labels rebuilt from scratch each cycle. The selected
  // block is trained in place, so later cycles build on it.
  EnsembleState ens = make_ensemble(cfg);
  std::size_t p1_done = 0, p2_done = 0;
  while (p1_done < cfg.phase1_epochs) {
    const std::size_t stop =
        std::min(p1_done + cfg.progressive_phase1_period, cfg.phase1_epochs);
    phase1_train_range(ens, ds, cfg, p1_done, stop, result.metrics);
    p1_done = stop;

    result.labels = pseudo_label(ens, ds, cfg.label_mode);
    result.selected_block = select_block(ens, result.labels, ds);
    result.phase1_encoder = ens.blocks[result.selected_block];
    phase2_train(ens.blocks[result.selected_block], result.labels, ds, cfg,
                 cfg.progressive_phase2_period, cfg.progressive_phase2_period,
                 /*allow_freeze=*/false, p2_done,
                 static_cast<std::int64_t>(result.selected_block),
                 result.metrics);
    p2_done += cfg.progressive_phase2_period;
  }
  result.final_encoder = ens.blocks[result.selected_block];
  result.ensemble = std::move(ens);
  return result;
}

std::string metrics_to_jsonl(const std::vector<MetricsRecord>& records) {
  std::string out;
  for (const auto& rec : records) {
    nlohmann::json j;
    j["phase"] = rec.phase;
    j["epoch"] = rec.epoch;
    j["block"] = rec.block;
    j["loss"] = rec.loss;
    j["lr"] = rec.lr;
    j["frozen_layers"] = rec.frozen_layers;
    j["wall_ms"] = rec.wall_ms;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string labels_to_jsonl(const std::vector<FuzzyLabel>& labels) {
  std::string out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    nlohmann::json j;
    j["index"] = i;
    if (labels[i].is_hard()) {
      j["kind"] = "hard";
      j["classes"] = {labels[i].hard_class};
      j["weights"] = {1.0};
    } else {
      j["kind"] = "soft";
      std::vector<std::uint32_t> classes;
      std::vector<double> weights;
      for (const auto& [cls, w] : labels[i].memberships) {
        classes.push_back(cls);
        weights.push_back(w);
      }
      j["classes"] = classes;
      j["weights"] = weights;
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace fussl
