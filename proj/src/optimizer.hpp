#pragma once

#include <cstdint>
#include <vector>

#include "encoder.hpp"

namespace fussl {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-6;  // decoupled
};

// First and second moments for one layer's tensors.
struct LayerMoments {
  Matrix weight_m, weight_v;
  Matrix bias_m, bias_v;
  Matrix bn_gamma_m, bn_gamma_v;
  Matrix bn_beta_m, bn_beta_v;
};

struct AdamState {
  std::uint64_t step = 0;
  AdamHyper hyper;
  std::vector<LayerMoments> backbone, projector, predictor;
};

AdamState make_adam_state(const EncoderParams& params, const AdamHyper& hyper);

// Bias-corrected Adam with decoupled weight decay. Frozen layers are
// skipped entirely, so their parameters and moments stay bit-unchanged.
void adam_step(EncoderParams& params, const Gradients& grads, AdamState& state);

}  // namespace fussl
