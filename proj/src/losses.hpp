#pragma once

#include <cstddef>
#include <vector>

#include "numerics.hpp"

namespace fussl {

// Value and analytic gradients of one objective evaluation. `grads` holds
// one matrix per embedding-batch input, in argument order, each shaped like
// its input. All losses mean-reduce over the batch.
struct LossOutput {
  double value = 0.0;
  std::vector<Matrix> grads;
};

enum class TripletMode {
  kStandard,  // max(0, z_i.z_k - z_i.z_j + margin)
  kAsWritten  // max(0, z_i.z_j - z_i.z_k + margin)
};

struct LossConfig {
  double temperature = 0.5;
  double margin = 1.0;
  double lambda = 5e-3;
  double whiten_eps = 1e-6;
  TripletMode triplet_mode = TripletMode::kStandard;
};

// Per-row hinge on paired (anchor, positive, negative) batches. The
// subgradient at the hinge point is 0.
LossOutput triplet_loss(const Matrix& zi, const Matrix& zj, const Matrix& zk,
                        const LossConfig& cfg);

// Per anchor: log(1 + sum_k exp(z_i.n_k - z_i.z_j)), negatives shared
// across anchors. Stabilized in log-sum-exp form.
LossOutput npair_loss(const Matrix& zi, const Matrix& zj,
                      const Matrix& negatives, const LossConfig& cfg);

// InfoNCE over N row embeddings. pair_index[i] is the positive for anchor
// i (pair_index[i] != i); the denominator runs over all n != i, so the
// positive appears in it too. Rows are L2-normalized internally and the
// gradient flows through the normalization.
LossOutput contrastive_loss(const Matrix& views,
                            const std::vector<std::size_t>& pair_index,
                            const LossConfig& cfg);

// Mean over rows of 2 - 2*cos(zi_r, zj_r); value in [0, 4]. A row with
// norm below the internal guard contributes value 2 and zero gradient.
LossOutput cosine_pair_loss(const Matrix& zi, const Matrix& zj);

// cosine_pair_loss(predictor_output, target) under the stop-gradient
// contract: the grads entry for `target` is identically zero, and `online`
// receives no direct gradient (it feeds the loss only through the
// predictor network). Callers symmetrize over swapped views.
LossOutput noncontrastive_loss(const Matrix& online, const Matrix& target,
                               const Matrix& predictor_output);

// Whitens each batch (cov = I hard constraint), then cosine-pairs the
// whitened rows. The whitening transform of each side is treated as a
// constant linear map inside one evaluation, so the gradient does not flow
// through the Cholesky factor. Requires rows > cols on both batches.
LossOutput wmse_loss(const Matrix& zi, const Matrix& zj,
                     const LossConfig& cfg);

// Redundancy-reduction objective on the cross-correlation C of
// column-standardized batches:
//   sum_i (1 - C_ii)^2 + lambda * sum_{i != j} C_ij^2.
// Gradient flows through the standardization and C.
LossOutput barlow_twins_loss(const Matrix& za, const Matrix& zb,
                             const LossConfig& cfg);

}  // namespace fussl
