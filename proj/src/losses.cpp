#include "losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "error.hpp"

namespace fussl {

namespace {

constexpr double kNormGuard = 1e-12;

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void check_config(const LossConfig& cfg) {
  require(cfg.temperature > 0.0, "loss config: temperature must be positive");
  require(cfg.lambda > 0.0, "loss config: lambda must be positive");
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double row_norm(const double* a, std::size_t n) {
  return std::sqrt(dot(a, a, n));
}

// Adjoint of column centering.
void subtract_column_means_inplace(Matrix& g) {
  for (std::size_t c = 0; c < g.cols; ++c) {
    double m = 0.0;
    for (std::size_t r = 0; r < g.rows; ++r) m += g(r, c);
    m /= static_cast<double>(g.rows);
    for (std::size_t r = 0; r < g.rows; ++r) g(r, c) -= m;
  }
}

// Value and per-side row gradients of mean_r [2 - 2 cos(a_r, b_r)].
// Rows with norm under the guard contribute value 2 and zero gradient.
double cosine_pair_core(const Matrix& zi, const Matrix& zj, Matrix* gi,
                        Matrix* gj) {
  const std::size_t n = zi.rows, d = zi.cols;
  const double inv_n = 1.0 / static_cast<double>(n);
  double value = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double* a = zi.row(r);
    const double* b = zj.row(r);
    const double na = row_norm(a, d);
    const double nb = row_norm(b, d);
    if (na < kNormGuard || nb < kNormGuard) {
      value += 2.0;
      continue;
    }
    const double cosab = dot(a, b, d) / (na * nb);
    value += 2.0 - 2.0 * cosab;
    if (gi != nullptr) {
      double* ga = gi->row(r);
      double* gb = gj->row(r);
      for (std::size_t c = 0; c < d; ++c) {
        ga[c] = -2.0 * inv_n * (b[c] / (na * nb) - cosab * a[c] / (na * na));
        gb[c] = -2.0 * inv_n * (a[c] / (na * nb) - cosab * b[c] / (nb * nb));
      }
    }
  }
  return value * inv_n;
}

}  // namespace

LossOutput triplet_loss(const Matrix& zi, const Matrix& zj, const Matrix& zk,
                        const LossConfig& cfg) {
  check_config(cfg);
  require(zi.same_shape(zj) && zi.same_shape(zk),
          "triplet_loss: batch shapes differ");
  require(zi.rows >= 1, "triplet_loss: empty batch");

  const std::size_t n = zi.rows, d = zi.cols;
  const double inv_n = 1.0 / static_cast<double>(n);
  const double sign = cfg.triplet_mode == TripletMode::kAsWritten ? 1.0 : -1.0;

  LossOutput out;
  out.grads = {Matrix(n, d), Matrix(n, d), Matrix(n, d)};
  for (std::size_t r = 0; r < n; ++r) {
    const double* a = zi.row(r);
    const double* p = zj.row(r);
    const double* q = zk.row(r);
    // sign=+1 evaluates z_i.z_j - z_i.z_k + margin, sign=-1 the reverse.
    const double h = sign * (dot(a, p, d) - dot(a, q, d)) + cfg.margin;
    if (h <= 0.0) continue;
    out.value += h;
    double* ga = out.grads[0].row(r);
    double* gp = out.grads[1].row(r);
    double* gq = out.grads[2].row(r);
    for (std::size_t c = 0; c < d; ++c) {
      ga[c] = sign * inv_n * (p[c] - q[c]);
      gp[c] = sign * inv_n * a[c];
      gq[c] = -sign * inv_n * a[c];
    }
  }
  out.value *= inv_n;
  return out;
}

LossOutput npair_loss(const Matrix& zi, const Matrix& zj,
                      const Matrix& negatives, const LossConfig& cfg) {
  check_config(cfg);
  require(zi.same_shape(zj), "npair_loss: anchor/positive shapes differ");
  require(negatives.rows >= 1, "npair_loss: empty negatives");
  require(negatives.cols == zi.cols, "npair_loss: negative dim mismatch");

  const std::size_t n = zi.rows, d = zi.cols, k = negatives.rows;
  const double inv_n = 1.0 / static_cast<double>(n);

  LossOutput out;
  out.grads = {Matrix(n, d), Matrix(n, d), Matrix(k, d)};
  std::vector<double> s(k);
  for (std::size_t r = 0; r < n; ++r) {
    const double* a = zi.row(r);
    const double* p = zj.row(r);
    const double ap = dot(a, p, d);
    double m = 0.0;  // log-sum-exp shift; the implicit 1 is exp(0)
    for (std::size_t t = 0; t < k; ++t) {
      s[t] = dot(a, negatives.row(t), d) - ap;
      m = std::max(m, s[t]);
    }
    double denom = std::exp(-m);
    for (std::size_t t = 0; t < k; ++t) denom += std::exp(s[t] - m);
    out.value += inv_n * (m + std::log(denom));

    double* ga = out.grads[0].row(r);
    double* gp = out.grads[1].row(r);
    double p_total = 0.0;
    for (std::size_t t = 0; t < k; ++t) {
      const double pt = std::exp(s[t] - m) / denom;
      p_total += pt;
      const double* q = negatives.row(t);
      double* gq = out.grads[2].row(t);
      for (std::size_t c = 0; c < d; ++c) {
        ga[c] += inv_n * pt * (q[c] - p[c]);
        gq[c] += inv_n * pt * a[c];
      }
    }
    for (std::size_t c = 0; c < d; ++c) gp[c] -= inv_n * p_total * a[c];
  }
  return out;
}

LossOutput contrastive_loss(const Matrix& views,
                            const std::vector<std::size_t>& pair_index,
                            const LossConfig& cfg) {
  check_config(cfg);
  const std::size_t n = views.rows, d = views.cols;
  require(n >= 3, "contrastive_loss: need at least 3 views");
  require(pair_index.size() == n, "contrastive_loss: pair_index size mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    require(pair_index[i] < n && pair_index[i] != i,
            "contrastive_loss: invalid pair mapping at anchor " +
                std::to_string(i));
  }

  const Matrix u = l2_normalize_rows(views, kNormGuard);
  const double inv_tau = 1.0 / cfg.temperature;
  const double inv_n = 1.0 / static_cast<double>(n);

  // Pairwise similarity logits s_ij = u_i.u_j / tau.
  Matrix s(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      s(i, j) = dot(u.row(i), u.row(j), d) * inv_tau;
    }
  }

  LossOutput out;
  Matrix gs(n, n);  // dL/ds, zero diagonal
  for (std::size_t i = 0; i < n; ++i) {
    double m = -1e300;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) m = std::max(m, s(i, j));
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) denom += std::exp(s(i, j) - m);
    }
    out.value += inv_n * (-s(i, pair_index[i]) + m + std::log(denom));
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double g = std::exp(s(i, j) - m) / denom;
      if (j == pair_index[i]) g -= 1.0;
      gs(i, j) = g * inv_n;
    }
  }

  // s depends on u_i and u_j, so dL/dU = (G + G^T) U / tau.
  Matrix gu(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double g = (gs(i, j) + gs(j, i)) * inv_tau;
      if (g == 0.0) continue;
      const double* uj = u.row(j);
      double* gi = gu.row(i);
      for (std::size_t c = 0; c < d; ++c) gi[c] += g * uj[c];
    }
  }

  // Through the row normalization.
  Matrix gz(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    const double norm = row_norm(views.row(r), d);
    const double* gr = gu.row(r);
    double* dst = gz.row(r);
    if (norm < kNormGuard) {
      for (std::size_t c = 0; c < d; ++c) dst[c] = gr[c] / kNormGuard;
      continue;
    }
    const double* ur = u.row(r);
    const double gdotu = dot(gr, ur, d);
    for (std::size_t c = 0; c < d; ++c) dst[c] = (gr[c] - gdotu * ur[c]) / norm;
  }

  out.grads = {std::move(gz)};
  return out;
}

LossOutput cosine_pair_loss(const Matrix& zi, const Matrix& zj) {
  require(zi.same_shape(zj), "cosine_pair_loss: shape mismatch");
  require(zi.rows >= 1, "cosine_pair_loss: empty batch");
  LossOutput out;
  out.grads = {Matrix(zi.rows, zi.cols), Matrix(zi.rows, zi.cols)};
  out.value = cosine_pair_core(zi, zj, &out.grads[0], &out.grads[1]);
  return out;
}

LossOutput noncontrastive_loss(const Matrix& online, const Matrix& target,
                               const Matrix& predictor_output) {
  require(predictor_output.same_shape(target),
          "noncontrastive_loss: predictor/target shape mismatch");
  LossOutput out;
  out.grads = {Matrix(online.rows, online.cols),
               Matrix(target.rows, target.cols),
               Matrix(predictor_output.rows, predictor_output.cols)};
  Matrix unused(target.rows, target.cols);
  out.value = cosine_pair_core(predictor_output, target, &out.grads[2], &unused);
  return out;
}

LossOutput wmse_loss(const Matrix& zi, const Matrix& zj,
                     const LossConfig& cfg) {
  check_config(cfg);
  require(zi.same_shape(zj), "wmse_loss: shape mismatch");
  require(zi.rows > zi.cols,
          "wmse_loss: whitening needs more rows than columns");

  const WhitenReport wa = whiten_batch(zi, cfg.whiten_eps);
  const WhitenReport wb = whiten_batch(zj, cfg.whiten_eps);

  Matrix gwa(zi.rows, zi.cols), gwb(zi.rows, zi.cols);
  LossOutput out;
  out.value = cosine_pair_core(wa.whitened, wb.whitened, &gwa, &gwb);

  // Frozen-transform rule: d(center(z) T)/dz with T constant, i.e. apply
  // T^T then the centering adjoint.
  Matrix gi = matmul(gwa, transpose(wa.transform));
  Matrix gj = matmul(gwb, transpose(wb.transform));
  subtract_column_means_inplace(gi);
  subtract_column_means_inplace(gj);
  out.grads = {std::move(gi), std::move(gj)};
  return out;
}

LossOutput barlow_twins_loss(const Matrix& za, const Matrix& zb,
                             const LossConfig& cfg) {
  check_config(cfg);
  require(za.same_shape(zb), "barlow_twins_loss: shape mismatch");
  require(za.rows >= 2, "barlow_twins_loss: need at least 2 rows");

  const std::size_t n = za.rows, d = za.cols;
  const double inv_n = 1.0 / static_cast<double>(n);

  // Column standardization (zero mean, unit variance). The scale is
  // max(std, guard) so that exactly-unit-variance columns stay untouched.
  struct Standardized {
    Matrix x;                   // standardized batch
    std::vector<double> scale;  // per-column divisor
    std::vector<bool> guarded;  // scale pinned at the guard value
  };
  const auto standardize = [&](const Matrix& z) {
    Standardized st{Matrix(n, d), std::vector<double>(d),
                    std::vector<bool>(d, false)};
    for (std::size_t c = 0; c < d; ++c) {
      double mean = 0.0;
      for (std::size_t r = 0; r < n; ++r) mean += z(r, c);
      mean *= inv_n;
      double var = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        const double v = z(r, c) - mean;
        var += v * v;
      }
      var *= inv_n;
      double s = std::sqrt(var);
      if (s < kNormGuard) {
        s = kNormGuard;
        st.guarded[c] = true;
      }
      st.scale[c] = s;
      for (std::size_t r = 0; r < n; ++r) st.x(r, c) = (z(r, c) - mean) / s;
    }
    return st;
  };

  const Standardized sa = standardize(za);
  const Standardized sb = standardize(zb);
  const Matrix c = cross_correlation(sa.x, sb.x);

  LossOutput out;
  Matrix gc(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (i == j) {
        const double diag = 1.0 - c(i, i);
        out.value += diag * diag;
        gc(i, i) = -2.0 * diag;
      } else {
        out.value += cfg.lambda * c(i, j) * c(i, j);
        gc(i, j) = 2.0 * cfg.lambda * c(i, j);
      }
    }
  }

  // Backprop through C: with unit columns a_hat, b_hat,
  //   dC_ij/da_i = (b_hat_j - C_ij a_hat_i) / |a_i|,
  // vectorized as GA = (B_hat G^T - A_hat diag(sum_j G_ij C_ij)) / |a_i|.
  std::vector<double> norm_a(d), norm_b(d);
  const auto column_norms = [&](const Matrix& m, std::vector<double>& ns) {
    for (std::size_t cidx = 0; cidx < d; ++cidx) {
      double sq = 0.0;
      for (std::size_t r = 0; r < n; ++r) sq += m(r, cidx) * m(r, cidx);
      ns[cidx] = std::max(std::sqrt(sq), kNormGuard);
    }
  };
  column_norms(sa.x, norm_a);
  column_norms(sb.x, norm_b);

  Matrix a_hat(n, d), b_hat(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t cidx = 0; cidx < d; ++cidx) {
      a_hat(r, cidx) = sa.x(r, cidx) / norm_a[cidx];
      b_hat(r, cidx) = sb.x(r, cidx) / norm_b[cidx];
    }
  }
  std::vector<double> diag_a(d, 0.0), diag_b(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      diag_a[i] += gc(i, j) * c(i, j);
      diag_b[j] += gc(i, j) * c(i, j);
    }
  }
  Matrix ga = matmul(b_hat, transpose(gc));  // gradients w.r.t. standardized
  Matrix gb = matmul(a_hat, gc);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t cidx = 0; cidx < d; ++cidx) {
      ga(r, cidx) = (ga(r, cidx) - a_hat(r, cidx) * diag_a[cidx]) / norm_a[cidx];
      gb(r, cidx) = (gb(r, cidx) - b_hat(r, cidx) * diag_b[cidx]) / norm_b[cidx];
    }
  }

  // Backprop through the standardization, per column:
  //   g = (u - mean(u) - x_std * (u.x_std)/n) / s,
  // dropping the x_std term where the scale was pinned at the guard.
  const auto through_standardize = [&](const Standardized& st, const Matrix& u) {
    Matrix g(n, d);
    for (std::size_t cidx = 0; cidx < d; ++cidx) {
      double umean = 0.0, udotx = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        umean += u(r, cidx);
        udotx += u(r, cidx) * st.x(r, cidx);
      }
      umean *= inv_n;
      const double proj = st.guarded[cidx] ? 0.0 : udotx * inv_n;
      for (std::size_t r = 0; r < n; ++r) {
        g(r, cidx) =
            (u(r, cidx) - umean - st.x(r, cidx) * proj) / st.scale[cidx];
      }
    }
    return g;
  };

  out.grads = {through_standardize(sa, ga), through_standardize(sb, gb)};
  return out;
}

}  // namespace fussl
