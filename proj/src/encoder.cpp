#include "encoder.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "error.hpp"
#include "rng.hpp"

namespace fussl {

namespace {

// Small enough that train-mode output variance sits within 1e-6 of 1 for
// any feature variance >= 1e-4; doubles have plenty of headroom.
constexpr double kBnEps = 1e-10;

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void check_chain(const std::vector<LayerSpec>& specs, const char* section) {
  for (std::size_t i = 0; i < specs.size(); ++i) {
    require(specs[i].in_dim >= 1 && specs[i].out_dim >= 1,
            std::string(section) + ": layer dims must be >= 1");
    if (i > 0) {
      require(specs[i].in_dim == specs[i - 1].out_dim,
              std::string(section) + ": layer " + std::to_string(i) +
                  " input dim does not chain");
    }
  }
}

Layer make_layer(const LayerSpec& spec, RngStream& rng) {
  Layer layer;
  layer.spec = spec;
  layer.weight = Matrix(spec.out_dim, spec.in_dim);
  const double bound = 1.0 / std::sqrt(static_cast<double>(spec.in_dim));
  for (auto& w : layer.weight.data) w = rng.uniform(-bound, bound);
  layer.bias = Matrix(1, spec.out_dim);
  if (spec.has_batchnorm) {
    layer.bn_gamma = Matrix(1, spec.out_dim);
    layer.bn_beta = Matrix(1, spec.out_dim);
    layer.bn_running_mean = Matrix(1, spec.out_dim);
    layer.bn_running_var = Matrix(1, spec.out_dim);
    for (auto& g : layer.bn_gamma.data) g = 1.0;
    for (auto& v : layer.bn_running_var.data) v = 1.0;
  }
  return layer;
}

// x (B x in) * W^T + b. One contiguous dot product per output unit.
Matrix linear_forward(const Layer& layer, const Matrix& x) {
  const std::size_t b = x.rows, in = layer.spec.in_dim, out = layer.spec.out_dim;
  Matrix y(b, out);
  for (std::size_t r = 0; r < b; ++r) {
    const double* xr = x.row(r);
    double* yr = y.row(r);
    for (std::size_t o = 0; o < out; ++o) {
      const double* wrow = layer.weight.row(o);
      double s = 0.0;
      for (std::size_t i = 0; i < in; ++i) s += xr[i] * wrow[i];
      yr[o] = s + layer.bias.data[o];
    }
  }
  return y;
}

Matrix layer_forward(Layer& layer, const Matrix& x, ForwardMode mode,
                     LayerCache* cache, bool update_running,
                     double bn_momentum) {
  Matrix lin = linear_forward(layer, x);
  Matrix act_in;
  if (layer.spec.has_batchnorm) {
    const std::size_t b = lin.rows, out = layer.spec.out_dim;
    Matrix xhat(b, out);
    std::vector<double> invstd(out);
    if (mode == ForwardMode::kTrain) {
      require(b >= 2, "forward: batchnorm in train mode needs batch >= 2");
      for (std::size_t o = 0; o < out; ++o) {
        double mean = 0.0;
        for (std::size_t r = 0; r < b; ++r) mean += lin(r, o);
        mean /= static_cast<double>(b);
        double var = 0.0;
        for (std::size_t r = 0; r < b; ++r) {
          const double v = lin(r, o) - mean;
          var += v * v;
        }
        var /= static_cast<double>(b);
        invstd[o] = 1.0 / std::sqrt(var + kBnEps);
        for (std::size_t r = 0; r < b; ++r) {
          xhat(r, o) = (lin(r, o) - mean) * invstd[o];
        }
        if (update_running) {
          const double m = layer.bn_running_mean.data[o];
          const double v = layer.bn_running_var.data[o];
          layer.bn_running_mean.data[o] =
              bn_momentum * m + (1.0 - bn_momentum) * mean;
          layer.bn_running_var.data[o] =
              bn_momentum * v + (1.0 - bn_momentum) * var;
        }
      }
    } else {
      for (std::size_t o = 0; o < out; ++o) {
        const double mean = layer.bn_running_mean.data[o];
        const double var = layer.bn_running_var.data[o];
        invstd[o] = 1.0 / std::sqrt(var + kBnEps);
        for (std::size_t r = 0; r < b; ++r) {
          xhat(r, o) = (lin(r, o) - mean) * invstd[o];
        }
      }
    }
    act_in = Matrix(b, out);
    for (std::size_t r = 0; r < b; ++r) {
      for (std::size_t o = 0; o < out; ++o) {
        act_in(r, o) =
            layer.bn_gamma.data[o] * xhat(r, o) + layer.bn_beta.data[o];
      }
    }
    if (cache != nullptr) {
      cache->bn_xhat = std::move(xhat);
      cache->bn_invstd = std::move(invstd);
    }
  } else {
    act_in = lin;
  }

  Matrix out = act_in;
  if (layer.spec.activation == Activation::kRelu) {
    for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
  }
  if (cache != nullptr) {
    cache->input = x;
    cache->lin_out = std::move(lin);
    cache->act_in = std::move(act_in);
    cache->output = out;
  }
  return out;
}

// dY -> gradients of one layer; returns dX.
Matrix layer_backward(const Layer& layer, const LayerCache& cache,
                      const Matrix& dy, LayerGrads& grads) {
  const std::size_t b = dy.rows, out = layer.spec.out_dim,
                    in = layer.spec.in_dim;

  Matrix d_act = dy;
  if (layer.spec.activation == Activation::kRelu) {
    for (std::size_t i = 0; i < d_act.data.size(); ++i) {
      // Subgradient 0 at the kink.
      if (cache.act_in.data[i] <= 0.0) d_act.data[i] = 0.0;
    }
  }

  Matrix d_lin;
  if (layer.spec.has_batchnorm) {
    Matrix d_gamma(1, out), d_beta(1, out);
    Matrix d_xhat(b, out);
    for (std::size_t r = 0; r < b; ++r) {
      for (std::size_t o = 0; o < out; ++o) {
        d_gamma.data[o] += d_act(r, o) * cache.bn_xhat(r, o);
        d_beta.data[o] += d_act(r, o);
        d_xhat(r, o) = d_act(r, o) * layer.bn_gamma.data[o];
      }
    }
    // Exact batch-statistics backward:
    // dlin = invstd * (dxhat - mean(dxhat) - xhat * mean(dxhat .* xhat)).
    d_lin = Matrix(b, out);
    const double inv_b = 1.0 / static_cast<double>(b);
    for (std::size_t o = 0; o < out; ++o) {
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (std::size_t r = 0; r < b; ++r) {
        sum_dxhat += d_xhat(r, o);
        sum_dxhat_xhat += d_xhat(r, o) * cache.bn_xhat(r, o);
      }
      const double mean_dxhat = sum_dxhat * inv_b;
      const double mean_dxhat_xhat = sum_dxhat_xhat * inv_b;
      for (std::size_t r = 0; r < b; ++r) {
        d_lin(r, o) = cache.bn_invstd[o] *
                      (d_xhat(r, o) - mean_dxhat -
                       cache.bn_xhat(r, o) * mean_dxhat_xhat);
      }
    }
    if (layer.trainable) {
      grads.bn_gamma = std::move(d_gamma);
      grads.bn_beta = std::move(d_beta);
    }
  } else {
    d_lin = std::move(d_act);
  }

  if (layer.trainable) {
    grads.weight = Matrix(out, in);
    grads.bias = Matrix(1, out);
    for (std::size_t r = 0; r < b; ++r) {
      const double* xr = cache.input.row(r);
      const double* gr = d_lin.row(r);
      for (std::size_t o = 0; o < out; ++o) {
        const double g = gr[o];
        grads.bias.data[o] += g;
        if (g == 0.0) continue;
        for (std::size_t i = 0; i < in; ++i) grads.weight(o, i) += g * xr[i];
      }
    }
  }

  Matrix dx(b, in);
  for (std::size_t r = 0; r < b; ++r) {
    const double* gr = d_lin.row(r);
    double* dr = dx.row(r);
    for (std::size_t o = 0; o < out; ++o) {
      const double g = gr[o];
      if (g == 0.0) continue;
      const double* wrow = layer.weight.row(o);
      for (std::size_t i = 0; i < in; ++i) dr[i] += g * wrow[i];
    }
  }
  return dx;
}

std::vector<LayerGrads> empty_grads(const std::vector<Layer>& layers) {
  std::vector<LayerGrads> grads(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& spec = layers[i].spec;
    grads[i].weight = Matrix(spec.out_dim, spec.in_dim);
    grads[i].bias = Matrix(1, spec.out_dim);
    if (spec.has_batchnorm) {
      grads[i].bn_gamma = Matrix(1, spec.out_dim);
      grads[i].bn_beta = Matrix(1, spec.out_dim);
    }
  }
  return grads;
}

Matrix section_backward(const std::vector<Layer>& layers,
                        const std::vector<LayerCache>& caches,
                        const Matrix& dy, std::vector<LayerGrads>& grads) {
  Matrix g = dy;
  for (std::size_t i = layers.size(); i-- > 0;) {
    g = layer_backward(layers[i], caches[i], g, grads[i]);
  }
  return g;
}

bool matrix_bitwise_equal(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) return false;
  return a.data.empty() ||
         std::memcmp(a.data.data(), b.data.data(),
                     a.data.size() * sizeof(double)) == 0;
}

bool layer_bitwise_equal(const Layer& a, const Layer& b) {
  return matrix_bitwise_equal(a.weight, b.weight) &&
         matrix_bitwise_equal(a.bias, b.bias) &&
         matrix_bitwise_equal(a.bn_gamma, b.bn_gamma) &&
         matrix_bitwise_equal(a.bn_beta, b.bn_beta) &&
         matrix_bitwise_equal(a.bn_running_mean, b.bn_running_mean) &&
         matrix_bitwise_equal(a.bn_running_var, b.bn_running_var);
}

}  // namespace

EncoderParams init_encoder(const EncoderSpec& spec, std::uint64_t seed) {
  require(!spec.backbone.empty(), "init_encoder: empty backbone spec");
  require(!spec.projector.empty(), "init_encoder: empty projector spec");
  check_chain(spec.backbone, "backbone");
  check_chain(spec.projector, "projector");
  require(spec.projector.front().in_dim == spec.backbone.back().out_dim,
          "init_encoder: projector input does not match backbone output");
  if (!spec.predictor.empty()) {
    check_chain(spec.predictor, "predictor");
    require(spec.predictor.front().in_dim == spec.projector.back().out_dim &&
                spec.predictor.back().out_dim == spec.projector.back().out_dim,
            "init_encoder: predictor must map projector dim to itself");
  }

  RngStream rng = RngStream::derive(seed, "init");
  EncoderParams params;
  for (const auto& s : spec.backbone) params.backbone.push_back(make_layer(s, rng));
  for (const auto& s : spec.projector) params.projector.push_back(make_layer(s, rng));
  for (const auto& s : spec.predictor) params.predictor.push_back(make_layer(s, rng));
  return params;
}

Activations forward(EncoderParams& params, const Matrix& x, ForwardMode mode) {
  require(x.cols == params.input_dim(),
          "forward: input dim " + std::to_string(x.cols) + " != " +
              std::to_string(params.input_dim()));
  const bool train = mode == ForwardMode::kTrain;

  Activations acts;
  acts.mode = mode;
  acts.params_version = params.version;
  acts.backbone.resize(params.backbone.size());
  acts.projector.resize(params.projector.size());
  acts.predictor.resize(params.predictor.size());

  Matrix h = x;
  for (std::size_t i = 0; i < params.backbone.size(); ++i) {
    h = layer_forward(params.backbone[i], h, mode, &acts.backbone[i], train,
                      params.bn_momentum);
  }
  acts.backbone_out = h;
  for (std::size_t i = 0; i < params.projector.size(); ++i) {
    h = layer_forward(params.projector[i], h, mode, &acts.projector[i], train,
                      params.bn_momentum);
  }
  acts.projector_out = h;
  if (params.has_predictor()) {
    for (std::size_t i = 0; i < params.predictor.size(); ++i) {
      h = layer_forward(params.predictor[i], h, mode, &acts.predictor[i],
                        train, params.bn_momentum);
    }
    acts.predictor_out = h;
  }
  return acts;
}

Activations forward_eval(const EncoderParams& params, const Matrix& x) {
  // Eval never touches running statistics, so the const_cast stays safe.
  return forward(const_cast<EncoderParams&>(params), x, ForwardMode::kEval);
}

Gradients backward(const EncoderParams& params, const Activations& acts,
                   const Matrix& output_grad, OutputTap tap) {
  require(acts.mode == ForwardMode::kTrain,
          "backward: activations must come from a train-mode forward");
  require(acts.params_version == params.version,
          "backward: stale activations (parameters changed since forward)");
  require(acts.backbone.size() == params.backbone.size() &&
              acts.projector.size() == params.projector.size() &&
              acts.predictor.size() == params.predictor.size(),
          "backward: activations do not match this encoder");

  Gradients grads;
  grads.backbone = empty_grads(params.backbone);
  grads.projector = empty_grads(params.projector);
  grads.predictor = empty_grads(params.predictor);

  Matrix g = output_grad;
  if (tap == OutputTap::kPredictor) {
    require(params.has_predictor(), "backward: encoder has no predictor");
    require(g.same_shape(*acts.predictor_out),
            "backward: gradient shape does not match predictor output");
    g = section_backward(params.predictor, acts.predictor, g, grads.predictor);
  } else {
    require(g.same_shape(acts.projector_out),
            "backward: gradient shape does not match projector output");
  }
  g = section_backward(params.projector, acts.projector, g, grads.projector);
  grads.input = section_backward(params.backbone, acts.backbone, g, grads.backbone);
  return grads;
}

void set_freeze(EncoderParams& params, std::size_t boundary) {
  require(boundary <= params.backbone.size(),
          "set_freeze: boundary " + std::to_string(boundary) +
              " out of range (backbone has " +
              std::to_string(params.backbone.size()) + " layers)");
  for (std::size_t i = 0; i < params.backbone.size(); ++i) {
    params.backbone[i].trainable = i >= boundary;
  }
  for (auto& layer : params.projector) layer.trainable = true;
  for (auto& layer : params.predictor) layer.trainable = true;
  ++params.version;
}

std::size_t frozen_layer_count(const EncoderParams& params) {
  std::size_t n = 0;
  for (const auto& layer : params.backbone) n += layer.trainable ? 0 : 1;
  for (const auto& layer : params.projector) n += layer.trainable ? 0 : 1;
  for (const auto& layer : params.predictor) n += layer.trainable ? 0 : 1;
  return n;
}

bool params_bitwise_equal(const EncoderParams& a, const EncoderParams& b) {
  if (a.backbone.size() != b.backbone.size() ||
      a.projector.size() != b.projector.size() ||
      a.predictor.size() != b.predictor.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.backbone.size(); ++i) {
    if (!layer_bitwise_equal(a.backbone[i], b.backbone[i])) return false;
  }
  for (std::size_t i = 0; i < a.projector.size(); ++i) {
    if (!layer_bitwise_equal(a.projector[i], b.projector[i])) return false;
  }
  for (std::size_t i = 0; i < a.predictor.size(); ++i) {
    if (!layer_bitwise_equal(a.predictor[i], b.predictor[i])) return false;
  }
  return true;
}

}  // namespace fussl
