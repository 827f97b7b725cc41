#include "optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace fussl {

namespace {

LayerMoments make_moments(const Layer& layer) {
  LayerMoments m;
  m.weight_m = Matrix(layer.weight.rows, layer.weight.cols);
  m.weight_v = Matrix(layer.weight.rows, layer.weight.cols);
  m.bias_m = Matrix(1, layer.bias.cols);
  m.bias_v = Matrix(1, layer.bias.cols);
  if (layer.spec.has_batchnorm) {
    m.bn_gamma_m = Matrix(1, layer.bn_gamma.cols);
    m.bn_gamma_v = Matrix(1, layer.bn_gamma.cols);
    m.bn_beta_m = Matrix(1, layer.bn_beta.cols);
    m.bn_beta_v = Matrix(1, layer.bn_beta.cols);
  }
  return m;
}

void update_tensor(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v,
                   const AdamHyper& h, double bc1, double bc2) {
  if (!param.same_shape(grad)) {
    throw std::invalid_argument("adam_step: gradient shape mismatch");
  }
  for (std::size_t i = 0; i < param.data.size(); ++i) {
    const double g = grad.data[i];
    m.data[i] = h.beta1 * m.data[i] + (1.0 - h.beta1) * g;
    v.data[i] = h.beta2 * v.data[i] + (1.0 - h.beta2) * g * g;
    const double mhat = m.data[i] / bc1;
    const double vhat = v.data[i] / bc2;
    param.data[i] -= h.lr * (mhat / (std::sqrt(vhat) + h.eps) +
                             h.weight_decay * param.data[i]);
  }
}

void update_section(std::vector<Layer>& layers,
                    const std::vector<LayerGrads>& grads,
                    std::vector<LayerMoments>& moments, const AdamHyper& h,
                    double bc1, double bc2) {
  if (layers.size() != grads.size() || layers.size() != moments.size()) {
    throw std::invalid_argument("adam_step: section size mismatch");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Layer& layer = layers[i];
    if (!layer.trainable) continue;
    update_tensor(layer.weight, grads[i].weight, moments[i].weight_m,
                  moments[i].weight_v, h, bc1, bc2);
    update_tensor(layer.bias, grads[i].bias, moments[i].bias_m,
                  moments[i].bias_v, h, bc1, bc2);
    if (layer.spec.has_batchnorm) {
      update_tensor(layer.bn_gamma, grads[i].bn_gamma, moments[i].bn_gamma_m,
                    moments[i].bn_gamma_v, h, bc1, bc2);
      update_tensor(layer.bn_beta, grads[i].bn_beta, moments[i].bn_beta_m,
                    moments[i].bn_beta_v, h, bc1, bc2);
    }
  }
}

}  // namespace

AdamState make_adam_state(const EncoderParams& params, const AdamHyper& hyper) {
  AdamState state;
  state.hyper = hyper;
  for (const auto& layer : params.backbone) state.backbone.push_back(make_moments(layer));
  for (const auto& layer : params.projector) state.projector.push_back(make_moments(layer));
  for (const auto& layer : params.predictor) state.predictor.push_back(make_moments(layer));
  return state;
}

void adam_step(EncoderParams& params, const Gradients& grads, AdamState& state) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.hyper.beta1,
                                    static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.hyper.beta2,
                                    static_cast<double>(state.step));
  update_section(params.backbone, grads.backbone, state.backbone, state.hyper,
                 bc1, bc2);
  update_section(params.projector, grads.projector, state.projector,
                 state.hyper, bc1, bc2);
  update_section(params.predictor, grads.predictor, state.predictor,
                 state.hyper, bc1, bc2);
  ++params.version;
}

}  // namespace fussl
