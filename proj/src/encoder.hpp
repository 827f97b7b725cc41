#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "numerics.hpp"

namespace fussl {

enum class Activation { kNone, kRelu };

struct LayerSpec {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  bool has_batchnorm = false;
  Activation activation = Activation::kNone;
};

// One linear layer with optional batchnorm + activation.
struct Layer {
  LayerSpec spec;
  Matrix weight;  // out_dim x in_dim
  Matrix bias;    // 1 x out_dim
  // Batchnorm parameters and running statistics (1 x out_dim, bn only).
  Matrix bn_gamma, bn_beta, bn_running_mean, bn_running_var;
  bool trainable = true;
};

// Shape of a full encoder: MLP backbone, projector head, optional
// predictor head (the predictor input/output dims must match the
// projector output, so its output can be compared against a target
// projection).
struct EncoderSpec {
  std::vector<LayerSpec> backbone;
  std::vector<LayerSpec> projector;
  std::vector<LayerSpec> predictor;  // may be empty
};

struct EncoderParams {
  std::vector<Layer> backbone;
  std::vector<Layer> projector;
  std::vector<Layer> predictor;
  double bn_momentum = 0.9;
  // Bumped on every mutation; pairs a forward pass with its backward.
  std::uint64_t version = 0;

  bool has_predictor() const { return !predictor.empty(); }
  std::size_t input_dim() const { return backbone.front().spec.in_dim; }
  std::size_t backbone_out_dim() const { return backbone.back().spec.out_dim; }
  std::size_t projector_out_dim() const { return projector.back().spec.out_dim; }
};

enum class ForwardMode { kTrain, kEval };

// Which head the output gradient attaches to in backward().
enum class OutputTap { kProjector, kPredictor };

// Cached intermediates of one layer, kept for the backward pass.
struct LayerCache {
  Matrix input;
  Matrix lin_out;            // after weights + bias
  Matrix bn_xhat;            // normalized pre-scale values (bn only)
  std::vector<double> bn_invstd;  // per-feature 1/sqrt(var + eps)
  Matrix act_in;             // input of the activation
  Matrix output;
};

struct Activations {
  std::vector<LayerCache> backbone, projector, predictor;
  Matrix backbone_out;
  Matrix projector_out;
  std::optional<Matrix> predictor_out;
  ForwardMode mode = ForwardMode::kEval;
  std::uint64_t params_version = 0;
};

struct LayerGrads {
  Matrix weight, bias, bn_gamma, bn_beta;
};

struct Gradients {
  std::vector<LayerGrads> backbone, projector, predictor;
  Matrix input;
};

// Deterministic initialization: weights uniform in
// [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero, bn gamma 1 / beta 0,
// running stats (0, 1). Same (spec, seed) gives bit-identical parameters.
EncoderParams init_encoder(const EncoderSpec& spec, std::uint64_t seed);

// Train mode uses batch statistics and updates the running ones; it is the
// only mode that produces activations usable by backward().
Activations forward(EncoderParams& params, const Matrix& x, ForwardMode mode);

// Read-only eval pass (batchnorm uses running statistics).
Activations forward_eval(const EncoderParams& params, const Matrix& x);

// Gradients of every trainable parameter and of the input given the
// gradient at the tapped head output. Frozen layers propagate input
// gradients but report zero parameter gradients. Activations must come
// from a train-mode forward on the same (unmutated) parameters.
Gradients backward(const EncoderParams& params, const Activations& acts,
                   const Matrix& output_grad,
                   OutputTap tap = OutputTap::kProjector);

// Layers before `boundary` (an index into the backbone) become
// untrainable; later backbone layers and both heads become trainable.
void set_freeze(EncoderParams& params, std::size_t boundary);

std::size_t frozen_layer_count(const EncoderParams& params);

// Exact equality of all parameter and running-stat bytes.
bool params_bitwise_equal(const EncoderParams& a, const EncoderParams& b);

}  // namespace fussl
