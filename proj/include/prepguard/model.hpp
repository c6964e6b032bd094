#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "prepguard/tensor.hpp"

namespace prepguard {

enum class LayerKind { Conv, Pool, Dense };

struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  int kernel = 0;     // conv: kernel size (odd)
  int out_units = 0;  // conv: output channels; dense: output units
  int pool = 0;       // pool: window and stride
  bool relu = false;
};

struct Shape3 {
  int h = 0, w = 0, c = 0;
  int size() const { return h * w * c; }
  bool operator==(const Shape3&) const = default;
};

// Weights plus architecture descriptor for the small convolutional classifier.
// Conv weights are stored (out_channel, ky, kx, in_channel) row-major, dense
// weights (out, in) row-major; pool layers carry no parameters.
struct ModelParams {
  Shape3 input_shape;
  int class_count = 0;
  std::vector<LayerSpec> layers;
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
};

// Architecture text, e.g. "input 32x32x3;conv 3x8,relu;pool 2;conv 3x16,relu;pool 2;dense 10".
std::string format_architecture(const ModelParams& params);
ModelParams parse_architecture(const std::string& text);

// conv 3x3x8 -> relu -> pool 2 -> conv 3x3x16 -> relu -> pool 2 -> dense K
ModelParams default_architecture(Shape3 input, int class_count);
void init_weights(ModelParams& params, std::uint64_t seed);

// Output shape after every layer; throws RejectedInput if shapes do not chain.
std::vector<Shape3> layer_output_shapes(const ModelParams& params);

Logits forward(const ModelParams& params, const ImageTensor& x);
int predict(const ModelParams& params, const ImageTensor& x);  // ties -> lowest index
std::vector<double> softmax(const Logits& logits);
double cross_entropy(const Logits& logits, int label);

struct Gradients {
  std::vector<std::vector<double>> weights, biases;
  InputGradient input;
  double loss = 0.0;
  Logits logits;
};

// Full backward pass of cross_entropy(forward(x), label).
Gradients backward(const ModelParams& params, const LabeledExample& example,
                   bool want_param_grads = true, bool want_input_grad = true);

InputGradient grad_input(const ModelParams& params, const LabeledExample& example);

// d(sum_k coeff[k] * Z_k)/dx. Used by attacks that chase logit differences.
InputGradient grad_logit_combo(const ModelParams& params, const ImageTensor& x,
                               const std::vector<double>& coeff);

// One forward pass, then one input-gradient backward per seed row. seeds_fn
// sees the logits of this pass and returns the dJ/dlogits rows to propagate.
std::vector<InputGradient> grad_logit_combos(
    const ModelParams& params, const ImageTensor& x,
    const std::function<std::vector<std::vector<double>>(const Logits&)>& seeds_fn,
    Logits* logits_out = nullptr);

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  double learning_rate = 0.005;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  bool flip_augmentation = true;
};

// Mini-batch SGD with momentum on cross-entropy. Deterministic per seed.
ModelParams train(const std::vector<LabeledExample>& dataset, int class_count,
                  const TrainConfig& cfg);

// Max relative disagreement between backprop and central finite differences
// over a seeded sample of input pixels. Probes whose half-step estimate
// disagrees straddle an activation kink and are resampled: the difference
// quotient is meaningless there, while real backprop defects show on every
// pixel.
double gradient_check(const ModelParams& params, const LabeledExample& example,
                      double h);

std::vector<std::uint8_t> serialize_model(const ModelParams& params);
ModelParams deserialize_model(const std::vector<std::uint8_t>& bytes);
void save_model(const ModelParams& params, const std::string& path);
ModelParams load_model(const std::string& path);

std::uint64_t fnv1a64(const void* data, std::size_t n);
std::uint64_t model_fingerprint(const ModelParams& params);

}  // namespace prepguard
