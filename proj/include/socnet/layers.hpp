// socnet/layers.hpp - forward and gradient kernels for the estimator's layers
//
// Layout conventions:
//   sequence activations  [len x channels], row-major
//   conv1d weights        [filters x width x channels], biases [filters]
//   dense weights         [out x in], biases [out]
#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>

#include "socnet/rng.hpp"
#include "socnet/tensor.hpp"

namespace socnet {

class WindowTooSmallError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct LayerParams {
  Tensor weights;
  Tensor biases;
  bool trainable = true;
};

// Gradient with respect to one LayerParams; shapes mirror the parameters.
struct ParamGrad {
  Tensor weights;
  Tensor biases;
};

ParamGrad zero_grad_like(const LayerParams& params);

// Kernel widths of the three parallel branches at one convolution depth.
struct Conv1dBranchSpec {
  std::array<std::size_t, 3> widths{};
  std::size_t in_channels = 0;
  std::size_t filters = 0;

  // (window/10, window/5, window/2); window must be a multiple of 10.
  static Conv1dBranchSpec first_layer(std::size_t window, std::size_t in_channels, std::size_t filters);
  // (window/5, window/5, window/5)
  static Conv1dBranchSpec second_layer(std::size_t window, std::size_t in_channels, std::size_t filters);
};

struct DropoutSpec {
  double rate = 0.2;
};

// Fan-in scaled uniform U(-sqrt(6/fan_in), sqrt(6/fan_in)); zero biases.
LayerParams init_conv1d(std::size_t filters, std::size_t width, std::size_t channels, Rng& rng);
LayerParams init_dense(std::size_t outputs, std::size_t inputs, Rng& rng);

// Valid (unpadded) stride-1 convolution along the time axis:
//   out[t, f] = bias[f] + sum_{d < width} sum_c input[t + d, c] * weight[f, d, c]
Tensor conv1d_forward(const Tensor& input, const LayerParams& kernels);

struct Conv1dGrads {
  Tensor input;
  ParamGrad params;
};

Conv1dGrads conv1d_backward(const Tensor& input, const LayerParams& kernels, const Tensor& upstream);

// Adds parameter gradients into `grad`. The input gradient is written (not
// accumulated) only when `input_grad` is non-null.
void conv1d_backward_accumulate(const Tensor& input, const LayerParams& kernels, const Tensor& upstream,
                                ParamGrad& grad, Tensor* input_grad);

// Non-overlapping average pooling. The effective width is min(width, len);
// trailing samples that do not fill a window are dropped.
std::size_t pool_output_length(std::size_t len, std::size_t width);
Tensor avgpool1d_forward(const Tensor& input, std::size_t width);
Tensor avgpool1d_backward(const Tensor& upstream, const Shape& input_shape, std::size_t width);

// out = W * input + b over the flattened input.
Tensor dense_forward(const Tensor& input, const LayerParams& layer);

struct DenseGrads {
  Tensor input;
  ParamGrad params;
};

DenseGrads dense_backward(const Tensor& input, const LayerParams& layer, const Tensor& upstream);
void dense_backward_accumulate(const Tensor& input, const LayerParams& layer, const Tensor& upstream,
                               ParamGrad& grad, Tensor* input_grad);

Tensor leaky_relu(const Tensor& x, double slope);
Tensor leaky_relu_backward(const Tensor& pre_activation, const Tensor& upstream, double slope);
Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& pre_activation, const Tensor& upstream);

// Inverted dropout: entries are 0 with probability `rate`, else 1/(1 - rate).
Tensor dropout_mask(const Shape& shape, const DropoutSpec& spec, Rng& rng);
Tensor dropout_apply(const Tensor& x, const DropoutSpec& spec, Rng& rng, bool training);

}  // namespace socnet
