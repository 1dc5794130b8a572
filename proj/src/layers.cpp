#include "socnet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include <fmt/format.h>

namespace socnet {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(fmt::format("{}: expected rank {}, got shape {}", what, rank, to_string(t.shape())));
  }
}

void check_conv_shapes(const Tensor& input, const LayerParams& kernels) {
  require_rank(input, 2, "conv1d input");
  require_rank(kernels.weights, 3, "conv1d weights");
  const auto filters = kernels.weights.extent(0);
  const auto width = kernels.weights.extent(1);
  if (kernels.weights.extent(2) != input.extent(1)) {
    throw ShapeError(fmt::format("conv1d: input has {} channels, kernels expect {}", input.extent(1),
                                 kernels.weights.extent(2)));
  }
  if (kernels.biases.shape() != Shape{filters}) {
    throw ShapeError(fmt::format("conv1d: bias shape {} does not match {} filters", to_string(kernels.biases.shape()),
                                 filters));
  }
  if (input.extent(0) < width) {
    throw WindowTooSmallError(
        fmt::format("conv1d: sequence length {} is shorter than kernel width {}", input.extent(0), width));
  }
}

// Weights transposed to [width*channels x filters] so the innermost loop runs
// over filters with unit stride.
std::vector<double> transpose_kernels(const Tensor& weights) {
  const auto filters = weights.extent(0);
  const auto k = weights.extent(1) * weights.extent(2);
  std::vector<double> wt(k * filters);
  const auto w = weights.data();
  for (std::size_t f = 0; f < filters; ++f) {
    for (std::size_t i = 0; i < k; ++i) wt[i * filters + f] = w[f * k + i];
  }
  return wt;
}

using vec8 = double __attribute__((vector_size(64)));

inline vec8 load8(const double* p) {
  vec8 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store8(double* p, vec8 v) { std::memcpy(p, &v, sizeof v); }

// F filters as F/8 vectors, blocked over R output rows so each weight row is
// loaded once per R broadcasts.
template <std::size_t F, std::size_t R>
void conv_rows_block(const double* in, const double* wt, const double* bias, double* out, std::size_t channels,
                     std::size_t k) {
  constexpr std::size_t V = F / 8;
  vec8 acc[R][V];
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t v = 0; v < V; ++v) acc[r][v] = load8(bias + 8 * v);
  }
  for (std::size_t i = 0; i < k; ++i) {
    vec8 w[V];
    for (std::size_t v = 0; v < V; ++v) w[v] = load8(wt + i * F + 8 * v);
    for (std::size_t r = 0; r < R; ++r) {
      const double xv = in[r * channels + i];
      for (std::size_t v = 0; v < V; ++v) acc[r][v] += xv * w[v];
    }
  }
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t v = 0; v < V; ++v) store8(out + r * F + 8 * v, acc[r][v]);
  }
}

template <std::size_t F>
void conv_rows_fixed(const double* in, const double* wt, const double* bias, double* out, std::size_t out_len,
                     std::size_t channels, std::size_t k) {
  constexpr std::size_t R = F >= 16 ? 6 : 12;
  std::size_t t = 0;
  for (; t + R <= out_len; t += R) conv_rows_block<F, R>(in + t * channels, wt, bias, out + t * F, channels, k);
  for (; t < out_len; ++t) conv_rows_block<F, 1>(in + t * channels, wt, bias, out + t * F, channels, k);
}

void conv_rows_generic(const double* in, const double* wt, const double* bias, double* out, std::size_t out_len,
                       std::size_t channels, std::size_t k, std::size_t filters) {
  for (std::size_t t = 0; t < out_len; ++t) {
    double* o = out + t * filters;
    std::copy(bias, bias + filters, o);
    const double* x = in + t * channels;
    for (std::size_t i = 0; i < k; ++i) {
      const double xv = x[i];
      const double* wr = wt + i * filters;
      for (std::size_t f = 0; f < filters; ++f) o[f] += xv * wr[f];
    }
  }
}

template <std::size_t F, std::size_t R>
void conv_weight_grad_block(const double* in, const double* up, double* gwt, std::size_t out_len,
                            std::size_t channels) {
  constexpr std::size_t V = F / 8;
  vec8 acc[R][V] = {};
  for (std::size_t t = 0; t < out_len; ++t) {
    vec8 u[V];
    for (std::size_t v = 0; v < V; ++v) u[v] = load8(up + t * F + 8 * v);
    const double* x = in + t * channels;
    for (std::size_t r = 0; r < R; ++r) {
      const double xv = x[r];
      for (std::size_t v = 0; v < V; ++v) acc[r][v] += xv * u[v];
    }
  }
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t v = 0; v < V; ++v) store8(gwt + r * F + 8 * v, load8(gwt + r * F + 8 * v) + acc[r][v]);
  }
}

// Blocked over R kernel taps held in registers while sweeping time.
template <std::size_t F>
void conv_weight_grad_fixed(const double* in, const double* up, double* gwt, std::size_t out_len,
                            std::size_t channels, std::size_t k) {
  constexpr std::size_t R = F >= 16 ? 6 : 12;
  std::size_t i = 0;
  for (; i + R <= k; i += R) conv_weight_grad_block<F, R>(in + i, up, gwt + i * F, out_len, channels);
  for (; i < k; ++i) conv_weight_grad_block<F, 1>(in + i, up, gwt + i * F, out_len, channels);
}

void conv_weight_grad_generic(const double* in, const double* up, double* gwt, std::size_t out_len,
                              std::size_t channels, std::size_t k, std::size_t filters) {
  for (std::size_t t = 0; t < out_len; ++t) {
    const double* u = up + t * filters;
    const double* x = in + t * channels;
    for (std::size_t i = 0; i < k; ++i) {
      const double xv = x[i];
      double* g = gwt + i * filters;
      for (std::size_t f = 0; f < filters; ++f) g[f] += xv * u[f];
    }
  }
}

}  // namespace

ParamGrad zero_grad_like(const LayerParams& params) {
  return {Tensor::zeros(params.weights.shape()), Tensor::zeros(params.biases.shape())};
}

Conv1dBranchSpec Conv1dBranchSpec::first_layer(std::size_t window, std::size_t in_channels, std::size_t filters) {
  if (window == 0 || window % 10 != 0) {
    throw std::invalid_argument(fmt::format("window {} is not a positive multiple of 10", window));
  }
  return {{window / 10, window / 5, window / 2}, in_channels, filters};
}

Conv1dBranchSpec Conv1dBranchSpec::second_layer(std::size_t window, std::size_t in_channels, std::size_t filters) {
  if (window == 0 || window % 10 != 0) {
    throw std::invalid_argument(fmt::format("window {} is not a positive multiple of 10", window));
  }
  return {{window / 5, window / 5, window / 5}, in_channels, filters};
}

LayerParams init_conv1d(std::size_t filters, std::size_t width, std::size_t channels, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(width * channels));
  LayerParams p{Tensor({filters, width, channels}), Tensor({filters}), true};
  for (auto& w : p.weights.data()) w = rng.uniform(-bound, bound);
  return p;
}

LayerParams init_dense(std::size_t outputs, std::size_t inputs, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(inputs));
  LayerParams p{Tensor({outputs, inputs}), Tensor({outputs}), true};
  for (auto& w : p.weights.data()) w = rng.uniform(-bound, bound);
  return p;
}

Tensor conv1d_forward(const Tensor& input, const LayerParams& kernels) {
  check_conv_shapes(input, kernels);
  const auto len = input.extent(0);
  const auto channels = input.extent(1);
  const auto filters = kernels.weights.extent(0);
  const auto width = kernels.weights.extent(1);
  const auto k = width * channels;
  const auto out_len = len - width + 1;

  const auto wt = transpose_kernels(kernels.weights);
  Tensor out({out_len, filters});
  const double* in = input.data().data();
  const double* bias = kernels.biases.data().data();
  double* o = out.data().data();
  switch (filters) {
    case 16: conv_rows_fixed<16>(in, wt.data(), bias, o, out_len, channels, k); break;
    case 8: conv_rows_fixed<8>(in, wt.data(), bias, o, out_len, channels, k); break;
    default: conv_rows_generic(in, wt.data(), bias, o, out_len, channels, k, filters); break;
  }
  return out;
}

void conv1d_backward_accumulate(const Tensor& input, const LayerParams& kernels, const Tensor& upstream,
                                ParamGrad& grad, Tensor* input_grad) {
  check_conv_shapes(input, kernels);
  const auto len = input.extent(0);
  const auto channels = input.extent(1);
  const auto filters = kernels.weights.extent(0);
  const auto width = kernels.weights.extent(1);
  const auto k = width * channels;
  const auto out_len = len - width + 1;
  if (upstream.shape() != Shape{out_len, filters}) {
    throw ShapeError(fmt::format("conv1d_backward: upstream shape {} should be [{}x{}]", to_string(upstream.shape()),
                                 out_len, filters));
  }
  if (!grad.weights.same_shape(kernels.weights) || !grad.biases.same_shape(kernels.biases)) {
    throw ShapeError("conv1d_backward: gradient buffers do not mirror parameter shapes");
  }

  const double* in = input.data().data();
  const double* up = upstream.data().data();

  std::vector<double> gwt(k * filters, 0.0);
  switch (filters) {
    case 16: conv_weight_grad_fixed<16>(in, up, gwt.data(), out_len, channels, k); break;
    case 8: conv_weight_grad_fixed<8>(in, up, gwt.data(), out_len, channels, k); break;
    default: conv_weight_grad_generic(in, up, gwt.data(), out_len, channels, k, filters); break;
  }
  auto gw = grad.weights.data();
  for (std::size_t f = 0; f < filters; ++f) {
    for (std::size_t i = 0; i < k; ++i) gw[f * k + i] += gwt[i * filters + f];
  }
  auto gb = grad.biases.data();
  for (std::size_t t = 0; t < out_len; ++t) {
    for (std::size_t f = 0; f < filters; ++f) gb[f] += up[t * filters + f];
  }

  if (input_grad != nullptr) {
    // Full correlation: zero-padded upstream against the flipped kernels with
    // filters and channels swapped.
    const std::size_t pad = width - 1;
    std::vector<double> padded((out_len + 2 * pad) * filters, 0.0);
    std::copy(up, up + out_len * filters, padded.begin() + static_cast<std::ptrdiff_t>(pad * filters));
    const double* w = kernels.weights.data().data();
    std::vector<double> flipped(k * filters);  // [width*filters x channels]
    for (std::size_t j = 0; j < width; ++j) {
      for (std::size_t f = 0; f < filters; ++f) {
        for (std::size_t c = 0; c < channels; ++c) {
          flipped[(j * filters + f) * channels + c] = w[(f * width + (width - 1 - j)) * channels + c];
        }
      }
    }
    const std::vector<double> zero_bias(channels, 0.0);
    *input_grad = Tensor({len, channels});
    double* gin = input_grad->data().data();
    const std::size_t kk = width * filters;
    switch (channels) {
      case 16: conv_rows_fixed<16>(padded.data(), flipped.data(), zero_bias.data(), gin, len, filters, kk); break;
      case 8: conv_rows_fixed<8>(padded.data(), flipped.data(), zero_bias.data(), gin, len, filters, kk); break;
      default:
        conv_rows_generic(padded.data(), flipped.data(), zero_bias.data(), gin, len, filters, kk, channels);
        break;
    }
  }
}

Conv1dGrads conv1d_backward(const Tensor& input, const LayerParams& kernels, const Tensor& upstream) {
  Conv1dGrads out{Tensor(), zero_grad_like(kernels)};
  conv1d_backward_accumulate(input, kernels, upstream, out.params, &out.input);
  return out;
}

std::size_t pool_output_length(std::size_t len, std::size_t width) {
  if (len == 0 || width == 0) return 0;
  return len / std::min(width, len);
}

Tensor avgpool1d_forward(const Tensor& input, std::size_t width) {
  require_rank(input, 2, "avgpool1d input");
  if (width == 0) throw std::invalid_argument("avgpool1d: width must be positive");
  const auto len = input.extent(0);
  const auto channels = input.extent(1);
  const auto w = std::min(width, len);
  const auto out_len = len / w;
  const double scale = 1.0 / static_cast<double>(w);
  Tensor out({out_len, channels});
  const double* in = input.data().data();
  double* o = out.data().data();
  for (std::size_t p = 0; p < out_len; ++p) {
    for (std::size_t i = 0; i < w; ++i) {
      const double* row = in + (p * w + i) * channels;
      for (std::size_t c = 0; c < channels; ++c) o[p * channels + c] += row[c];
    }
    for (std::size_t c = 0; c < channels; ++c) o[p * channels + c] *= scale;
  }
  return out;
}

Tensor avgpool1d_backward(const Tensor& upstream, const Shape& input_shape, std::size_t width) {
  if (input_shape.size() != 2) throw ShapeError("avgpool1d_backward: input shape must be rank 2");
  const auto len = input_shape[0];
  const auto channels = input_shape[1];
  const auto w = std::min(width, len);
  const auto out_len = pool_output_length(len, width);
  if (upstream.shape() != Shape{out_len, channels}) {
    throw ShapeError(fmt::format("avgpool1d_backward: upstream shape {} should be [{}x{}]",
                                 to_string(upstream.shape()), out_len, channels));
  }
  const double scale = 1.0 / static_cast<double>(w);
  Tensor grad(input_shape);
  double* g = grad.data().data();
  const double* up = upstream.data().data();
  for (std::size_t p = 0; p < out_len; ++p) {
    for (std::size_t i = 0; i < w; ++i) {
      double* row = g + (p * w + i) * channels;
      for (std::size_t c = 0; c < channels; ++c) row[c] = up[p * channels + c] * scale;
    }
  }
  return grad;
}

Tensor dense_forward(const Tensor& input, const LayerParams& layer) {
  require_rank(layer.weights, 2, "dense weights");
  const auto m = layer.weights.extent(0);
  const auto n = layer.weights.extent(1);
  if (input.size() != n) {
    throw ShapeError(fmt::format("dense: input has {} elements, weights expect {}", input.size(), n));
  }
  if (layer.biases.shape() != Shape{m}) throw ShapeError("dense: bias shape does not match outputs");
  Tensor out({m});
  const double* x = input.data().data();
  const double* w = layer.weights.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    const double* row = w + i * n;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * x[j];
    out[i] = layer.biases[i] + acc;
  }
  return out;
}

void dense_backward_accumulate(const Tensor& input, const LayerParams& layer, const Tensor& upstream,
                               ParamGrad& grad, Tensor* input_grad) {
  const auto m = layer.weights.extent(0);
  const auto n = layer.weights.extent(1);
  if (input.size() != n || upstream.size() != m) {
    throw ShapeError(fmt::format("dense_backward: input {} / upstream {} inconsistent with weights [{}x{}]",
                                 to_string(input.shape()), to_string(upstream.shape()), m, n));
  }
  if (!grad.weights.same_shape(layer.weights) || !grad.biases.same_shape(layer.biases)) {
    throw ShapeError("dense_backward: gradient buffers do not mirror parameter shapes");
  }
  const double* x = input.data().data();
  const double* up = upstream.data().data();
  double* gw = grad.weights.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double u = up[i];
    double* row = gw + i * n;
    for (std::size_t j = 0; j < n; ++j) row[j] += u * x[j];
    grad.biases[i] += u;
  }
  if (input_grad != nullptr) {
    *input_grad = Tensor(input.shape());
    double* gin = input_grad->data().data();
    const double* w = layer.weights.data().data();
    for (std::size_t i = 0; i < m; ++i) {
      const double u = up[i];
      const double* row = w + i * n;
      for (std::size_t j = 0; j < n; ++j) gin[j] += u * row[j];
    }
  }
}

DenseGrads dense_backward(const Tensor& input, const LayerParams& layer, const Tensor& upstream) {
  DenseGrads out{Tensor(), zero_grad_like(layer)};
  dense_backward_accumulate(input, layer, upstream, out.params, &out.input);
  return out;
}

Tensor leaky_relu(const Tensor& x, double slope) {
  Tensor out = x;
  for (auto& v : out.data()) v = v >= 0.0 ? v : slope * v;
  return out;
}

Tensor leaky_relu_backward(const Tensor& pre_activation, const Tensor& upstream, double slope) {
  if (!pre_activation.same_shape(upstream)) throw ShapeError("leaky_relu_backward: shape mismatch");
  Tensor out = upstream;
  auto pre = pre_activation.data();
  auto g = out.data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (pre[i] < 0.0) g[i] *= slope;
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& pre_activation, const Tensor& upstream) {
  if (!pre_activation.same_shape(upstream)) throw ShapeError("relu_backward: shape mismatch");
  Tensor out = upstream;
  auto pre = pre_activation.data();
  auto g = out.data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(pre[i] > 0.0)) g[i] = 0.0;
  }
  return out;
}

Tensor dropout_mask(const Shape& shape, const DropoutSpec& spec, Rng& rng) {
  if (!(spec.rate >= 0.0 && spec.rate < 1.0)) {
    throw std::invalid_argument(fmt::format("dropout rate {} outside [0, 1)", spec.rate));
  }
  Tensor mask(shape, 1.0);
  if (spec.rate == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - spec.rate);
  for (auto& m : mask.data()) m = keep_scale * static_cast<double>(rng.uniform() >= spec.rate);
  return mask;
}

Tensor dropout_apply(const Tensor& x, const DropoutSpec& spec, Rng& rng, bool training) {
  if (!(spec.rate >= 0.0 && spec.rate < 1.0)) {
    throw std::invalid_argument(fmt::format("dropout rate {} outside [0, 1)", spec.rate));
  }
  if (!training || spec.rate == 0.0) return x;
  return mul(x, dropout_mask(x.shape(), spec, rng));
}

}  // namespace socnet
