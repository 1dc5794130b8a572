#include "socnet/model.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "socnet/parallel.hpp"

namespace socnet {

std::string_view to_string(ArchKind kind) { return kind == ArchKind::DenseFirst ? "dense-first" : "merge-first"; }

ArchKind parse_arch_kind(std::string_view text) {
  if (text == "dense-first" || text == "df") return ArchKind::DenseFirst;
  if (text == "merge-first" || text == "mf") return ArchKind::MergeFirst;
  throw SpecError(fmt::format("unknown architecture '{}' (expected dense-first or merge-first)", text));
}

void ArchSpec::validate() const {
  if (window == 0 || window % 10 != 0) {
    throw SpecError(fmt::format("window {} must be a positive multiple of 10", window));
  }
  if (conv_layers != 1 && conv_layers != 2) {
    throw SpecError(fmt::format("conv_layers must be 1 or 2, got {}", conv_layers));
  }
  if (filters_l1 == 0 || filters_l2 == 0 || dense_units == 0 || pool_width == 0) {
    throw SpecError("filter, dense and pool sizes must be positive");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw SpecError(fmt::format("dropout rate {} outside [0, 1)", dropout_rate));
  }
  if (!(final_l2 >= 0.0) || !std::isfinite(final_l2)) throw SpecError("final_l2 must be finite and >= 0");
  if (!std::isfinite(leaky_slope)) throw SpecError("leaky_slope must be finite");
}

Conv1dBranchSpec ArchSpec::conv_layer(std::size_t depth) const {
  if (depth == 0) return Conv1dBranchSpec::first_layer(window, kFeatureChannels, filters_l1);
  if (depth == 1 && conv_layers == 2) return Conv1dBranchSpec::second_layer(window, filters_l1, filters_l2);
  throw SpecError(fmt::format("convolution depth {} does not exist in a {}-layer model", depth, conv_layers));
}

std::array<std::size_t, kBranches> ArchSpec::pre_pool_lengths() const {
  std::array<std::size_t, kBranches> len{};
  for (std::size_t b = 0; b < kBranches; ++b) {
    len[b] = window;
    for (std::size_t d = 0; d < conv_layers; ++d) {
      const auto w = conv_layer(d).widths[b];
      if (len[b] < w) throw SpecError(fmt::format("window {} too short for branch {} at depth {}", window, b, d));
      len[b] = len[b] - w + 1;
    }
  }
  return len;
}

std::array<std::size_t, kBranches> ArchSpec::pooled_sizes() const {
  const auto len = pre_pool_lengths();
  const auto channels = conv_layers == 2 ? filters_l2 : filters_l1;
  std::array<std::size_t, kBranches> out{};
  for (std::size_t b = 0; b < kBranches; ++b) out[b] = pool_output_length(len[b], pool_width) * channels;
  return out;
}

std::vector<std::pair<Shape, Shape>> CnnModel::parameter_shapes(const ArchSpec& spec) {
  spec.validate();
  std::vector<std::pair<Shape, Shape>> shapes;
  for (std::size_t d = 0; d < spec.conv_layers; ++d) {
    const auto layer = spec.conv_layer(d);
    for (std::size_t b = 0; b < kBranches; ++b) {
      shapes.push_back({{layer.filters, layer.widths[b], layer.in_channels}, {layer.filters}});
    }
  }
  const auto pooled = spec.pooled_sizes();
  if (spec.kind == ArchKind::DenseFirst) {
    for (std::size_t b = 0; b < kBranches; ++b) shapes.push_back({{spec.dense_units, pooled[b]}, {spec.dense_units}});
    shapes.push_back({{1, kBranches * spec.dense_units}, {1}});
  } else {
    std::size_t total = 0;
    for (auto p : pooled) total += p;
    shapes.push_back({{spec.dense_units, total}, {spec.dense_units}});
    shapes.push_back({{1, spec.dense_units}, {1}});
  }
  return shapes;
}

CnnModel CnnModel::zeros(const ArchSpec& spec) {
  CnnModel m;
  m.spec_ = spec;
  for (auto& [w, b] : parameter_shapes(spec)) m.params_.push_back({Tensor(w), Tensor(b), true});
  return m;
}

CnnModel CnnModel::build(const ArchSpec& spec, Rng& rng) {
  CnnModel m = zeros(spec);
  m.creation_seed_ = rng.seed();
  for (std::size_t i = 0; i < m.params_.size(); ++i) {
    auto& p = m.params_[i];
    const auto& shape = p.weights.shape();
    if (m.role(i) == LayerRole::Conv) {
      p = init_conv1d(shape[0], shape[1], shape[2], rng);
    } else {
      p = init_dense(shape[0], shape[1], rng);
    }
  }
  return m;
}

std::size_t CnnModel::conv_index(std::size_t depth, std::size_t branch) const {
  if (depth >= spec_.conv_layers || branch >= kBranches) {
    throw std::out_of_range(fmt::format("no convolution at depth {} branch {}", depth, branch));
  }
  return depth * kBranches + branch;
}

std::size_t CnnModel::dense_index(std::size_t branch) const {
  const std::size_t base = spec_.conv_layers * kBranches;
  if (spec_.kind == ArchKind::MergeFirst) {
    if (branch != 0) throw std::out_of_range("merge-first models have a single dense block");
    return base;
  }
  if (branch >= kBranches) throw std::out_of_range("dense block index out of range");
  return base + branch;
}

LayerRole CnnModel::role(std::size_t index) const {
  if (index >= params_.size()) throw std::out_of_range("parameter index out of range");
  if (index < spec_.conv_layers * kBranches) return LayerRole::Conv;
  if (index == final_index()) return LayerRole::Final;
  return LayerRole::Dense;
}

std::string CnnModel::layer_name(std::size_t index) const {
  switch (role(index)) {
    case LayerRole::Conv: return fmt::format("conv{}.branch{}", index / kBranches + 1, index % kBranches);
    case LayerRole::Dense:
      return spec_.kind == ArchKind::MergeFirst
                 ? std::string("dense")
                 : fmt::format("dense.branch{}", index - spec_.conv_layers * kBranches);
    case LayerRole::Final: return "final";
  }
  return "?";
}

std::size_t CnnModel::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.weights.size() + p.biases.size();
  return n;
}

void CnnModel::set_trainable(LayerRole r, bool trainable) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (role(i) == r) params_[i].trainable = trainable;
  }
}

GradientSet zero_gradients(const CnnModel& model) {
  GradientSet g;
  g.reserve(model.params().size());
  for (const auto& p : model.params()) g.push_back(zero_grad_like(p));
  return g;
}

void accumulate(GradientSet& into, const GradientSet& from) {
  if (into.size() != from.size()) throw ShapeError("gradient sets differ in length");
  for (std::size_t i = 0; i < into.size(); ++i) {
    axpy(1.0, from[i].weights, into[i].weights);
    axpy(1.0, from[i].biases, into[i].biases);
  }
}

void scale(GradientSet& grads, double factor) {
  for (auto& g : grads) {
    for (auto& v : g.weights.data()) v *= factor;
    for (auto& v : g.biases.data()) v *= factor;
  }
}

ForwardCache forward(const CnnModel& model, std::span<const double> window, Rng* rng, bool training) {
  const auto& spec = model.spec();
  if (window.size() != spec.window * kFeatureChannels) {
    throw ShapeError(fmt::format("forward: window holds {} values, model expects {}x{}", window.size(), spec.window,
                                 kFeatureChannels));
  }
  const bool use_dropout = training && spec.dropout_rate > 0.0;
  if (use_dropout && rng == nullptr) throw std::invalid_argument("forward: training mode needs an Rng for dropout");

  ForwardCache c;
  c.valid = true;
  c.training = training;
  c.spec = spec;
  c.input = Tensor({spec.window, kFeatureChannels}, std::vector<double>(window.begin(), window.end()));
  const DropoutSpec drop{spec.dropout_rate};
  const auto params = model.params();

  for (std::size_t b = 0; b < kBranches; ++b) {
    auto& br = c.branches[b];
    br.stages.resize(spec.conv_layers);
    const Tensor* x = &c.input;
    for (std::size_t d = 0; d < spec.conv_layers; ++d) {
      auto& st = br.stages[d];
      st.pre = conv1d_forward(*x, params[model.conv_index(d, b)]);
      st.out = leaky_relu(st.pre, spec.leaky_slope);
      if (use_dropout) {
        st.mask = dropout_mask(st.out.shape(), drop, *rng);
        st.out = mul(st.out, st.mask);
      }
      x = &st.out;
    }
    br.pooled = avgpool1d_forward(*x, spec.pool_width);
  }

  if (spec.kind == ArchKind::DenseFirst) {
    c.head = Tensor({kBranches * spec.dense_units});
    for (std::size_t b = 0; b < kBranches; ++b) {
      auto& br = c.branches[b];
      br.dense_pre = dense_forward(br.pooled, params[model.dense_index(b)]);
      const auto act = leaky_relu(br.dense_pre, spec.leaky_slope);
      std::copy(act.data().begin(), act.data().end(), c.head.data().begin() + b * spec.dense_units);
    }
  } else {
    std::size_t total = 0;
    for (const auto& br : c.branches) total += br.pooled.size();
    c.merged = Tensor({total});
    auto it = c.merged.data().begin();
    for (const auto& br : c.branches) it = std::copy(br.pooled.data().begin(), br.pooled.data().end(), it);
    c.dense_pre = dense_forward(c.merged, params[model.dense_index(0)]);
    c.head = leaky_relu(c.dense_pre, spec.leaky_slope);
  }

  c.final_pre = dense_forward(c.head, params[model.final_index()])[0];
  c.output = c.final_pre > 0.0 ? c.final_pre : 0.0;
  return c;
}

double predict(const CnnModel& model, std::span<const double> window) {
  return forward(model, window, nullptr, false).output;
}

std::vector<double> predict_all(const CnnModel& model, std::span<const FeatureWindow> windows, std::size_t threads) {
  std::vector<double> out(windows.size());
  parallel_for(windows.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) out[i] = predict(model, windows[i].features);
  });
  return out;
}

double predict_raw(const CnnModel& model, std::span<const double> raw_window) {
  if (raw_window.size() % kFeatureChannels != 0) throw ShapeError("predict_raw: window is not [t_w x 3]");
  const auto& s = model.norm_stats();
  std::vector<double> x(raw_window.begin(), raw_window.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto ch = i % kFeatureChannels;
    x[i] = (x[i] - s.mean[ch]) / s.stddev[ch];
  }
  return predict(model, x);
}

namespace {

void check_cache(const CnnModel& model, const ForwardCache& cache) {
  if (!cache.valid) throw StaleCacheError("backward: no forward cache (call forward first)");
  if (!(cache.spec == model.spec())) throw StaleCacheError("backward: cache was produced by a different architecture");
}

void check_grads(const CnnModel& model, const GradientSet& grads) {
  const auto params = model.params();
  if (grads.size() != params.size()) throw ShapeError("gradient set does not match model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i].weights.same_shape(params[i].weights) || !grads[i].biases.same_shape(params[i].biases)) {
      throw ShapeError(fmt::format("gradient shapes for {} do not mirror parameters", model.layer_name(i)));
    }
  }
}

void branch_backward(const CnnModel& model, const ForwardCache& c, std::size_t b, const Tensor& dpooled,
                     GradientSet& grads) {
  const auto& spec = model.spec();
  const auto& br = c.branches[b];
  const auto params = model.params();
  const Tensor& last = br.stages.back().out;
  Tensor d = avgpool1d_backward(dpooled.reshaped(br.pooled.shape()), last.shape(), spec.pool_width);
  for (std::size_t depth = spec.conv_layers; depth-- > 0;) {
    const auto& st = br.stages[depth];
    if (!st.mask.empty()) d = mul(d, st.mask);
    d = leaky_relu_backward(st.pre, d, spec.leaky_slope);
    const Tensor& input = depth == 0 ? c.input : br.stages[depth - 1].out;
    const auto idx = model.conv_index(depth, b);
    if (depth > 0) {
      Tensor dinput;
      conv1d_backward_accumulate(input, params[idx], d, grads[idx], &dinput);
      d = std::move(dinput);
    } else {
      conv1d_backward_accumulate(input, params[idx], d, grads[idx], nullptr);
    }
  }
}

}  // namespace

void backward_accumulate(const CnnModel& model, const ForwardCache& c, double loss_grad, GradientSet& grads) {
  check_cache(model, c);
  check_grads(model, grads);
  const auto& spec = model.spec();
  const auto params = model.params();
  const double dy = c.final_pre > 0.0 ? loss_grad : 0.0;
  if (dy == 0.0) return;

  const auto fi = model.final_index();
  Tensor dhead;
  dense_backward_accumulate(c.head, params[fi], Tensor({1}, {dy}), grads[fi], &dhead);

  if (spec.kind == ArchKind::DenseFirst) {
    for (std::size_t b = 0; b < kBranches; ++b) {
      const auto& br = c.branches[b];
      Tensor du({spec.dense_units});
      std::copy_n(dhead.data().begin() + b * spec.dense_units, spec.dense_units, du.data().begin());
      du = leaky_relu_backward(br.dense_pre, du, spec.leaky_slope);
      Tensor dpooled;
      const auto di = model.dense_index(b);
      dense_backward_accumulate(br.pooled, params[di], du, grads[di], &dpooled);
      branch_backward(model, c, b, dpooled, grads);
    }
  } else {
    const Tensor du = leaky_relu_backward(c.dense_pre, dhead, spec.leaky_slope);
    Tensor dmerged;
    const auto di = model.dense_index(0);
    dense_backward_accumulate(c.merged, params[di], du, grads[di], &dmerged);
    std::size_t offset = 0;
    for (std::size_t b = 0; b < kBranches; ++b) {
      const auto n = c.branches[b].pooled.size();
      Tensor dpooled({n});
      std::copy_n(dmerged.data().begin() + offset, n, dpooled.data().begin());
      offset += n;
      branch_backward(model, c, b, dpooled, grads);
    }
  }
}

double final_l2_penalty(const CnnModel& model, double l2) {
  double s = 0.0;
  for (double w : model.params()[model.final_index()].weights.data()) s += w * w;
  return l2 * s;
}

void add_final_l2_gradient(const CnnModel& model, double l2, GradientSet& grads) {
  if (l2 == 0.0) return;
  const auto fi = model.final_index();
  axpy(2.0 * l2, model.params()[fi].weights, grads[fi].weights);
}

GradientSet backward(const CnnModel& model, const ForwardCache& cache, double loss_grad) {
  GradientSet grads = zero_gradients(model);
  backward_accumulate(model, cache, loss_grad, grads);
  add_final_l2_gradient(model, model.spec().final_l2, grads);
  return grads;
}

}  // namespace socnet
