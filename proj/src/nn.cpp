// SPDX-License-Identifier: Apache-2.0
#include "fedapta/nn.hpp"

#include "fedapta/data.hpp"
#include "fedapta/error.hpp"
#include "fedapta/seed.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace fedapta {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Spec: return "spec error";
    case ErrorKind::Dimension: return "dimension error";
    case ErrorKind::Input: return "input error";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Format: return "format error";
    case ErrorKind::Integrity: return "integrity error";
    case ErrorKind::Numeric: return "numeric error";
    case ErrorKind::Internal: return "internal error";
  }
  return "error";
}

std::vector<Index> LayerSpec::weight_shape() const {
  if (kind == LayerKind::Conv2d) return {out_channels, in_channels, kernel, kernel};
  return {out_channels, in_channels};
}

Index ModelWeights::input_dim() const {
  if (specs.empty()) fail(ErrorKind::Spec, "model has no layers");
  const auto& first = specs.front();
  if (first.kind == LayerKind::Conv2d) return first.in_channels * first.in_height * first.in_width;
  return first.in_channels;
}

Index ModelWeights::num_classes() const {
  if (specs.empty()) fail(ErrorKind::Spec, "model has no layers");
  return specs.back().out_channels;
}

bool ModelWeights::congruent(const ModelWeights& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (!layers[k].weight.same_shape(other.layers[k].weight) ||
        !layers[k].bias.same_shape(other.layers[k].bias))
      return false;
  }
  return true;
}

bool ModelWeights::all_finite() const {
  return std::all_of(layers.begin(), layers.end(),
                     [](const LayerParams& p) { return p.weight.all_finite() && p.bias.all_finite(); });
}

bool bitwise_equal(const ModelWeights& a, const ModelWeights& b) {
  if (a.specs != b.specs || a.layers.size() != b.layers.size()) return false;
  for (std::size_t k = 0; k < a.layers.size(); ++k) {
    if (!bitwise_equal(a.layers[k].weight, b.layers[k].weight) ||
        !bitwise_equal(a.layers[k].bias, b.layers[k].bias))
      return false;
  }
  return true;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) fail(ErrorKind::Config, "learning_rate must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) fail(ErrorKind::Config, "lr_decay must be in (0, 1]");
  if (!(weight_decay >= 0.0)) fail(ErrorKind::Config, "weight_decay must be non-negative");
  if (local_epochs < 0) fail(ErrorKind::Config, "local_epochs must be non-negative");
  if (batch_size < 1) fail(ErrorKind::Config, "batch_size must be positive");
}

void validate_specs(std::span<const LayerSpec> specs) {
  if (specs.empty()) fail(ErrorKind::Spec, "model needs at least one layer");
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const auto& s = specs[k];
    const std::string where = "layer " + std::to_string(k);
    if (s.index != static_cast<Index>(k)) fail(ErrorKind::Spec, where + ": index out of order");
    if (s.in_channels < 1 || s.out_channels < 1) fail(ErrorKind::Spec, where + ": channel counts must be positive");
    if (s.kind == LayerKind::Conv2d) {
      if (s.kernel < 1 || s.out_height() < 1 || s.out_width() < 1)
        fail(ErrorKind::Spec, where + ": kernel does not fit the input");
    }
    if (k + 1 == specs.size()) {
      if (s.candidate) fail(ErrorKind::Spec, where + ": the final classifier cannot be a pruning candidate");
      continue;
    }
    const auto& next = specs[k + 1];
    if (next.in_channels != s.out_channels)
      fail(ErrorKind::Spec, where + ": out_channels " + std::to_string(s.out_channels) +
                                " does not match next in_channels " + std::to_string(next.in_channels));
    if (next.kind == LayerKind::Conv2d) {
      if (s.kind != LayerKind::Conv2d) fail(ErrorKind::Spec, where + ": a conv layer cannot follow a dense layer");
      if (next.in_height != s.out_height() || next.in_width != s.out_width())
        fail(ErrorKind::Spec, where + ": spatial size does not match the next conv layer");
    }
  }
}

std::vector<LayerSpec> mlp_specs(Index input_dim, std::span<const Index> hidden, Index num_classes) {
  std::vector<LayerSpec> specs;
  Index in = input_dim;
  for (Index width : hidden) {
    LayerSpec s;
    s.index = static_cast<Index>(specs.size());
    s.in_channels = in;
    s.out_channels = width;
    specs.push_back(s);
    in = width;
  }
  LayerSpec out;
  out.index = static_cast<Index>(specs.size());
  out.in_channels = in;
  out.out_channels = num_classes;
  out.activation = Activation::None;
  out.candidate = false;
  specs.push_back(out);
  validate_specs(specs);
  return specs;
}

std::vector<LayerSpec> cnn_specs(Index side, std::span<const Index> conv_channels, Index kernel,
                                 std::span<const Index> hidden, Index num_classes) {
  std::vector<LayerSpec> specs;
  Index channels = 1, h = side;
  for (Index c : conv_channels) {
    LayerSpec s;
    s.index = static_cast<Index>(specs.size());
    s.kind = LayerKind::Conv2d;
    s.in_channels = channels;
    s.out_channels = c;
    s.kernel = kernel;
    s.in_height = h;
    s.in_width = h;
    specs.push_back(s);
    channels = c;
    h = s.out_height();
  }
  auto tail = mlp_specs(channels, hidden, num_classes);
  for (auto& s : tail) {
    s.index = static_cast<Index>(specs.size());
    specs.push_back(s);
  }
  validate_specs(specs);
  return specs;
}

void freeze_input_layers(std::vector<LayerSpec>& specs, double fraction) {
  const auto frozen = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(specs.size())));
  for (std::size_t k = 0; k < std::min(frozen, specs.size()); ++k) {
    specs[k].trainable = false;
    specs[k].candidate = false;
  }
}

std::vector<LayerSpec> reference_specs() {
  const Index hidden[] = {48, 32, 24};
  return mlp_specs(16, hidden, 4);
}

ModelWeights init_model(std::span<const LayerSpec> specs, std::uint64_t seed) {
  validate_specs(specs);
  std::mt19937_64 rng(seed);
  ModelWeights model;
  model.specs.assign(specs.begin(), specs.end());
  for (const auto& s : specs) {
    LayerParams p{Tensor(s.weight_shape()), Tensor({s.out_channels})};
    const double bound = std::sqrt(6.0 / static_cast<double>(s.fan_in()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Index i = 0; i < p.weight.size(); ++i) p.weight.flat()[i] = dist(rng);
    model.layers.push_back(std::move(p));
  }
  return model;
}

ModelWeights zeros_like(const ModelWeights& model) {
  ModelWeights out;
  out.specs = model.specs;
  for (const auto& p : model.layers) out.layers.push_back({Tensor(p.weight.shape()), Tensor(p.bias.shape())});
  return out;
}

ModelWeights ones_like(const ModelWeights& model) {
  ModelWeights out = zeros_like(model);
  for (auto& p : out.layers) {
    p.weight.flat().setOnes();
    p.bias.flat().setOnes();
  }
  return out;
}

namespace {

void activate(RowMatrix& z, Activation a) {
  if (a == Activation::Relu) z = z.cwiseMax(0.0);
}

// Gradient through the activation, in place.
void activate_backward(RowMatrix& grad, const RowMatrix& pre, Activation a) {
  if (a == Activation::Relu) grad = (pre.array() > 0.0).select(grad, 0.0);
}

// Conv feature maps are kept per sample as [height * width, channels].
using FeatureMaps = std::vector<RowMatrix>;

RowMatrix im2col(const RowMatrix& map, const LayerSpec& s) {
  const Index oh = s.out_height(), ow = s.out_width(), k = s.kernel;
  RowMatrix cols(oh * ow, s.in_channels * k * k);
  for (Index y = 0; y < oh; ++y)
    for (Index x = 0; x < ow; ++x) {
      const Index row = y * ow + x;
      for (Index c = 0; c < s.in_channels; ++c)
        for (Index dy = 0; dy < k; ++dy)
          for (Index dx = 0; dx < k; ++dx)
            cols(row, (c * k + dy) * k + dx) = map((y + dy) * s.in_width + (x + dx), c);
    }
  return cols;
}

RowMatrix col2im(const RowMatrix& cols, const LayerSpec& s) {
  const Index oh = s.out_height(), ow = s.out_width(), k = s.kernel;
  RowMatrix map = RowMatrix::Zero(s.in_height * s.in_width, s.in_channels);
  for (Index y = 0; y < oh; ++y)
    for (Index x = 0; x < ow; ++x) {
      const Index row = y * ow + x;
      for (Index c = 0; c < s.in_channels; ++c)
        for (Index dy = 0; dy < k; ++dy)
          for (Index dx = 0; dx < k; ++dx)
            map((y + dy) * s.in_width + (x + dx), c) += cols(row, (c * k + dy) * k + dx);
    }
  return map;
}

RowMatrix global_average_pool(const FeatureMaps& maps) {
  RowMatrix out(static_cast<Index>(maps.size()), maps.front().cols());
  for (std::size_t b = 0; b < maps.size(); ++b) out.row(static_cast<Index>(b)) = maps[b].colwise().mean();
  return out;
}

struct LayerTrace {
  RowMatrix input;                 // dense: [batch, in]
  RowMatrix pre;                   // dense: [batch, out]
  std::vector<RowMatrix> cols;     // conv: per-sample im2col
  std::vector<RowMatrix> conv_pre; // conv: per-sample [positions, out]
};

struct Activations {
  RowMatrix flat;
  FeatureMaps maps;
  bool spatial = false;
};

RowMatrix run_forward(const ModelWeights& model, const RowMatrix& batch, std::vector<LayerTrace>* trace) {
  if (batch.cols() != model.input_dim())
    fail(ErrorKind::Dimension, "batch has " + std::to_string(batch.cols()) + " features, model expects " +
                                   std::to_string(model.input_dim()));
  Activations act;
  const auto& first = model.specs.front();
  if (first.kind == LayerKind::Conv2d) {
    act.spatial = true;
    const Index hw = first.in_height * first.in_width;
    for (Index b = 0; b < batch.rows(); ++b) {
      // Input rows are channel-major [C, H, W]; transpose into [H*W, C].
      Eigen::Map<const RowMatrix> chw(batch.row(b).data(), first.in_channels, hw);
      act.maps.push_back(chw.transpose());
    }
  } else {
    act.flat = batch;
  }
  if (trace) trace->assign(model.specs.size(), {});

  for (std::size_t k = 0; k < model.specs.size(); ++k) {
    const auto& s = model.specs[k];
    const auto w = model.layers[k].weight.rows();
    const auto bias = model.layers[k].bias.flat().transpose();
    if (s.kind == LayerKind::Dense) {
      if (act.spatial) {
        act.flat = global_average_pool(act.maps);
        act.maps.clear();
        act.spatial = false;
      }
      RowMatrix pre = act.flat * w.transpose();
      pre.rowwise() += bias;
      RowMatrix out = pre;
      activate(out, s.activation);
      if (trace) {
        (*trace)[k].input = std::move(act.flat);
        (*trace)[k].pre = std::move(pre);
      }
      act.flat = std::move(out);
    } else {
      FeatureMaps next;
      next.reserve(act.maps.size());
      for (const auto& map : act.maps) {
        RowMatrix cols = im2col(map, s);
        RowMatrix pre = cols * w.transpose();
        pre.rowwise() += bias;
        RowMatrix out = pre;
        activate(out, s.activation);
        if (trace) {
          (*trace)[k].cols.push_back(std::move(cols));
          (*trace)[k].conv_pre.push_back(std::move(pre));
        }
        next.push_back(std::move(out));
      }
      act.maps = std::move(next);
    }
  }
  if (act.spatial) return global_average_pool(act.maps);
  return act.flat;
}

}  // namespace

RowMatrix forward(const ModelWeights& model, const RowMatrix& batch) { return run_forward(model, batch, nullptr); }

namespace {

// Row-wise log-softmax.
RowMatrix log_softmax(const RowMatrix& logits) {
  RowMatrix out = logits;
  for (Index i = 0; i < out.rows(); ++i) {
    const double m = out.row(i).maxCoeff();
    const double lse = m + std::log((out.row(i).array() - m).exp().sum());
    out.row(i).array() -= lse;
  }
  return out;
}

void check_labels(std::span<const int> labels, Index rows, Index classes) {
  if (static_cast<Index>(labels.size()) != rows)
    fail(ErrorKind::Dimension, "label count does not match batch size");
  for (int y : labels)
    if (y < 0 || y >= classes)
      fail(ErrorKind::Input, "label " + std::to_string(y) + " out of range [0, " + std::to_string(classes) + ")");
}

}  // namespace

LossAndGrad loss_and_grad(const ModelWeights& model, const RowMatrix& batch, std::span<const int> labels) {
  std::vector<LayerTrace> trace;
  const RowMatrix logits = run_forward(model, batch, &trace);
  const Index n = logits.rows();
  check_labels(labels, n, logits.cols());
  if (n == 0) fail(ErrorKind::Input, "empty batch");

  const RowMatrix logp = log_softmax(logits);
  LossAndGrad result;
  for (Index i = 0; i < n; ++i) result.loss -= logp(i, labels[static_cast<std::size_t>(i)]);
  result.loss /= static_cast<double>(n);

  // d(mean CE)/d(logits) = (softmax - onehot) / n
  RowMatrix grad = logp.array().exp();
  for (Index i = 0; i < n; ++i) grad(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
  grad /= static_cast<double>(n);

  FeatureMaps map_grad;
  bool spatial_grad = false;
  result.grads.layers.resize(model.layers.size());
  for (std::size_t kk = model.specs.size(); kk-- > 0;) {
    const auto& s = model.specs[kk];
    const auto w = model.layers[kk].weight.rows();
    auto& g = result.grads.layers[kk];
    g.weight = Tensor(model.layers[kk].weight.shape());
    g.bias = Tensor(model.layers[kk].bias.shape());
    const bool need_input_grad = kk > 0;

    if (s.kind == LayerKind::Dense) {
      RowMatrix dpre = std::move(grad);
      activate_backward(dpre, trace[kk].pre, s.activation);
      if (s.trainable) {
        g.weight.rows() = dpre.transpose() * trace[kk].input;
        g.bias.flat() = dpre.colwise().sum().transpose();
      }
      if (need_input_grad) grad = dpre * w;
      spatial_grad = false;
    } else {
      if (!spatial_grad) {
        // Undo global average pooling: spread each channel gradient evenly.
        const auto positions = static_cast<double>(s.out_height() * s.out_width());
        map_grad.clear();
        for (Index b = 0; b < grad.rows(); ++b)
          map_grad.push_back(RowMatrix::Constant(s.out_height() * s.out_width(), 1, 1.0) * grad.row(b) / positions);
      }
      FeatureMaps prev;
      auto gw = g.weight.rows();
      for (std::size_t b = 0; b < map_grad.size(); ++b) {
        RowMatrix dpre = std::move(map_grad[b]);
        activate_backward(dpre, trace[kk].conv_pre[b], s.activation);
        if (s.trainable) {
          gw.noalias() += dpre.transpose() * trace[kk].cols[b];
          g.bias.flat() += dpre.colwise().sum().transpose();
        }
        if (need_input_grad) prev.push_back(col2im(dpre * w, s));
      }
      map_grad = std::move(prev);
      spatial_grad = true;
    }
  }
  return result;
}

double effective_learning_rate(const TrainConfig& cfg, std::int64_t epoch_index) {
  return cfg.learning_rate * std::pow(cfg.lr_decay, static_cast<double>(epoch_index));
}

ModelWeights sgd_step(const ModelWeights& model, const GradientSet& grads, const TrainConfig& cfg,
                      std::int64_t epoch_index) {
  if (grads.layers.size() != model.layers.size()) fail(ErrorKind::Dimension, "gradient/model layer count mismatch");
  const double lr = effective_learning_rate(cfg, epoch_index);
  ModelWeights out = model;
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    auto& p = out.layers[k];
    const auto& g = grads.layers[k];
    if (!p.weight.same_shape(g.weight) || !p.bias.same_shape(g.bias))
      fail(ErrorKind::Dimension, "gradient shape mismatch at layer " + std::to_string(k));
    if (!model.specs[k].trainable) continue;
    p.weight.flat() -= lr * (g.weight.flat() + cfg.weight_decay * p.weight.flat());
    p.bias.flat() -= lr * (g.bias.flat() + cfg.weight_decay * p.bias.flat());
  }
  return out;
}

ModelWeights train_local(const ModelWeights& model, const Dataset& data, const TrainConfig& cfg,
                         const StepHook& after_step) {
  if (data.size() == 0) fail(ErrorKind::Input, "cannot train on an empty dataset");
  cfg.validate();
  ModelWeights current = model;
  std::vector<Index> order(static_cast<std::size_t>(data.size()));
  std::vector<int> batch_labels;
  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(epoch)}));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }
    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      RowMatrix x(static_cast<Index>(end - start), data.dim());
      batch_labels.clear();
      for (std::size_t j = start; j < end; ++j) {
        x.row(static_cast<Index>(j - start)) = data.features.row(order[j]);
        batch_labels.push_back(data.labels[static_cast<std::size_t>(order[j])]);
      }
      const auto lg = loss_and_grad(current, x, batch_labels);
      current = sgd_step(current, lg.grads, cfg, cfg.epoch_offset + epoch);
      if (after_step) after_step(current);
    }
    if (!current.all_finite()) fail(ErrorKind::Numeric, "training diverged (non-finite weights)");
  }
  return current;
}

Index param_count(const ModelWeights& model, bool candidate_only) {
  Index total = 0;
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    if (candidate_only && !model.specs[k].candidate) continue;
    total += model.layers[k].weight.size() + model.layers[k].bias.size();
  }
  return total;
}

EvalResult evaluate(const ModelWeights& model, const Dataset& data) {
  if (data.size() == 0) fail(ErrorKind::Input, "cannot evaluate on an empty dataset");
  const RowMatrix logits = forward(model, data.features);
  check_labels(data.labels, logits.rows(), logits.cols());
  const RowMatrix logp = log_softmax(logits);
  EvalResult r;
  Index correct = 0;
  for (Index i = 0; i < logits.rows(); ++i) {
    Index best = 0;
    logits.row(i).maxCoeff(&best);
    const int y = data.labels[static_cast<std::size_t>(i)];
    if (best == y) ++correct;
    r.loss -= logp(i, y);
  }
  const auto n = static_cast<double>(logits.rows());
  r.accuracy = static_cast<double>(correct) / n;
  r.loss /= n;
  return r;
}

}  // namespace fedapta
