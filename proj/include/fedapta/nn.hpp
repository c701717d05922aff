// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedapta/tensor.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace fedapta {

struct Dataset;

enum class LayerKind { Dense, Conv2d };
enum class Activation { Relu, None };

/// One layer of a feed-forward network.
///
/// Dense layers map [in_channels] -> [out_channels]. Conv2d layers use valid
/// padding and stride 1 over an [in_channels, in_height, in_width] input; a
/// conv layer feeding a dense layer (or ending the network) is followed by
/// global average pooling.
struct LayerSpec {
  Index index = 0;
  LayerKind kind = LayerKind::Dense;
  Index in_channels = 1;
  Index out_channels = 1;
  Index kernel = 1;
  Index in_height = 1;
  Index in_width = 1;
  Activation activation = Activation::Relu;
  bool trainable = true;
  bool candidate = true;

  Index out_height() const noexcept { return kind == LayerKind::Conv2d ? in_height - kernel + 1 : 1; }
  Index out_width() const noexcept { return kind == LayerKind::Conv2d ? in_width - kernel + 1 : 1; }
  /// Inputs feeding one output channel (one weight row).
  Index fan_in() const noexcept { return kind == LayerKind::Conv2d ? in_channels * kernel * kernel : in_channels; }
  /// Weight + bias scalars owned by one output channel.
  Index channel_footprint() const noexcept { return fan_in() + 1; }
  Index param_count() const noexcept { return out_channels * channel_footprint(); }
  std::vector<Index> weight_shape() const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct LayerParams {
  Tensor weight;  // [out, in] or [out, in, k, k]
  Tensor bias;    // [out]
};

/// Ordered layer specs plus their parameters. Also used, with 0/1 entries,
/// as the expanded form of a pruning mask.
struct ModelWeights {
  std::vector<LayerSpec> specs;
  std::vector<LayerParams> layers;

  Index num_layers() const noexcept { return static_cast<Index>(specs.size()); }
  Index input_dim() const;
  Index num_classes() const;
  bool congruent(const ModelWeights& other) const;
  bool all_finite() const;
  friend bool bitwise_equal(const ModelWeights& a, const ModelWeights& b);
};

/// Per-layer gradients, shape-congruent with a ModelWeights.
struct GradientSet {
  std::vector<LayerParams> layers;
};

struct TrainConfig {
  double learning_rate = 0.1;
  double lr_decay = 0.998;
  double weight_decay = 0.001;
  int local_epochs = 5;
  int batch_size = 32;
  std::uint64_t seed = 0;
  // Added to the local epoch counter when computing the decayed rate, so the
  // schedule continues across federation rounds.
  std::int64_t epoch_offset = 0;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Checks index order, final-layer candidacy and adjacent-layer dimensions.
void validate_specs(std::span<const LayerSpec> specs);

/// Dense chain input -> hidden... -> classes with ReLU on hidden layers.
std::vector<LayerSpec> mlp_specs(Index input_dim, std::span<const Index> hidden, Index num_classes);

/// Conv stack over a 1-channel side x side image, global-average-pooled into
/// a dense chain.
std::vector<LayerSpec> cnn_specs(Index side, std::span<const Index> conv_channels, Index kernel,
                                 std::span<const Index> hidden, Index num_classes);

/// Marks the first floor(fraction * layers) layers as frozen (non-trainable,
/// non-candidate).
void freeze_input_layers(std::vector<LayerSpec>& specs, double fraction);

/// The desk-scale model used by the simulator's examples and acceptance runs:
/// 16 -> 48 -> 32 -> 24 -> 4, ReLU hidden layers, classifier not prunable.
std::vector<LayerSpec> reference_specs();

ModelWeights init_model(std::span<const LayerSpec> specs, std::uint64_t seed);

/// Zero weights and biases with the given structure.
ModelWeights zeros_like(const ModelWeights& model);
ModelWeights ones_like(const ModelWeights& model);

RowMatrix forward(const ModelWeights& model, const RowMatrix& batch);

struct LossAndGrad {
  double loss = 0.0;
  GradientSet grads;
};

LossAndGrad loss_and_grad(const ModelWeights& model, const RowMatrix& batch, std::span<const int> labels);

double effective_learning_rate(const TrainConfig& cfg, std::int64_t epoch_index);

ModelWeights sgd_step(const ModelWeights& model, const GradientSet& grads, const TrainConfig& cfg,
                      std::int64_t epoch_index);

/// Called after every optimizer step; used to re-impose pruning masks.
using StepHook = std::function<void(ModelWeights&)>;

ModelWeights train_local(const ModelWeights& model, const Dataset& data, const TrainConfig& cfg,
                         const StepHook& after_step = {});

Index param_count(const ModelWeights& model, bool candidate_only);

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
};

EvalResult evaluate(const ModelWeights& model, const Dataset& data);

}  // namespace fedapta
