#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "corefd/graph.hpp"
#include "corefd/tensor.hpp"

namespace corefd::model {

using ndgrad::Graph;
using ndgrad::NodeId;
using ndgrad::Tensor;

inline constexpr std::size_t kNumClasses = 2;
inline constexpr std::size_t kFakeClass = 1;

struct ModelConfig {
  std::size_t input_size = 64;
  std::vector<std::size_t> channels = {16, 32, 64, 128};

  /// Representation width d (the last stage's channel count).
  std::size_t representation_dim() const { return channels.empty() ? 0 : channels.back(); }
  /// Spatial size of the final feature maps.
  std::size_t final_map_size() const { return input_size >> channels.size(); }
  /// Throws ConfigError on an empty channel plan or an input size not divisible by 2^stages.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct StageParams {
  Tensor depthwise;  // [C_in, 3, 3]
  Tensor pointwise;  // [C_out, C_in]
  Tensor bias;       // [C_out]
};

struct EncoderParams {
  Tensor stem_kernel;  // [C0, 3, 3, 3]
  Tensor stem_bias;    // [C0]
  std::vector<StageParams> stages;
};

struct ClassifierParams {
  Tensor weight;  // [2, d]
  Tensor bias;    // [2]
};

/// Encoder f and classifier g.
struct Model {
  ModelConfig config;
  EncoderParams encoder;
  ClassifierParams classifier;

  /// Stable (name, tensor) list; defines checkpoint names and optimizer order.
  std::vector<std::pair<std::string, Tensor*>> named_parameters();
  std::vector<std::pair<std::string, const Tensor*>> named_parameters() const;
  std::vector<Tensor*> parameters();
  void zero_grad();
  bool all_finite() const;

  friend bool operator==(const Model& a, const Model& b);
};

/// Zero-filled parameters with shapes matching `config`.
Model make_model(const ModelConfig& config);
/// Each tensor uniform in ±sqrt(1/fan_in), seeded.
Model init_model(const ModelConfig& config, std::uint64_t seed);

/// Graph handles for every parameter of a model.
struct ParamNodes {
  NodeId stem_kernel, stem_bias;
  struct Stage {
    NodeId depthwise, pointwise, bias;
  };
  std::vector<Stage> stages;
  NodeId cls_weight, cls_bias;
};

/// Registers the model's tensors as trainable leaves (gradients flow back into them).
ParamNodes bind_parameters(Graph& g, Model& model);
/// Registers the model's tensors as constants (inference only).
ParamNodes bind_constants(Graph& g, const Model& model);

struct EncoderNodes {
  NodeId reps;          // [B, d]
  NodeId feature_maps;  // [B, d, s, s]
};

/// stem conv3x3 + ReLU, then per stage instance norm + separable conv + ReLU + 2x2 average pool,
/// then global average pooling.
EncoderNodes encoder_forward(Graph& g, NodeId batch, const ParamNodes& params, const ModelConfig& config);
/// softmax(dense(reps))[:, 1], shape [B].
NodeId classifier_forward(Graph& g, NodeId reps, const ParamNodes& params);
/// Dense logits [B, 2].
NodeId classifier_logits(Graph& g, NodeId reps, const ParamNodes& params);

struct Inference {
  Tensor reps;          // [B, d]
  Tensor feature_maps;  // [B, d, s, s]
  Tensor probs;         // [B]
};

/// Constant-graph forward pass over a [B, 3, S, S] batch.
Inference infer(const Model& model, const Tensor& batch);

/// Σ_k weight[class, k] · maps[k] for one sample's [d, s, s] maps, before normalization.
std::vector<double> cam_raw(const Tensor& feature_maps, const ClassifierParams& classifier, std::size_t class_index);
/// cam_raw min-max normalized to [0, 1]; a constant map normalizes to zeros.
std::vector<double> cam(const Tensor& feature_maps, const ClassifierParams& classifier, std::size_t class_index);

}  // namespace corefd::model
