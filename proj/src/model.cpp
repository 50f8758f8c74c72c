#include "corefd/model.hpp"

#include <algorithm>
#include <cmath>

#include "corefd/errors.hpp"
#include "corefd/rng.hpp"

namespace corefd::model {

void ModelConfig::validate() const {
  if (channels.empty()) throw ConfigError("model: channel plan is empty");
  if (std::any_of(channels.begin(), channels.end(), [](std::size_t c) { return c == 0; })) {
    throw ConfigError("model: channel counts must be positive");
  }
  const std::size_t factor = std::size_t{1} << channels.size();
  if (input_size == 0 || input_size % factor != 0) {
    throw ConfigError("model: input size " + std::to_string(input_size) + " is not divisible by 2^" +
                      std::to_string(channels.size()));
  }
}

std::vector<std::pair<std::string, Tensor*>> Model::named_parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("encoder.stem.weight", &encoder.stem_kernel);
  out.emplace_back("encoder.stem.bias", &encoder.stem_bias);
  for (std::size_t i = 0; i < encoder.stages.size(); ++i) {
    const std::string prefix = "encoder.stage" + std::to_string(i) + ".";
    out.emplace_back(prefix + "depthwise", &encoder.stages[i].depthwise);
    out.emplace_back(prefix + "pointwise", &encoder.stages[i].pointwise);
    out.emplace_back(prefix + "bias", &encoder.stages[i].bias);
  }
  out.emplace_back("classifier.weight", &classifier.weight);
  out.emplace_back("classifier.bias", &classifier.bias);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> Model::named_parameters() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : const_cast<Model*>(this)->named_parameters()) out.emplace_back(name, t);
  return out;
}

std::vector<Tensor*> Model::parameters() {
  std::vector<Tensor*> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

void Model::zero_grad() {
  for (Tensor* t : parameters()) t->zero_grad();
}

bool Model::all_finite() const {
  const auto params = named_parameters();
  return std::all_of(params.begin(), params.end(), [](const auto& p) { return p.second->all_finite(); });
}

bool operator==(const Model& a, const Model& b) {
  if (a.config != b.config) return false;
  const auto pa = a.named_parameters();
  const auto pb = b.named_parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].first != pb[i].first || !(*pa[i].second == *pb[i].second)) return false;
  }
  return true;
}

Model make_model(const ModelConfig& config) {
  config.validate();
  Model m;
  m.config = config;
  const std::size_t c0 = config.channels.front();
  m.encoder.stem_kernel = Tensor({c0, 3, 3, 3});
  m.encoder.stem_bias = Tensor({c0});
  std::size_t in = c0;
  for (const std::size_t out : config.channels) {
    m.encoder.stages.push_back({Tensor({in, 3, 3}), Tensor({out, in}), Tensor({out})});
    in = out;
  }
  m.classifier.weight = Tensor({kNumClasses, config.representation_dim()});
  m.classifier.bias = Tensor({kNumClasses});
  return m;
}

namespace {

void fill_uniform(Tensor& t, double bound, RngStream& rng) {
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
}

}  // namespace

Model init_model(const ModelConfig& config, std::uint64_t seed) {
  Model m = make_model(config);
  RngStream rng(seed, 0, 0, 0);
  const auto bound = [](std::size_t fan_in) { return std::sqrt(1.0 / static_cast<double>(fan_in)); };
  fill_uniform(m.encoder.stem_kernel, bound(27), rng);
  fill_uniform(m.encoder.stem_bias, bound(27), rng);
  for (StageParams& s : m.encoder.stages) {
    const std::size_t in = s.depthwise.dim(0);
    fill_uniform(s.depthwise, bound(9), rng);
    fill_uniform(s.pointwise, bound(in), rng);
    fill_uniform(s.bias, bound(in), rng);
  }
  fill_uniform(m.classifier.weight, bound(config.representation_dim()), rng);
  fill_uniform(m.classifier.bias, bound(config.representation_dim()), rng);
  return m;
}

ParamNodes bind_parameters(Graph& g, Model& model) {
  ParamNodes p;
  p.stem_kernel = g.parameter(model.encoder.stem_kernel);
  p.stem_bias = g.parameter(model.encoder.stem_bias);
  for (StageParams& s : model.encoder.stages) {
    p.stages.push_back({g.parameter(s.depthwise), g.parameter(s.pointwise), g.parameter(s.bias)});
  }
  p.cls_weight = g.parameter(model.classifier.weight);
  p.cls_bias = g.parameter(model.classifier.bias);
  return p;
}

ParamNodes bind_constants(Graph& g, const Model& model) {
  ParamNodes p;
  p.stem_kernel = g.constant(model.encoder.stem_kernel);
  p.stem_bias = g.constant(model.encoder.stem_bias);
  for (const StageParams& s : model.encoder.stages) {
    p.stages.push_back({g.constant(s.depthwise), g.constant(s.pointwise), g.constant(s.bias)});
  }
  p.cls_weight = g.constant(model.classifier.weight);
  p.cls_bias = g.constant(model.classifier.bias);
  return p;
}

EncoderNodes encoder_forward(Graph& g, NodeId batch, const ParamNodes& params, const ModelConfig& config) {
  const Tensor& x = g.value(batch);
  ndgrad::expect_rank(x, 4, "encoder input");
  if (x.dim(1) != 3 || x.dim(2) != config.input_size || x.dim(3) != config.input_size) {
    throw ShapeError("encoder input: expected [B, 3, " + std::to_string(config.input_size) + ", " +
                     std::to_string(config.input_size) + "], got " + ndgrad::dims_to_string(x.dims()));
  }
  if (params.stages.size() != config.channels.size()) throw ShapeError("encoder: stage count mismatch");
  NodeId h = g.relu(g.conv2d(batch, params.stem_kernel, params.stem_bias, 1, 1));
  NodeId maps = h;
  for (const ParamNodes::Stage& s : params.stages) {
    maps = g.avg_pool2(g.relu(g.separable_conv2d(g.instance_norm(h), s.depthwise, s.pointwise, s.bias)));
    h = maps;
  }
  return {g.global_avg_pool(maps), maps};
}

NodeId classifier_logits(Graph& g, NodeId reps, const ParamNodes& params) {
  return g.dense(reps, params.cls_weight, params.cls_bias);
}

NodeId classifier_forward(Graph& g, NodeId reps, const ParamNodes& params) {
  return g.column(g.softmax(classifier_logits(g, reps, params)), kFakeClass);
}

Inference infer(const Model& model, const Tensor& batch) {
  Graph g;
  const ParamNodes p = bind_constants(g, model);
  const EncoderNodes enc = encoder_forward(g, g.constant(batch), p, model.config);
  const NodeId probs = classifier_forward(g, enc.reps, p);
  return {g.value(enc.reps), g.value(enc.feature_maps), g.value(probs)};
}

std::vector<double> cam_raw(const Tensor& feature_maps, const ClassifierParams& classifier,
                            std::size_t class_index) {
  ndgrad::expect_rank(feature_maps, 3, "cam feature maps");
  const std::size_t d = feature_maps.dim(0);
  const std::size_t plane = feature_maps.dim(1) * feature_maps.dim(2);
  if (class_index >= kNumClasses) throw ContractError("cam: class index must be 0 or 1");
  ndgrad::expect_dims(classifier.weight, {kNumClasses, d}, "cam classifier weight");
  std::vector<double> heat(plane, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    const double w = classifier.weight[class_index * d + k];
    const double* m = feature_maps.data().data() + k * plane;
    for (std::size_t p = 0; p < plane; ++p) heat[p] += w * m[p];
  }
  return heat;
}

std::vector<double> cam(const Tensor& feature_maps, const ClassifierParams& classifier, std::size_t class_index) {
  std::vector<double> heat = cam_raw(feature_maps, classifier, class_index);
  const auto [lo, hi] = std::minmax_element(heat.begin(), heat.end());
  const double min = *lo, range = *hi - *lo;
  for (double& v : heat) v = range > 0.0 ? (v - min) / range : 0.0;
  return heat;
}

}  // namespace corefd::model
