#include "corefd/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <utility>

#include "corefd/errors.hpp"
#include "corefd/image.hpp"
#include "corefd/rng.hpp"

namespace corefd::trainer {

using augment::ViewPair;
using model::Model;
using ndgrad::Graph;
using ndgrad::NodeId;
using ndgrad::Tensor;
using synthdata::Sample;

void TrainConfig::validate() const {
  if (pairs_per_batch == 0) throw ConfigError("pairs_per_batch must be >= 1");
  if (max_epochs == 0) throw ConfigError("epochs must be >= 1");
  if (patience == 0) throw ConfigError("patience must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be a finite value > 0");
  loss.validate();
  aug.validate();
  model.validate();
}

std::string TrainHistory::to_csv() const {
  std::string out = "epoch,ce_loss,consistency_loss,val_auc,seconds\n";
  char line[160];
  for (const EpochRecord& r : epochs) {
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.6f\n", r.epoch, r.ce_loss, r.consistency_loss,
                  r.val_auc, r.seconds);
    out += line;
  }
  return out;
}

void TrainHistory::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write history " + path.string());
  out << to_csv();
  if (!out) throw Error("failed writing history " + path.string());
}

EarlyStopping::EarlyStopping(std::size_t patience) : patience_(patience) {
  if (patience == 0) throw ConfigError("patience must be >= 1");
}

bool EarlyStopping::update(std::size_t epoch, double val_auc) {
  if (val_auc > best_) {
    best_ = val_auc;
    best_epoch_ = epoch;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

namespace {

Tensor views_batch(const std::vector<ViewPair>& pairs) {
  std::vector<const Image*> images;
  images.reserve(2 * pairs.size());
  for (const ViewPair& p : pairs) images.push_back(&p.x1);
  for (const ViewPair& p : pairs) images.push_back(&p.x2);
  return to_batch(images);
}

std::string describe_pairs(const std::vector<std::string>& ids, std::size_t n) {
  if (ids.empty()) return std::to_string(n) + " unnamed pairs";
  std::string out;
  for (const std::string& id : ids) out += (out.empty() ? "" : ", ") + id;
  return out;
}

}  // namespace

StepLosses loss_and_grads(Model& model, const std::vector<ViewPair>& pairs, const losses::LossConfig& loss,
                          const std::vector<std::string>& ids) {
  if (pairs.empty()) throw ContractError("loss_and_grads: empty batch");
  if (!ids.empty() && ids.size() != pairs.size()) throw ShapeError("loss_and_grads: ids and pairs differ in length");
  const std::size_t n = pairs.size();
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = pairs[i].label;

  model.zero_grad();
  Graph g;
  const model::ParamNodes params = model::bind_parameters(g, model);
  const NodeId batch = g.constant(views_batch(pairs));
  const NodeId reps = model::encoder_forward(g, batch, params, model.config).reps;
  const NodeId probs = model::classifier_forward(g, reps, params);
  const NodeId ce = losses::batch_ce(g, g.rows(probs, 0, n), g.rows(probs, n, n), labels, loss.weights);

  StepLosses out;
  NodeId total = ce;
  if (loss.alpha > 0.0 && loss.penalty != losses::Penalty::None) {
    NodeId c;
    try {
      c = losses::batch_consistency(g, g.rows(reps, 0, n), g.rows(reps, n, n), loss.penalty);
    } catch (const DegenerateVectorError& e) {
      const std::string what = e.what();
      std::string culprit;
      const auto pos = what.find("row ");
      if (!ids.empty() && pos != std::string::npos) {
        const std::size_t row = std::stoul(what.substr(pos + 4));
        if (row < ids.size()) culprit = ids[row];
      }
      throw DegenerateVectorError("degenerate representation for sample " +
                                  (culprit.empty() ? describe_pairs(ids, n) : culprit) + ": " + what);
    }
    out.consistency = g.value(c).item();
    total = losses::total_loss(g, ce, c, loss.alpha);
  }
  out.ce = g.value(ce).item();
  out.total = g.value(total).item();
  g.backward(total);
  return out;
}

StepLosses train_step(Model& model, ndgrad::AdamState& adam, const std::vector<ViewPair>& pairs,
                      const losses::LossConfig& loss, const std::vector<std::string>& ids) {
  const StepLosses out = loss_and_grads(model, pairs, loss, ids);
  const std::vector<Tensor*> params = model.parameters();
  ndgrad::adam_step(params, adam);
  return out;
}

namespace {

void require_both_classes(const std::vector<Sample>& samples, const char* split) {
  bool real = false, fake = false;
  for (const Sample& s : samples) (s.label == 1 ? fake : real) = true;
  if (!real || !fake) {
    throw ConfigError(std::string("the ") + split + " split must contain both real and fake samples");
  }
}

Model detached(const Model& m) {
  Model copy = m;
  for (auto& [name, t] : copy.named_parameters()) t->clear_grad();
  return copy;
}

}  // namespace

TrainResult train(const TrainConfig& config, const synthdata::DatasetSplit& data, ValidationFn validation,
                  EpochCallback on_epoch) {
  config.validate();
  require_both_classes(data.train, "train");
  if (!validation) require_both_classes(data.val, "val");
  const std::size_t n_train = data.train.size();
  const std::size_t per_batch = config.pairs_per_batch;
  if (per_batch > n_train) {
    throw ConfigError("pairs_per_batch (" + std::to_string(per_batch) + ") exceeds the training split size (" +
                      std::to_string(n_train) + ")");
  }
  for (const Sample& s : data.train) {
    if (s.image.height != config.model.input_size || s.image.width != config.model.input_size) {
      throw ConfigError("training image " + s.id + " does not match model input_size " +
                        std::to_string(config.model.input_size));
    }
  }

  Model model = model::init_model(config.model, derive_seed(config.seed, "init"));
  const std::vector<Tensor*> params = model.parameters();
  const std::vector<const Tensor*> cparams(params.begin(), params.end());
  ndgrad::AdamState adam(ndgrad::AdamConfig{.lr = config.lr}, cparams);
  const std::uint64_t shuffle_seed = derive_seed(config.seed, "shuffle");
  const std::uint64_t aug_seed = derive_seed(config.seed, "aug");

  TrainResult result;
  EarlyStopping stopper(config.patience);
  std::vector<std::size_t> order(n_train);
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    RngStream shuffle(shuffle_seed, epoch, 0, 0);
    for (std::size_t i = n_train - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<std::int64_t>(i)));
      std::swap(order[i], order[j]);
    }

    const std::size_t n_batches = n_train / per_batch;
    double ce_sum = 0.0, c_sum = 0.0;
    for (std::size_t b = 0; b < n_batches; ++b) {
      std::vector<ViewPair> pairs;
      std::vector<std::string> ids;
      pairs.reserve(per_batch);
      for (std::size_t k = 0; k < per_batch; ++k) {
        const std::size_t idx = order[b * per_batch + k];
        const Sample& s = data.train[idx];
        pairs.push_back(augment::make_pair(s.image, s.label, s.source_id, config.aug, {aug_seed, epoch, idx, 1},
                                           {aug_seed, epoch, idx, 2}));
        ids.push_back(s.id);
      }
      const StepLosses step = train_step(model, adam, pairs, config.loss, ids);
      if (!std::isfinite(step.total)) {
        throw Error("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
      }
      ce_sum += step.ce;
      c_sum += config.loss.alpha * step.consistency;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.ce_loss = ce_sum / static_cast<double>(n_batches);
    rec.consistency_loss = c_sum / static_cast<double>(n_batches);
    rec.val_auc = validation ? validation(model, epoch) : evaluate(model, data.val).report.auc;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec.seconds = config.record_timing ? secs : 0.0;
    result.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(EpochRecord{rec.epoch, rec.ce_loss, rec.consistency_loss, rec.val_auc, secs});

    if (stopper.update(epoch, rec.val_auc)) {
      result.best.model = detached(model);
      result.best.optimizer = adam;
      result.best.epoch = static_cast<std::int64_t>(epoch);
      result.best.best_val_auc = rec.val_auc;
      result.best.seed = config.seed;
    }
    if (stopper.should_stop()) {
      result.history.stopped_early = epoch < config.max_epochs;
      break;
    }
  }
  result.history.best_epoch = stopper.best_epoch();
  return result;
}

std::vector<double> predict(const Model& model, const std::vector<Sample>& samples, std::size_t batch_size) {
  if (batch_size == 0) throw ContractError("predict: batch_size must be >= 1");
  std::vector<double> out;
  out.reserve(samples.size());
  for (std::size_t begin = 0; begin < samples.size(); begin += batch_size) {
    const std::size_t end = std::min(samples.size(), begin + batch_size);
    std::vector<const Image*> images;
    for (std::size_t i = begin; i < end; ++i) images.push_back(&samples[i].image);
    const model::Inference inf = model::infer(model, to_batch(images));
    out.insert(out.end(), inf.probs.data().begin(), inf.probs.data().end());
  }
  return out;
}

Evaluation evaluate(const Model& model, const std::vector<Sample>& samples) {
  if (samples.empty()) throw ContractError("evaluate: empty split");
  const std::vector<double> probs = predict(model, samples);
  Evaluation ev;
  metrics::ScoredSet set;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    ev.scores.push_back({samples[i].id, probs[i], samples[i].label});
    set.scores.push_back(probs[i]);
    set.labels.push_back(samples[i].label);
  }
  ev.report = metrics::evaluate_scores(set);
  return ev;
}

double cross_view_distance(const Model& model, const std::vector<Sample>& samples,
                           const augment::AugStrategy& strategy, std::uint64_t seed) {
  if (samples.empty()) throw ContractError("cross_view_distance: empty split");
  const std::uint64_t key = derive_seed(seed, "cross-view");
  constexpr std::size_t kChunk = 32;
  double total = 0.0;
  for (std::size_t begin = 0; begin < samples.size(); begin += kChunk) {
    const std::size_t end = std::min(samples.size(), begin + kChunk);
    std::vector<ViewPair> pairs;
    for (std::size_t i = begin; i < end; ++i) {
      const Sample& s = samples[i];
      pairs.push_back(augment::make_pair(s.image, s.label, s.source_id, strategy, {key, 0, i, 1}, {key, 0, i, 2}));
    }
    const model::Inference inf = model::infer(model, views_batch(pairs));
    const std::size_t n = pairs.size(), d = inf.reps.dim(1);
    const auto reps = inf.reps.data();
    for (std::size_t i = 0; i < n; ++i) {
      try {
        total += losses::cos_consistency(reps.subspan(i * d, d), reps.subspan((n + i) * d, d));
      } catch (const DegenerateVectorError& e) {
        throw DegenerateVectorError("degenerate representation for sample " + samples[begin + i].id + ": " +
                                    e.what());
      }
    }
  }
  return total / static_cast<double>(samples.size());
}

}  // namespace corefd::trainer
