#pragma once

// Two-stage training: contrastive representation learning over augmented
// views, then supervised fine-tuning of the transferred network.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <fstream>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fusionprog/augment.hpp"
#include "fusionprog/checkpoint.hpp"
#include "fusionprog/core/error.hpp"
#include "fusionprog/core/parallel.hpp"
#include "fusionprog/core/rng.hpp"
#include "fusionprog/dataset.hpp"
#include "fusionprog/losses.hpp"
#include "fusionprog/metrics.hpp"
#include "fusionprog/model.hpp"
#include "fusionprog/nn/adam.hpp"

namespace fusionprog {

struct TrainConfig {
  Stage stage = Stage::Stage1;
  int epochs = 20;
  int batch_size = 32;
  double lr_stage1 = 1e-3;
  double lr_stage2 = 1e-4;
  double lr_decay_factor = 0.1;
  int lr_decay_every = 10;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  ContrastiveConfig contrastive;
  LossSelection losses;
  AugmentPolicy augment;
  int views_per_sample = 2;
  bool image_raw_anchor = true;        // image view 0 is the unaugmented volume
  bool structured_raw_anchor = false;  // false: every structured view is dropout-masked

  void validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(lr_stage1 > 0) || !(lr_stage2 > 0)) throw ConfigError("train: learning rates must be > 0");
    if (!(lr_decay_factor > 0) || lr_decay_every < 1) throw ConfigError("train: invalid learning-rate decay");
    if (views_per_sample < 2) throw ConfigError("train: views_per_sample must be >= 2");
    contrastive.validate();
    augment.validate();
  }
};

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  const auto& a = c.augment;
  return {{"stage", static_cast<int>(c.stage)},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr_stage1", c.lr_stage1},
          {"lr_stage2", c.lr_stage2},
          {"lr_decay_factor", c.lr_decay_factor},
          {"lr_decay_every", c.lr_decay_every},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"seed", c.seed},
          {"temperature", c.contrastive.temperature},
          {"strategy", to_string(c.contrastive.strategy)},
          {"contrastive_seed", c.contrastive.rng_seed},
          {"use_intra", c.losses.intra},
          {"use_inter", c.losses.inter},
          {"use_fmcl", c.losses.fmcl},
          {"flip_prob", a.flip_prob},
          {"blur_std_min", a.blur_std_range.first},
          {"blur_std_max", a.blur_std_range.second},
          {"noise_prob", a.noise_prob},
          {"noise_std", a.noise_std},
          {"patch_size", a.patch_size},
          {"patch_mask_prob", a.patch_mask_prob},
          {"structured_dropout", a.structured_dropout},
          {"views_per_sample", c.views_per_sample},
          {"image_raw_anchor", c.image_raw_anchor},
          {"structured_raw_anchor", c.structured_raw_anchor}};
}

/// base_lr * factor^floor(epoch / every), base by stage.
inline double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.epochs)
    throw ConfigError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.epochs) + ")");
  const double base = cfg.stage == Stage::Stage1 ? cfg.lr_stage1 : cfg.lr_stage2;
  return base * std::pow(cfg.lr_decay_factor, epoch / cfg.lr_decay_every);
}

struct EpochRecord {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double val_metric = 0;  // val combined loss (stage 1) or val AUC (stage 2)
  bool improved = false;
};

struct TrainOptions {
  std::ostream* log = nullptr;        // line-delimited JSON
  std::filesystem::path diag_dir;     // non-finite loss dumps; empty disables
  const Checkpoint* resume = nullptr; // final state of an interrupted run of the same stage
  const Checkpoint* resume_best = nullptr;  // best-so-far snapshot; `resume` stands in when null
  // Called after every epoch with the resumable state (optimizer included) and the best snapshot.
  std::function<void(const Checkpoint& state, const Checkpoint& best)> on_epoch;
};

struct TrainResult {
  Checkpoint final_state;  // includes optimizer state
  Checkpoint best;
  std::vector<EpochRecord> history;
};

namespace detail {

inline constexpr std::uint64_t kValEpochKey = 0xFFFFFFFFull;

inline std::vector<const PreparedSample*> batch_at(const std::vector<PreparedSample>& data,
                                                   const std::vector<std::size_t>& order, std::size_t start,
                                                   std::size_t size, bool training) {
  std::vector<const PreparedSample*> b;
  for (std::size_t i = start; i < std::min(order.size(), start + size); ++i) {
    const PreparedSample* s = &data[order[i]];
    if (training && s->split != Split::Train)
      throw TrainingError("leakage guard: patient " + s->patient_id + " from the " + to_string(s->split) +
                          " split reached a gradient step");
    b.push_back(s);
  }
  return b;
}

inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, Stage stage, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::keyed(seed, {0x0D3E, static_cast<std::uint64_t>(stage), static_cast<std::uint64_t>(epoch)});
  rng.shuffle(order.begin(), order.end());
  return order;
}

/// Rows are view-major: row v * B + b is view v of batch item b.
template <class T>
nn::BatchInputs<T> build_views(const std::vector<const PreparedSample*>& batch, const std::vector<std::size_t>& ids,
                               const ModelConfig& model, const TrainConfig& cfg, std::uint64_t epoch_key,
                               std::uint64_t split_key) {
  const int B = static_cast<int>(batch.size()), V = cfg.views_per_sample, R = B * V;
  nn::BatchInputs<T> in;
  const auto& f = batch.front()->adc;
  if (model.branches.adc) in.adc = nn::Tensor<T>(R, f.n_slices, f.height, f.width);
  if (model.branches.dwi) in.dwi = nn::Tensor<T>(R, f.n_slices, f.height, f.width);
  const int n_attr = static_cast<int>(batch.front()->x.size());
  if (model.branches.structured) in.structured = nn::Tensor<T>(R, n_attr);

  parallel_for(static_cast<std::size_t>(R), [&](std::size_t r) {
    const int v = static_cast<int>(r) / B, b = static_cast<int>(r) % B;
    const PreparedSample& s = *batch[b];
    auto key = [&](std::uint64_t modality) {
      return Rng::keyed(cfg.seed, {0xA06, split_key, epoch_key, ids[b], static_cast<std::uint64_t>(v), modality});
    };
    auto put_image = [&](nn::Tensor<T>& t, const ImageVolume& vol, std::uint64_t modality) {
      T* dst = t.item(static_cast<int>(r));
      if (v == 0 && cfg.image_raw_anchor) {
        std::copy(vol.voxels.begin(), vol.voxels.end(), dst);
        return;
      }
      Rng rng = key(modality);
      const ImageVolume a = augment_image(vol, cfg.augment, rng);
      std::copy(a.voxels.begin(), a.voxels.end(), dst);
    };
    if (model.branches.adc) put_image(in.adc, s.adc, 0);
    if (model.branches.dwi) put_image(in.dwi, s.dwi, 1);
    if (model.branches.structured) {
      T* dst = in.structured.item(static_cast<int>(r));
      if (v == 0 && cfg.structured_raw_anchor) {
        std::copy(s.x.begin(), s.x.end(), dst);
      } else {
        Rng rng = key(2);
        const auto x = augment_structured(s.x, cfg.augment, rng);
        std::copy(x.begin(), x.end(), dst);
      }
    }
  });
  return in;
}

template <class T>
nn::BatchInputs<T> build_plain(const std::vector<const PreparedSample*>& batch, const ModelConfig& model) {
  const int B = static_cast<int>(batch.size());
  nn::BatchInputs<T> in;
  const auto& f = batch.front()->adc;
  if (model.branches.adc) in.adc = nn::Tensor<T>(B, f.n_slices, f.height, f.width);
  if (model.branches.dwi) in.dwi = nn::Tensor<T>(B, f.n_slices, f.height, f.width);
  if (model.branches.structured) in.structured = nn::Tensor<T>(B, static_cast<int>(batch.front()->x.size()));
  for (int b = 0; b < B; ++b) {
    const PreparedSample& s = *batch[b];
    if (model.branches.adc) std::copy(s.adc.voxels.begin(), s.adc.voxels.end(), in.adc.item(b));
    if (model.branches.dwi) std::copy(s.dwi.voxels.begin(), s.dwi.voxels.end(), in.dwi.item(b));
    if (model.branches.structured) std::copy(s.x.begin(), s.x.end(), in.structured.item(b));
  }
  return in;
}

struct ContrastiveStep {
  LossReport report;
  double w_intra = 0, w_inter = 0, w_fmcl = 0;
};

inline ContrastiveStep choose_weights(const LossReport& rep, const LossSelection& sel) {
  ContrastiveStep s{rep};
  if (rep.chosen == LossKind::Average) {
    const double w = 1.0 / static_cast<double>(sel.enabled().size());
    s.w_intra = sel.intra ? w : 0;
    s.w_inter = sel.inter ? w : 0;
    s.w_fmcl = sel.fmcl ? w : 0;
  } else {
    s.w_intra = rep.chosen == LossKind::Intra;
    s.w_inter = rep.chosen == LossKind::Inter;
    s.w_fmcl = rep.chosen == LossKind::Fmcl;
  }
  return s;
}

/// Forward + all three contrastive losses for one batch of views; gradients
/// are pushed into the network when `weights` is non-null.
template <class T>
LossReport contrastive_batch(nn::FusionNetwork<T>& net, const nn::BatchInputs<T>& in, const std::vector<int>& labels,
                             const std::vector<int>& view_of, const TrainConfig& cfg, int epoch, int batch_index,
                             bool apply_gradients) {
  const auto e = net.embed(in);
  EmbeddingSet<T> E{e.A.matrix(), e.D.matrix(), e.S.matrix(), labels, view_of};
  const double tau = cfg.contrastive.temperature;
  // Selection happens before the backward pass, so only selected components need gradients.
  LossSelection sel = cfg.losses;
  LossReport pre = combine(0, 0, 0, sel, apply_gradients ? cfg.contrastive.strategy : CombineStrategy::AverageAll,
                           cfg.contrastive.rng_seed, epoch, batch_index);
  const ContrastiveStep w = choose_weights(pre, sel);
  const auto intra = loss_intra<T>(E, tau, apply_gradients && w.w_intra > 0);
  const auto inter = loss_inter<T>(E, tau, apply_gradients && w.w_inter > 0);
  const auto fmcl = loss_fmcl<T>(e.Mn.matrix(), labels, view_of, tau, apply_gradients && w.w_fmcl > 0);
  LossReport rep = combine(intra.value, inter.value, fmcl.value, sel,
                           apply_gradients ? cfg.contrastive.strategy : CombineStrategy::AverageAll,
                           cfg.contrastive.rng_seed, epoch, batch_index);
  if (!apply_gradients) return rep;
  if (!std::isfinite(rep.total)) return rep;

  const auto n = e.A.n() ? e.A.n() : e.S.n();
  auto grad = [&](const MatR<T>& g1, double w1, const MatR<T>& g2, double w2) {
    nn::Tensor<T> t(static_cast<int>(n), kEmbeddingDim);
    if (w1 > 0) t.matrix() += static_cast<T>(w1) * g1;
    if (w2 > 0) t.matrix() += static_cast<T>(w2) * g2;
    return t;
  };
  nn::Tensor<T> dMn;
  if (w.w_fmcl > 0) {
    dMn = nn::Tensor<T>(static_cast<int>(n), kEmbeddingDim);
    dMn.matrix() = static_cast<T>(w.w_fmcl) * fmcl.dX;
  }
  net.zero_grad();
  net.backward_embed(grad(intra.dA, w.w_intra, inter.dA, w.w_inter), grad(intra.dD, w.w_intra, inter.dD, w.w_inter),
                     grad(intra.dS, w.w_intra, inter.dS, w.w_inter), {}, dMn);
  return rep;
}

inline void dump_nonfinite(const TrainOptions& opts, int stage, int epoch, int batch,
                           const std::vector<const PreparedSample*>& b, const nlohmann::ordered_json& losses) {
  std::string msg = "non-finite loss at stage " + std::to_string(stage) + " epoch " + std::to_string(epoch) +
                    " batch " + std::to_string(batch) + " (batch checksum " + hex64(batch_checksum(b)) + ")";
  if (!opts.diag_dir.empty()) {
    std::filesystem::create_directories(opts.diag_dir);
    const auto path = opts.diag_dir / ("nonfinite_stage" + std::to_string(stage) + "_epoch" + std::to_string(epoch) +
                                       "_batch" + std::to_string(batch) + ".json");
    nlohmann::ordered_json j{{"stage", stage}, {"epoch", epoch}, {"batch", batch},
                             {"batch_checksum", hex64(batch_checksum(b))}, {"losses", losses}};
    for (const auto* s : b) j["patients"].push_back(s->patient_id);
    std::ofstream(path) << j.dump(2) << "\n";
    msg += "; diagnostic written to " + path.string();
  }
  throw TrainingError(msg);
}

inline nlohmann::ordered_json preprocess_state(const PreparedData& data) {
  return {{"config", to_json(data.config)}, {"structured", data.structured.to_json()}};
}

inline void log_line(const TrainOptions& opts, const nlohmann::ordered_json& j) {
  if (opts.log) *opts.log << j.dump() << "\n";
}

template <class T>
void check_resume(const TrainOptions& opts, Stage stage, const TrainConfig& cfg) {
  if (!opts.resume) return;
  if (opts.resume->stage != stage) throw ConfigError("resume checkpoint belongs to a different stage");
  if (opts.resume->adam_m.empty()) throw ConfigError("resume checkpoint has no optimizer state");
  if (opts.resume->epoch > cfg.epochs)
    throw ConfigError("resume checkpoint is at epoch " + std::to_string(opts.resume->epoch) + ", beyond the " +
                      std::to_string(cfg.epochs) + " configured epochs");
}

}  // namespace detail

/// Mean combined contrastive loss over the validation split, with fixed views
/// and the components averaged.
template <class T>
double validation_contrastive_loss(nn::FusionNetwork<T>& net, const std::vector<PreparedSample>& val,
                                   const TrainConfig& cfg) {
  std::vector<std::size_t> order(val.size());
  std::iota(order.begin(), order.end(), 0);
  double sum = 0;
  std::size_t count = 0;
  for (std::size_t start = 0; start < val.size(); start += cfg.batch_size) {
    auto batch = detail::batch_at(val, order, start, cfg.batch_size, false);
    std::vector<std::size_t> ids(order.begin() + start, order.begin() + start + batch.size());
    auto in = detail::build_views<T>(batch, ids, net.config(), cfg, detail::kValEpochKey, 1);
    std::vector<int> labels, view_of;
    for (int v = 0; v < cfg.views_per_sample; ++v)
      for (std::size_t b = 0; b < batch.size(); ++b) {
        labels.push_back(batch[b]->label);
        view_of.push_back(static_cast<int>(b));
      }
    const auto rep = detail::contrastive_batch(net, in, labels, view_of, cfg, 0, 0, false);
    sum += rep.total * static_cast<double>(batch.size());
    count += batch.size();
  }
  return sum / static_cast<double>(count);
}

template <class T = float>
TrainResult train_stage1(const PreparedData& data, const ModelConfig& model, const TrainConfig& cfg_in,
                         const TrainOptions& opts = {}) {
  TrainConfig cfg = cfg_in;
  if (cfg.stage != Stage::Stage1) throw ConfigError("train_stage1: config stage must be 1");
  cfg.validate();
  if (!model.branches.all()) throw ConfigError("train_stage1: contrastive pretraining needs all three branches");
  if (!cfg.losses.any()) throw ConfigError("train_stage1: no contrastive loss enabled");
  detail::check_resume<T>(opts, Stage::Stage1, cfg);

  nn::FusionNetwork<T> net(model);
  net.init(cfg.seed);
  nn::Adam<T> adam(net.params(), {cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps});

  TrainResult result;
  int start_epoch = 0;
  bool have_best = false;
  if (opts.resume) {
    restore(net, *opts.resume);
    restore_optimizer(adam, *opts.resume);
    start_epoch = opts.resume->epoch;
    result.best = opts.resume_best ? *opts.resume_best : *opts.resume;
    have_best = opts.resume->best_epoch >= 0;
  }
  auto stamp = [&](Checkpoint& c, int epochs_done) {
    c.stage = Stage::Stage1;
    c.epoch = epochs_done;
    c.seed = cfg.seed;
    c.metric_name = "val_loss";
    c.train_config = to_json(cfg);
    c.preprocess = detail::preprocess_state(data);
  };

  const auto& train = data.train;
  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    const auto order = detail::epoch_order(train.size(), cfg.seed, Stage::Stage1, epoch);
    double loss_sum = 0;
    std::size_t seen = 0;
    int batch_index = 0;
    for (std::size_t start = 0; start < train.size(); start += cfg.batch_size, ++batch_index) {
      auto batch = detail::batch_at(train, order, start, cfg.batch_size, true);
      std::vector<std::size_t> ids(order.begin() + start, order.begin() + start + batch.size());
      auto in = detail::build_views<T>(batch, ids, model, cfg, static_cast<std::uint64_t>(epoch), 0);
      std::vector<int> labels, view_of;
      for (int v = 0; v < cfg.views_per_sample; ++v)
        for (std::size_t b = 0; b < batch.size(); ++b) {
          labels.push_back(batch[b]->label);
          view_of.push_back(static_cast<int>(b));
        }
      const auto rep = detail::contrastive_batch(net, in, labels, view_of, cfg, epoch, batch_index, true);
      nlohmann::ordered_json row{{"stage", 1},
                                 {"epoch", epoch},
                                 {"batch", batch_index},
                                 {"batch_checksum", hex64(batch_checksum(batch))},
                                 {"n", batch.size()},
                                 {"l_intra", rep.l_intra},
                                 {"l_inter", rep.l_inter},
                                 {"l_fmcl", rep.l_fmcl},
                                 {"chosen", to_string(rep.chosen)},
                                 {"total", rep.total},
                                 {"lr", lr}};
      const auto& sel = cfg.losses;
      if (!std::isfinite(rep.total) || (sel.intra && !std::isfinite(rep.l_intra)) ||
          (sel.inter && !std::isfinite(rep.l_inter)) || (sel.fmcl && !std::isfinite(rep.l_fmcl)))
        detail::dump_nonfinite(opts, 1, epoch, batch_index, batch, row);
      adam.step(lr);
      detail::log_line(opts, row);
      loss_sum += rep.total * static_cast<double>(batch.size());
      seen += batch.size();
    }
    const double val_loss = validation_contrastive_loss(net, data.val, cfg);
    EpochRecord rec{epoch, lr, loss_sum / static_cast<double>(seen), val_loss, false};
    if (!std::isfinite(val_loss)) throw TrainingError("non-finite validation loss at stage 1 epoch " + std::to_string(epoch));
    if (!have_best || val_loss < result.best.best_metric) {
      rec.improved = true;
      have_best = true;
      result.best = capture<T>(net, nullptr);
      stamp(result.best, epoch + 1);
      result.best.best_metric = val_loss;
      result.best.best_epoch = epoch;
    }
    result.history.push_back(rec);
    detail::log_line(opts, {{"stage", 1},
                            {"event", "epoch"},
                            {"epoch", epoch},
                            {"lr", lr},
                            {"train_loss", rec.train_loss},
                            {"val_loss", val_loss},
                            {"improved", rec.improved}});
    if (opts.on_epoch) {
      auto state = capture<T>(net, &adam);
      stamp(state, epoch + 1);
      state.best_metric = result.best.best_metric;
      state.best_epoch = result.best.best_epoch;
      opts.on_epoch(state, result.best);
    }
  }
  result.final_state = capture<T>(net, &adam);
  stamp(result.final_state, cfg.epochs);
  result.final_state.best_metric = result.best.best_metric;
  result.final_state.best_epoch = result.best.best_epoch;
  return result;
}

struct Predictions {
  std::vector<double> scores;  // P(class 1)
  std::vector<int> preds;      // argmax
  std::vector<int> labels;
  std::vector<std::string> patient_ids;
};

template <class T>
Predictions predict(nn::FusionNetwork<T>& net, const std::vector<PreparedSample>& samples, int batch_size = 32) {
  Predictions p;
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    auto batch = detail::batch_at(samples, order, start, batch_size, false);
    const auto in = detail::build_plain<T>(batch, net.config());
    const auto logits = net.classify(net.embed(in));
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const double l0 = logits.data[b * logits.per_item()], l1 = logits.data[b * logits.per_item() + 1];
      p.scores.push_back(1.0 / (1.0 + std::exp(l0 - l1)));
      p.preds.push_back(l1 > l0 ? 1 : 0);
      p.labels.push_back(batch[b]->label);
      p.patient_ids.push_back(batch[b]->patient_id);
    }
  }
  return p;
}

template <class T>
MetricsReport evaluate(nn::FusionNetwork<T>& net, const PreparedData& data, Split split, int batch_size = 32) {
  const auto p = predict(net, data.split(split), batch_size);
  return compute_metrics(p.scores, p.preds, p.labels, to_string(split));
}

/// Stage 2: backbones and fusion from `init` (a stage-1 checkpoint) or random
/// when `init` is null; fresh classifier; no augmentation; best validation AUC.
template <class T = float>
TrainResult train_stage2(const PreparedData& data, const Checkpoint* init, const ModelConfig& model,
                         const TrainConfig& cfg_in, const TrainOptions& opts = {}) {
  TrainConfig cfg = cfg_in;
  if (cfg.stage != Stage::Stage2) throw ConfigError("train_stage2: config stage must be 2");
  cfg.validate();
  if (init && init->stage != Stage::Stage1) throw ConfigError("train_stage2: init must be a stage-1 checkpoint");
  detail::check_resume<T>(opts, Stage::Stage2, cfg);

  nn::FusionNetwork<T> net(model);
  net.init(cfg.seed);
  if (init) restore(net, *init, {}, {"classifier"});
  nn::Adam<T> adam(net.params(), {cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps});

  TrainResult result;
  int start_epoch = 0;
  bool have_best = false;
  if (opts.resume) {
    restore(net, *opts.resume);
    restore_optimizer(adam, *opts.resume);
    start_epoch = opts.resume->epoch;
    result.best = opts.resume_best ? *opts.resume_best : *opts.resume;
    have_best = opts.resume->best_epoch >= 0;
  }
  auto stamp = [&](Checkpoint& c, int epochs_done) {
    c.stage = Stage::Stage2;
    c.epoch = epochs_done;
    c.seed = cfg.seed;
    c.metric_name = "val_auc";
    c.train_config = to_json(cfg);
    c.preprocess = detail::preprocess_state(data);
  };

  const auto& train = data.train;
  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    const auto order = detail::epoch_order(train.size(), cfg.seed, Stage::Stage2, epoch);
    double loss_sum = 0;
    std::size_t seen = 0;
    int batch_index = 0;
    for (std::size_t start = 0; start < train.size(); start += cfg.batch_size, ++batch_index) {
      auto batch = detail::batch_at(train, order, start, cfg.batch_size, true);
      const auto in = detail::build_plain<T>(batch, model);
      std::vector<int> labels;
      for (const auto* s : batch) labels.push_back(s->label);
      const auto logits = net.classify(net.embed(in));
      const auto ce = cross_entropy<T>(logits.matrix(), labels);
      nlohmann::ordered_json row{{"stage", 2},
                                 {"epoch", epoch},
                                 {"batch", batch_index},
                                 {"batch_checksum", hex64(batch_checksum(batch))},
                                 {"n", batch.size()},
                                 {"cross_entropy", static_cast<double>(ce.value)},
                                 {"lr", lr}};
      if (!std::isfinite(static_cast<double>(ce.value))) detail::dump_nonfinite(opts, 2, epoch, batch_index, batch, row);
      net.zero_grad();
      net.backward_logits(nn::Tensor<T>::from_matrix(ce.dlogits));
      adam.step(lr);
      detail::log_line(opts, row);
      loss_sum += static_cast<double>(ce.value) * static_cast<double>(batch.size());
      seen += batch.size();
    }
    const auto val = evaluate(net, data, Split::Val, cfg.batch_size);
    EpochRecord rec{epoch, lr, loss_sum / static_cast<double>(seen), val.auc, false};
    if (!have_best || val.auc > result.best.best_metric) {
      rec.improved = true;
      have_best = true;
      result.best = capture<T>(net, nullptr);
      stamp(result.best, epoch + 1);
      result.best.best_metric = val.auc;
      result.best.best_epoch = epoch;
    }
    result.history.push_back(rec);
    detail::log_line(opts, {{"stage", 2},
                            {"event", "epoch"},
                            {"epoch", epoch},
                            {"lr", lr},
                            {"train_loss", rec.train_loss},
                            {"val_auc", val.auc},
                            {"val_macro_f1", val.macro_f1},
                            {"val_accuracy", val.accuracy},
                            {"improved", rec.improved}});
    if (opts.on_epoch) {
      auto state = capture<T>(net, &adam);
      stamp(state, epoch + 1);
      state.best_metric = result.best.best_metric;
      state.best_epoch = result.best.best_epoch;
      opts.on_epoch(state, result.best);
    }
  }
  result.final_state = capture<T>(net, &adam);
  stamp(result.final_state, cfg.epochs);
  result.final_state.best_metric = result.best.best_metric;
  result.final_state.best_epoch = result.best.best_epoch;
  return result;
}

/// Rebuilds a network from a checkpoint for inference.
template <class T = float>
std::unique_ptr<nn::FusionNetwork<T>> load_network(const Checkpoint& c) {
  auto net = std::make_unique<nn::FusionNetwork<T>>(c.model);
  restore(*net, c);
  return net;
}

}  // namespace fusionprog
