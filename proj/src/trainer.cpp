#include <cmath>
#include <numeric>
#include <ostream>

#include "hfn/trainer.hpp"

namespace hfn {

namespace {

std::vector<int64_t> epoch_permutation(int64_t n, uint64_t seed, uint32_t epoch) {
  std::vector<int64_t> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), int64_t(0));
  RngStream rng(seed, epoch, RngPurpose::shuffle);
  for (int64_t i = n - 1; i > 0; --i) {
    const int64_t j = rng.below(static_cast<uint32_t>(i + 1));
    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
  }
  return perm;
}

std::vector<int> gather_labels(const Dataset& d, const std::vector<int64_t>& idx) {
  std::vector<int> out(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) out[i] = d.labels[static_cast<size_t>(idx[i])];
  return out;
}

}  // namespace

double evaluate(Model<float>& model, const Dataset& data, int batch_size) {
  if (data.size() == 0) throw ConfigError("evaluate: empty split");
  model.refresh_masks();
  int64_t correct = 0;
  for (int64_t begin = 0; begin < data.size(); begin += batch_size) {
    const int64_t end = std::min<int64_t>(begin + batch_size, data.size());
    std::vector<int64_t> idx(static_cast<size_t>(end - begin));
    std::iota(idx.begin(), idx.end(), begin);
    auto batch = assemble_batch(data, idx, AugmentMode::none, nullptr);
    auto logits = model.forward(batch, Mode::eval);
    const int k = logits.shape[1];
    for (int64_t i = 0; i < end - begin; ++i) {
      const float* row = logits.ptr() + i * k;
      int best = 0;
      for (int j = 1; j < k; ++j) {
        if (row[j] > row[best]) best = j;  // first max wins ties
      }
      if (best == data.labels[static_cast<size_t>(begin + i)]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train(Model<float>& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, std::ostream* metrics_log) {
  if (model.method != cfg.method) {
    throw ConfigError("train: model was built for method " + std::string(to_string(model.method)) +
                      " but config says " + to_string(cfg.method));
  }
  if (train_set.classes != model.cfg.num_classes) {
    throw ConfigError("train: dataset has " + std::to_string(train_set.classes) +
                      " classes, model expects " + std::to_string(model.cfg.num_classes));
  }
  if (cfg.batch_size < 2) throw ConfigError("train: batch_size must be >= 2");

  TrainResult result;
  result.initial_weight_checksum = model.weights_checksum();
  const uint64_t initial_scores = model.scores_checksum();
  const bool supermask = is_supermask(cfg.method);

  if (metrics_log) (*metrics_log) << "epoch,lr,train_loss,val_top1\n";

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg.epochs, cfg.base_lr, cfg.warmup_epochs);
    const auto perm = epoch_permutation(train_set.size(), cfg.seed, static_cast<uint32_t>(epoch));
    RngStream aug_rng(cfg.seed, static_cast<uint32_t>(epoch), RngPurpose::augment);

    double loss_sum = 0.0;
    int64_t seen = 0;
    for (int64_t begin = 0; begin + 1 < train_set.size(); begin += cfg.batch_size) {
      const int64_t end = std::min<int64_t>(begin + cfg.batch_size, train_set.size());
      if (end - begin < 2) break;  // batch statistics need at least two samples
      std::vector<int64_t> idx(perm.begin() + begin, perm.begin() + end);
      auto batch = assemble_batch(train_set, idx, cfg.augment, &aug_rng);
      auto labels = gather_labels(train_set, idx);

      ModelCtx<float> ctx;
      auto logits = model.forward(batch, Mode::train, &ctx);
      auto loss = softmax_cross_entropy(logits, labels);
      if (!std::isfinite(loss.loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", sample offset " +
                           std::to_string(begin) + " (lr=" + std::to_string(lr) + ")");
      }
      loss_sum += loss.loss * static_cast<double>(end - begin);
      seen += end - begin;

      model.zero_grads();
      model.backward(loss.grad_logits, ctx);
      for (auto& p : model.trainable_params()) {
        sgd_step(*p.param, *p.grad, *p.vel, lr, cfg.momentum, cfg.weight_decay);
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;

    const bool eval_now = (epoch % cfg.eval_cadence == 0) || epoch == cfg.epochs - 1;
    if (eval_now) {
      stats.val_top1 = evaluate(model, val_set);
      if (result.best_epoch < 0 || stats.val_top1 > result.best_val) {
        result.best_epoch = epoch;
        result.best_val = stats.val_top1;
        result.best_model = model;  // masks freshly cached by evaluate
      }
    } else {
      stats.val_top1 = result.history.empty() ? 0.0 : result.history.back().val_top1;
    }

    if (supermask && model.weights_checksum() != result.initial_weight_checksum) {
      throw NumericError("frozen-weight invariant violated at epoch " + std::to_string(epoch));
    }
    if (!supermask && model.scores_checksum() != initial_scores) {
      throw NumericError("score tensors mutated under weight learning at epoch " +
                         std::to_string(epoch));
    }

    if (metrics_log) {
      (*metrics_log) << stats.epoch << ',' << stats.lr << ',' << stats.train_loss << ','
                     << stats.val_top1 << '\n';
    }
    result.history.push_back(stats);
  }

  result.final_weight_checksum = model.weights_checksum();
  return result;
}

}  // namespace hfn
