#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "deixis/model.hpp"
#include "deixis/optimizer.hpp"

namespace deixis {

namespace {

struct ValStats {
  double loss = 0.0;
  double top1 = 0.0;
  double top2 = 0.0;
};

bool hits_target(const Prediction& pred, const Sample& sample,
                 std::size_t depth) {
  const std::size_t limit = std::min(depth, pred.ranked.size());
  for (std::size_t i = 0; i < limit; ++i) {
    if (std::binary_search(sample.targets.begin(), sample.targets.end(),
                           pred.ranked[i]))
      return true;
  }
  return false;
}

ValStats evaluate(const InterModalityTransformer& model,
                  std::span<const Sample> samples) {
  ValStats stats;
  if (samples.empty()) return stats;
  for (const Sample& sample : samples) {
    const ScoreVector scores = model.forward(sample);
    stats.loss += [&] {
      const std::vector<double> targets = loss_targets(sample);
      double loss = 0.0;
      for (std::size_t i = 0; i < targets.size(); ++i) {
        const double p =
            std::clamp(scores.scores[i], 1e-12, 1.0 - 1e-12);
        loss -= targets[i] * std::log(p) +
                (1.0 - targets[i]) * std::log(1.0 - p);
      }
      return loss / static_cast<double>(targets.size());
    }();
    const Prediction pred = predict(scores);
    stats.top1 += hits_target(pred, sample, 1) ? 1.0 : 0.0;
    stats.top2 += hits_target(pred, sample, 2) ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(samples.size());
  stats.loss /= n;
  stats.top1 /= n;
  stats.top2 /= n;
  return stats;
}

}  // namespace

TrainLog train_model(InterModalityTransformer& model,
                     std::span<const Sample> train_set,
                     std::span<const Sample> val_set,
                     const TrainOptions& options,
                     const EpochCallback& on_epoch) {
  if (train_set.empty())
    throw std::invalid_argument("train: empty training set");
  if (options.batch_size == 0)
    throw std::invalid_argument("train: batch_size must be positive");

  AdamConfig adam_config;
  adam_config.learning_rate = options.learning_rate;
  AdamOptimizer optimizer(model.parameters(), adam_config);
  Rng rng(options.seed);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainLog log;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    // Fisher-Yates driven by the run seed; the trajectory is reproducible.
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += options.batch_size) {
      const std::size_t stop =
          std::min(order.size(), start + options.batch_size);
      std::vector<Tensor> losses;
      losses.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i)
        losses.push_back(model.sample_loss(train_set[order[i]]));
      Tensor batch_loss =
          scale(add_n(losses), 1.0 / static_cast<double>(losses.size()));
      const double loss_value = batch_loss.item();
      if (!std::isfinite(loss_value))
        throw std::runtime_error(
            "train: loss diverged to a non-finite value at epoch " +
            std::to_string(epoch) + ", batch " +
            std::to_string(start / options.batch_size));
      epoch_loss += loss_value * static_cast<double>(losses.size());
      optimizer.zero_grad();
      batch_loss.backward();
      optimizer.step();
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / static_cast<double>(train_set.size());
    const ValStats val = evaluate(model, val_set);
    stats.val_loss = val.loss;
    stats.val_top1 = val.top1;
    stats.val_top2 = val.top2;
    log.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);

    if (options.early_stop_val_top1 && !val_set.empty() &&
        val.top1 >= *options.early_stop_val_top1)
      break;
  }
  return log;
}

}  // namespace deixis
