#include "deixis/baseline.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "deixis/checkpoint.hpp"
#include "deixis/encoding.hpp"
#include "deixis/optimizer.hpp"

namespace deixis {

PointingLine pointing_line(const HandPose& hand) {
  const Vec2 span = hand.index_tip() - hand.wrist();
  const double norm = span.norm();
  if (norm == 0.0)
    throw std::invalid_argument(
        "pointing_line: wrist and fingertip coincide");
  return {hand.wrist(), span * (1.0 / norm)};
}

double point_line_distance(const Vec2& p, const PointingLine& line) {
  return std::abs(line.direction.cross(p - line.anchor));
}

double point_ray_distance(const Vec2& p, const PointingLine& line) {
  const Vec2 rel = p - line.anchor;
  if (rel.dot(line.direction) < 0.0) return rel.norm();
  return std::abs(line.direction.cross(rel));
}

namespace {

constexpr std::size_t kInputWidth = 2 * HandPose::kLandmarkCount;
constexpr std::size_t kHidden1 = 64;
constexpr std::size_t kHidden2 = 32;

Tensor uniform_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  std::vector<double> values(rows * cols);
  for (double& v : values) v = rng.uniform(-bound, bound);
  return Tensor::from({rows, cols}, std::move(values), true);
}

Tensor landmark_features(const HandPose& hand, const ImageDims& dims) {
  std::vector<double> features;
  features.reserve(kInputWidth);
  for (const Vec2& lm : hand.landmarks()) {
    const auto norm = normalize_point(lm, dims);
    features.push_back(norm[0]);
    features.push_back(norm[1]);
  }
  return Tensor::from({1, kInputWidth}, std::move(features));
}

}  // namespace

PointingClassifier::PointingClassifier() {
  w1_ = Tensor::zeros({kInputWidth, kHidden1}, true);
  b1_ = Tensor::zeros({kHidden1}, true);
  w2_ = Tensor::zeros({kHidden1, kHidden2}, true);
  b2_ = Tensor::zeros({kHidden2}, true);
  w3_ = Tensor::zeros({kHidden2, 1}, true);
  b3_ = Tensor::zeros({1}, true);
}

PointingClassifier PointingClassifier::random_init(Rng& rng) {
  PointingClassifier c;
  c.w1_ = uniform_matrix(kInputWidth, kHidden1, rng);
  c.w2_ = uniform_matrix(kHidden1, kHidden2, rng);
  c.w3_ = uniform_matrix(kHidden2, 1, rng);
  return c;
}

Tensor PointingClassifier::logits(const Tensor& inputs) const {
  const Tensor h1 = relu(add_rows(matmul(inputs, w1_), b1_));
  const Tensor h2 = relu(add_rows(matmul(h1, w2_), b2_));
  return add_rows(matmul(h2, w3_), b3_);
}

double PointingClassifier::probability(const HandPose& hand,
                                       const ImageDims& dims) const {
  return sigmoid(logits(landmark_features(hand, dims))).item();
}

void PointingClassifier::fit(std::span<const Sample> train_set,
                             const FitOptions& options) {
  if (train_set.empty())
    throw std::invalid_argument("classifier fit: empty training set");
  std::vector<Tensor> params;
  for (auto& [name, tensor] : named_parameters()) params.push_back(tensor);
  AdamConfig adam_config;
  adam_config.learning_rate = options.learning_rate;
  AdamOptimizer optimizer(std::move(params), adam_config);
  Rng rng(options.seed);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < order.size();
         start += options.batch_size) {
      const std::size_t stop =
          std::min(order.size(), start + options.batch_size);
      // one stacked forward for the whole batch
      std::vector<Tensor> features;
      std::vector<double> labels;
      features.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        const Sample& sample = train_set[order[i]];
        features.push_back(landmark_features(sample.hand, sample.dims));
        labels.push_back(sample.resting() ? 0.0 : 1.0);
      }
      std::vector<double> stacked;
      stacked.reserve(features.size() * kInputWidth);
      for (const Tensor& f : features)
        stacked.insert(stacked.end(), f.data().begin(), f.data().end());
      const Tensor inputs = Tensor::from(
          {features.size(), kInputWidth}, std::move(stacked));
      const Tensor scores = sigmoid(logits(inputs));
      const std::size_t label_count = labels.size();
      Tensor loss = bce_loss(
          scores, Tensor::from({label_count}, std::move(labels)));
      if (!std::isfinite(loss.item()))
        throw std::runtime_error("classifier fit: loss diverged at epoch " +
                                 std::to_string(epoch));
      optimizer.zero_grad();
      loss.backward();
      optimizer.step();
    }
  }
}

std::vector<std::pair<std::string, Tensor>>
PointingClassifier::named_parameters() const {
  return {{"mlp.w1", w1_}, {"mlp.b1", b1_}, {"mlp.w2", w2_},
          {"mlp.b2", b2_}, {"mlp.w3", w3_}, {"mlp.b3", b3_}};
}

void PointingClassifier::save(const std::string& path) const {
  nlohmann::json meta;
  meta["type"] = "baseline_mlp";
  save_checkpoint(path, meta, named_parameters());
}

PointingClassifier PointingClassifier::load(const std::string& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.meta().value("type", "") != "baseline_mlp")
    throw std::runtime_error("baseline: checkpoint '" + path +
                             "' is not a baseline classifier");
  PointingClassifier c;
  for (auto& [name, tensor] : c.named_parameters()) {
    const Tensor& stored = ckpt.require(name);
    if (stored.shape() != tensor.shape())
      throw std::runtime_error("baseline: shape mismatch for '" + name + "'");
    auto dst = tensor.mutable_data();
    auto src = stored.data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return c;
}

Prediction baseline_predict(const Sample& sample,
                            const PointingClassifier& classifier,
                            bool use_ray) {
  const std::size_t sentinel = sample.objects.sentinel_index();
  const PointingLine line = pointing_line(sample.hand);
  std::vector<std::size_t> by_distance(sample.objects.object_count());
  std::iota(by_distance.begin(), by_distance.end(), 0);
  std::vector<double> distance(by_distance.size());
  for (std::size_t i = 0; i < distance.size(); ++i) {
    const Vec2 c = sample.objects.token(i);
    distance[i] =
        use_ray ? point_ray_distance(c, line) : point_line_distance(c, line);
  }
  std::stable_sort(by_distance.begin(), by_distance.end(),
                   [&](std::size_t a, std::size_t b) {
                     return distance[a] < distance[b];
                   });

  Prediction prediction;
  const bool pointing =
      classifier.probability(sample.hand, sample.dims) >= kPointingThreshold;
  if (pointing) {
    prediction.ranked = std::move(by_distance);
    prediction.ranked.push_back(sentinel);
  } else {
    prediction.ranked.reserve(sentinel + 1);
    prediction.ranked.push_back(sentinel);
    prediction.ranked.insert(prediction.ranked.end(), by_distance.begin(),
                             by_distance.end());
  }
  prediction.top = prediction.ranked.front();
  return prediction;
}

}  // namespace deixis
