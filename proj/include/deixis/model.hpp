#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "deixis/dataset.hpp"
#include "deixis/encoding.hpp"
#include "deixis/rng.hpp"
#include "deixis/tensor.hpp"

namespace deixis {

enum class ModalityMode { kTwo, kThree };

std::string to_string(ModalityMode mode);
ModalityMode modality_from_string(const std::string& name);

struct ModelConfig {
  std::size_t d_t = 64;
  std::size_t n_enc_layers = 2;
  std::size_t n_dec_layers = 2;
  std::size_t n_heads = 4;
  std::size_t ffn_hidden = 128;
  ModalityMode modality_mode = ModalityMode::kThree;

  void validate() const;  // d_t even, heads divide d_t, sizes positive
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// Per-token scores in (0,1); the last entry belongs to the non-object token.
struct ScoreVector {
  std::vector<double> scores;

  std::size_t sentinel_index() const { return scores.size() - 1; }
};

// Indices sorted by descending score, ties broken by ascending index.
struct Prediction {
  std::vector<std::size_t> ranked;
  std::size_t top = 0;

  bool top_is_sentinel(std::size_t sentinel) const { return top == sentinel; }
};

Prediction predict(const ScoreVector& scores);

// Multi-hot target vector over tokens; a resting hand is positive only at
// the sentinel. Throws on out-of-range target indices.
std::vector<double> loss_targets(const Sample& sample);

struct AttentionParams {
  Tensor wq, wk, wv, wo;  // (d, d)
  Tensor bq, bk, bv, bo;  // (d)
};

struct LayerNormParams {
  Tensor gain, bias;  // (d)
};

struct FfnParams {
  Tensor w1, b1, w2, b2;
};

struct EncoderLayerParams {
  AttentionParams cross;
  LayerNormParams norm1;
  FfnParams ffn;
  LayerNormParams norm2;
};

struct DecoderLayerParams {
  AttentionParams self;
  LayerNormParams norm1;
  AttentionParams cross;
  LayerNormParams norm2;
  FfnParams ffn;
  LayerNormParams norm3;
};

// Encoder-decoder over hand / object / relation token streams. The encoder
// reads pose tokens as queries against object keys/values and emits a
// pose-object memory; the decoder self-attends over its input tokens and
// cross-attends into that memory; a shared feedforward head with a sigmoid
// scores every token. Inference over frozen weights is concurrency-safe;
// training mutates weights and is single-threaded per model instance.
class InterModalityTransformer {
 public:
  InterModalityTransformer(ModelConfig config, Rng& rng);

  Tensor encode(const Tensor& pose, const Tensor& objects) const;
  Tensor decode(const Tensor& decoder_in, const Tensor& memory) const;
  Tensor score_tokens(const Tensor& decoded) const;  // (n, 1)

  // Graph-bearing column of token scores for one sample.
  Tensor forward_scores(const Sample& sample) const;
  ScoreVector forward(const Sample& sample) const;
  Tensor sample_loss(const Sample& sample) const;

  const ModelConfig& config() const { return config_; }
  const EncodingParams& encoding_params() const { return encoding_; }

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;

  void save(const std::string& path) const;
  static InterModalityTransformer load(const std::string& path);

 private:
  Tensor attention_block(const Tensor& queries, const Tensor& keys_values,
                         const AttentionParams& params) const;

  ModelConfig config_;
  EncodingParams encoding_;
  std::vector<EncoderLayerParams> encoder_;
  std::vector<DecoderLayerParams> decoder_;
  FfnParams score_head_;
};

// --- training ----------------------------------------------------------------

struct TrainOptions {
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  // Stop once validation top-1 reaches this level (checked per epoch).
  std::optional<double> early_stop_val_top1;
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_top1 = 0.0;
  double val_top2 = 0.0;
};

struct TrainLog {
  std::vector<EpochStats> epochs;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Minimizes mean BCE over the training samples with the adaptive-moment
// optimizer; a fixed seed reproduces the loss trajectory exactly. Throws
// with a diagnostic if the loss diverges to NaN.
TrainLog train_model(InterModalityTransformer& model,
                     std::span<const Sample> train_set,
                     std::span<const Sample> val_set,
                     const TrainOptions& options,
                     const EpochCallback& on_epoch = nullptr);

}  // namespace deixis
