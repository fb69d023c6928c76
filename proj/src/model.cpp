#include "deixis/model.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "deixis/checkpoint.hpp"

namespace deixis {

namespace {

Tensor uniform_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  std::vector<double> values(rows * cols);
  for (double& v : values) v = rng.uniform(-bound, bound);
  return Tensor::from({rows, cols}, std::move(values), true);
}

AttentionParams make_attention(std::size_t d, Rng& rng) {
  AttentionParams p;
  p.wq = uniform_matrix(d, d, rng);
  p.wk = uniform_matrix(d, d, rng);
  p.wv = uniform_matrix(d, d, rng);
  p.wo = uniform_matrix(d, d, rng);
  p.bq = Tensor::zeros({d}, true);
  p.bk = Tensor::zeros({d}, true);
  p.bv = Tensor::zeros({d}, true);
  p.bo = Tensor::zeros({d}, true);
  return p;
}

LayerNormParams make_norm(std::size_t d) {
  return {Tensor::full({d}, 1.0, true), Tensor::zeros({d}, true)};
}

FfnParams make_ffn(std::size_t d_in, std::size_t hidden, std::size_t d_out,
                   Rng& rng) {
  FfnParams p;
  p.w1 = uniform_matrix(d_in, hidden, rng);
  p.b1 = Tensor::zeros({hidden}, true);
  p.w2 = uniform_matrix(hidden, d_out, rng);
  p.b2 = Tensor::zeros({d_out}, true);
  return p;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_rows(matmul(x, w), b);
}

Tensor ffn_forward(const Tensor& x, const FfnParams& p) {
  return linear(relu(linear(x, p.w1, p.b1)), p.w2, p.b2);
}

void collect_attention(const std::string& prefix, const AttentionParams& p,
                       std::vector<std::pair<std::string, Tensor>>& out) {
  out.emplace_back(prefix + ".wq", p.wq);
  out.emplace_back(prefix + ".wk", p.wk);
  out.emplace_back(prefix + ".wv", p.wv);
  out.emplace_back(prefix + ".wo", p.wo);
  out.emplace_back(prefix + ".bq", p.bq);
  out.emplace_back(prefix + ".bk", p.bk);
  out.emplace_back(prefix + ".bv", p.bv);
  out.emplace_back(prefix + ".bo", p.bo);
}

void collect_norm(const std::string& prefix, const LayerNormParams& p,
                  std::vector<std::pair<std::string, Tensor>>& out) {
  out.emplace_back(prefix + ".gain", p.gain);
  out.emplace_back(prefix + ".bias", p.bias);
}

void collect_ffn(const std::string& prefix, const FfnParams& p,
                 std::vector<std::pair<std::string, Tensor>>& out) {
  out.emplace_back(prefix + ".w1", p.w1);
  out.emplace_back(prefix + ".b1", p.b1);
  out.emplace_back(prefix + ".w2", p.w2);
  out.emplace_back(prefix + ".b2", p.b2);
}

}  // namespace

std::string to_string(ModalityMode mode) {
  return mode == ModalityMode::kTwo ? "two" : "three";
}

ModalityMode modality_from_string(const std::string& name) {
  if (name == "two") return ModalityMode::kTwo;
  if (name == "three") return ModalityMode::kThree;
  throw std::invalid_argument("modality mode must be 'two' or 'three', got '" +
                              name + "'");
}

void ModelConfig::validate() const {
  if (d_t == 0 || d_t % 2 != 0)
    throw std::invalid_argument("model: d_t must be a positive even number");
  if (n_heads == 0 || d_t % n_heads != 0)
    throw std::invalid_argument("model: n_heads must divide d_t");
  if (n_enc_layers == 0)
    throw std::invalid_argument("model: n_enc_layers must be positive");
  if (ffn_hidden == 0)
    throw std::invalid_argument("model: ffn_hidden must be positive");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"d_t", d_t},
          {"n_enc_layers", n_enc_layers},
          {"n_dec_layers", n_dec_layers},
          {"n_heads", n_heads},
          {"ffn_hidden", ffn_hidden},
          {"modality_mode", to_string(modality_mode)}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig config;
  if (j.contains("d_t")) config.d_t = j.at("d_t").get<std::size_t>();
  if (j.contains("n_enc_layers"))
    config.n_enc_layers = j.at("n_enc_layers").get<std::size_t>();
  if (j.contains("n_dec_layers"))
    config.n_dec_layers = j.at("n_dec_layers").get<std::size_t>();
  if (j.contains("n_heads")) config.n_heads = j.at("n_heads").get<std::size_t>();
  if (j.contains("ffn_hidden"))
    config.ffn_hidden = j.at("ffn_hidden").get<std::size_t>();
  if (j.contains("modality_mode"))
    config.modality_mode =
        modality_from_string(j.at("modality_mode").get<std::string>());
  config.validate();
  return config;
}

Prediction predict(const ScoreVector& scores) {
  if (scores.scores.empty())
    throw std::invalid_argument("predict: empty score vector");
  Prediction p;
  p.ranked.resize(scores.scores.size());
  std::iota(p.ranked.begin(), p.ranked.end(), 0);
  std::stable_sort(p.ranked.begin(), p.ranked.end(),
                   [&](std::size_t a, std::size_t b) {
                     return scores.scores[a] > scores.scores[b];
                   });
  p.top = p.ranked.front();
  return p;
}

std::vector<double> loss_targets(const Sample& sample) {
  std::vector<double> targets(sample.objects.token_count(), 0.0);
  for (std::size_t t : sample.targets) {
    if (t >= targets.size())
      throw std::invalid_argument("loss_targets: target index out of range");
    targets[t] = 1.0;
  }
  return targets;
}

InterModalityTransformer::InterModalityTransformer(ModelConfig config,
                                                   Rng& rng)
    : config_(config) {
  config_.validate();
  encoding_ = EncodingParams::init(config_.d_t, rng);
  const std::size_t d = config_.d_t;
  encoder_.reserve(config_.n_enc_layers);
  for (std::size_t i = 0; i < config_.n_enc_layers; ++i) {
    EncoderLayerParams layer;
    layer.cross = make_attention(d, rng);
    layer.norm1 = make_norm(d);
    layer.ffn = make_ffn(d, config_.ffn_hidden, d, rng);
    layer.norm2 = make_norm(d);
    encoder_.push_back(std::move(layer));
  }
  decoder_.reserve(config_.n_dec_layers);
  for (std::size_t i = 0; i < config_.n_dec_layers; ++i) {
    DecoderLayerParams layer;
    layer.self = make_attention(d, rng);
    layer.norm1 = make_norm(d);
    layer.cross = make_attention(d, rng);
    layer.norm2 = make_norm(d);
    layer.ffn = make_ffn(d, config_.ffn_hidden, d, rng);
    layer.norm3 = make_norm(d);
    decoder_.push_back(std::move(layer));
  }
  score_head_ = make_ffn(d, config_.ffn_hidden, 1, rng);
}

Tensor InterModalityTransformer::attention_block(
    const Tensor& queries, const Tensor& keys_values,
    const AttentionParams& params) const {
  const Tensor q = linear(queries, params.wq, params.bq);
  const Tensor k = linear(keys_values, params.wk, params.bk);
  const Tensor v = linear(keys_values, params.wv, params.bv);
  const std::size_t head_dim = config_.d_t / config_.n_heads;
  std::vector<Tensor> heads;
  heads.reserve(config_.n_heads);
  for (std::size_t h = 0; h < config_.n_heads; ++h) {
    heads.push_back(scaled_attention(slice_cols(q, h * head_dim, head_dim),
                                     slice_cols(k, h * head_dim, head_dim),
                                     slice_cols(v, h * head_dim, head_dim)));
  }
  return linear(concat_cols(heads), params.wo, params.bo);
}

Tensor InterModalityTransformer::encode(const Tensor& pose,
                                        const Tensor& objects) const {
  Tensor stream = pose;
  for (const EncoderLayerParams& layer : encoder_) {
    const Tensor attended = attention_block(stream, objects, layer.cross);
    stream = layer_norm_rows(add(stream, attended), layer.norm1.gain,
                             layer.norm1.bias);
    const Tensor fed = ffn_forward(stream, layer.ffn);
    stream =
        layer_norm_rows(add(stream, fed), layer.norm2.gain, layer.norm2.bias);
  }
  return stream;
}

Tensor InterModalityTransformer::decode(const Tensor& decoder_in,
                                        const Tensor& memory) const {
  Tensor stream = decoder_in;
  for (const DecoderLayerParams& layer : decoder_) {
    const Tensor self_attended = attention_block(stream, stream, layer.self);
    stream = layer_norm_rows(add(stream, self_attended), layer.norm1.gain,
                             layer.norm1.bias);
    const Tensor cross_attended = attention_block(stream, memory, layer.cross);
    stream = layer_norm_rows(add(stream, cross_attended), layer.norm2.gain,
                             layer.norm2.bias);
    const Tensor fed = ffn_forward(stream, layer.ffn);
    stream =
        layer_norm_rows(add(stream, fed), layer.norm3.gain, layer.norm3.bias);
  }
  return stream;
}

Tensor InterModalityTransformer::score_tokens(const Tensor& decoded) const {
  return sigmoid(ffn_forward(decoded, score_head_));
}

Tensor InterModalityTransformer::forward_scores(const Sample& sample) const {
  const AssembledInputs inputs = assemble(sample.hand, sample.objects,
                                          sample.relations, sample.dims,
                                          encoding_);
  const Tensor memory = encode(inputs.pose, inputs.objects);
  const Tensor& decoder_in = config_.modality_mode == ModalityMode::kThree
                                 ? inputs.relations
                                 : inputs.objects;
  return score_tokens(decode(decoder_in, memory));
}

ScoreVector InterModalityTransformer::forward(const Sample& sample) const {
  const Tensor scores = forward_scores(sample);
  ScoreVector out;
  out.scores.assign(scores.data().begin(), scores.data().end());
  return out;
}

Tensor InterModalityTransformer::sample_loss(const Sample& sample) const {
  const Tensor scores = forward_scores(sample);
  std::vector<double> targets = loss_targets(sample);
  const std::size_t target_count = targets.size();
  return bce_loss(scores, Tensor::from({target_count}, std::move(targets)));
}

std::vector<std::pair<std::string, Tensor>>
InterModalityTransformer::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("embedding.pose.wx", encoding_.pose_x);
  out.emplace_back("embedding.pose.wy", encoding_.pose_y);
  out.emplace_back("embedding.object.wx", encoding_.object_x);
  out.emplace_back("embedding.object.wy", encoding_.object_y);
  out.emplace_back("embedding.relation.w", encoding_.relation_w);
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    const std::string prefix = "encoder." + std::to_string(i);
    collect_attention(prefix + ".cross_attn", encoder_[i].cross, out);
    collect_norm(prefix + ".norm1", encoder_[i].norm1, out);
    collect_ffn(prefix + ".ffn", encoder_[i].ffn, out);
    collect_norm(prefix + ".norm2", encoder_[i].norm2, out);
  }
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    const std::string prefix = "decoder." + std::to_string(i);
    collect_attention(prefix + ".self_attn", decoder_[i].self, out);
    collect_norm(prefix + ".norm1", decoder_[i].norm1, out);
    collect_attention(prefix + ".cross_attn", decoder_[i].cross, out);
    collect_norm(prefix + ".norm2", decoder_[i].norm2, out);
    collect_ffn(prefix + ".ffn", decoder_[i].ffn, out);
    collect_norm(prefix + ".norm3", decoder_[i].norm3, out);
  }
  collect_ffn("score_head", score_head_, out);
  return out;
}

std::vector<Tensor> InterModalityTransformer::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, tensor] : named_parameters()) out.push_back(tensor);
  return out;
}

void InterModalityTransformer::save(const std::string& path) const {
  nlohmann::json meta;
  meta["type"] = "pointing_model";
  meta["model_config"] = config_.to_json();
  save_checkpoint(path, meta, named_parameters());
}

InterModalityTransformer InterModalityTransformer::load(
    const std::string& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  const nlohmann::json meta = ckpt.meta();
  if (meta.value("type", "") != "pointing_model")
    throw std::runtime_error("model: checkpoint '" + path +
                             "' is not a pointing model");
  Rng rng(0);
  InterModalityTransformer model(ModelConfig::from_json(meta.at("model_config")),
                                 rng);
  for (auto& [name, tensor] : model.named_parameters()) {
    const Tensor& stored = ckpt.require(name);
    if (stored.shape() != tensor.shape())
      throw std::runtime_error("model: shape mismatch for '" + name + "'");
    auto dst = tensor.mutable_data();
    auto src = stored.data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return model;
}

}  // namespace deixis
