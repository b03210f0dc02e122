#include "emomusic/model/emomodel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "emomusic/error.hpp"
#include "emomusic/util/json.hpp"

namespace emomusic::model {

using nn::Tensor;
using nn::Var;
using tok::TokenId;
using tok::Vocabulary;

std::string_view to_string(ImageExtractor e) {
  return e == ImageExtractor::TinyCnn ? "tiny-cnn" : "precomputed";
}

ImageExtractor image_extractor_from_string(std::string_view s) {
  if (s == "tiny-cnn") return ImageExtractor::TinyCnn;
  if (s == "precomputed") return ImageExtractor::Precomputed;
  throw Error(ErrorCode::ConfigError, "image_extractor must be 'tiny-cnn' or 'precomputed', got '" + std::string(s) + "'");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::ConfigError, "model: " + m); };
  if (encoder_blocks < 1) fail("encoder_blocks must be at least 1");
  nn::AttentionConfig{model_dim, head_count}.validate();
  if (ff_dim < 1) fail("ff_dim must be positive");
  if (max_len < 2) fail("max_len must be at least 2");
  if (time_shift_bins < 1 || velocity_bins < 1 || velocity_bins > 127) fail("vocabulary bins out of range");
  if (image_extractor == ImageExtractor::TinyCnn && image_size < 4) fail("image_size must be at least 4");
  if (!(embedding_std > 0)) fail("embedding_std must be positive");
}

bool ModelConfig::in_ablation_grid() const {
  return (encoder_blocks >= 2 && encoder_blocks <= 4) &&
         (decoder_blocks == 0 || decoder_blocks == 2 || decoder_blocks == 3);
}

nlohmann::json ModelConfig::to_json() const {
  return {{"encoder_blocks", encoder_blocks}, {"decoder_blocks", decoder_blocks},
          {"model_dim", model_dim},           {"head_count", head_count},
          {"ff_dim", ff_dim},                 {"max_len", max_len},
          {"time_shift_bins", time_shift_bins}, {"velocity_bins", velocity_bins},
          {"image_extractor", std::string(to_string(image_extractor))},
          {"image_size", image_size},         {"embedding_std", embedding_std}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  util::reject_unknown_keys(j,
                            {"encoder_blocks", "decoder_blocks", "model_dim", "head_count", "ff_dim", "max_len",
                             "time_shift_bins", "velocity_bins", "image_extractor", "image_size", "embedding_std"},
                            "model");
  ModelConfig c;
  util::read_key(j, "encoder_blocks", c.encoder_blocks, "model");
  util::read_key(j, "decoder_blocks", c.decoder_blocks, "model");
  util::read_key(j, "model_dim", c.model_dim, "model");
  util::read_key(j, "head_count", c.head_count, "model");
  util::read_key(j, "ff_dim", c.ff_dim, "model");
  util::read_key(j, "max_len", c.max_len, "model");
  util::read_key(j, "time_shift_bins", c.time_shift_bins, "model");
  util::read_key(j, "velocity_bins", c.velocity_bins, "model");
  std::string extractor(to_string(c.image_extractor));
  util::read_key(j, "image_extractor", extractor, "model");
  c.image_extractor = image_extractor_from_string(extractor);
  util::read_key(j, "image_size", c.image_size, "model");
  util::read_key(j, "embedding_std", c.embedding_std, "model");
  c.validate();
  return c;
}

EmoModel::EmoModel(ModelConfig config, util::Rng& rng) : config_(std::move(config)), vocab_(config_.vocabulary()) {
  config_.validate();
  const std::size_t d = config_.model_dim;
  const auto v = static_cast<std::size_t>(vocab_.size());
  const nn::AttentionConfig attn{d, config_.head_count};
  if (config_.image_extractor == ImageExtractor::TinyCnn) cnn_.emplace("image.cnn", rng);
  enc_tokens_ = nn::Embedding("encoder.tokens", v, d, config_.embedding_std, rng);
  enc_positions_ = nn::Embedding("encoder.positions", config_.max_len, d, config_.embedding_std, rng);
  for (std::size_t i = 0; i < config_.encoder_blocks; ++i)
    encoder_.emplace_back("encoder.block" + std::to_string(i), attn, config_.ff_dim, rng);
  image_proj_ = nn::Linear("merge.image_proj", kImageFeatureDim, d, rng);
  memory_proj_ = nn::Linear("decoder.memory_proj", 2 * d, d, rng);
  dec_tokens_ = nn::Embedding("decoder.tokens", v, d, config_.embedding_std, rng);
  dec_positions_ = nn::Embedding("decoder.positions", config_.max_len, d, config_.embedding_std, rng);
  for (std::size_t i = 0; i < config_.decoder_blocks; ++i)
    decoder_.emplace_back("decoder.block" + std::to_string(i), attn, config_.ff_dim, rng);
  if (config_.decoder_blocks == 0) {
    shallow_ff_ = nn::FeedForward("decoder.ff", d, config_.ff_dim, rng);
    shallow_norm_ = nn::LayerNorm("decoder.ln", d);
  }
  head_ = nn::Linear("decoder.head", d, v, rng);
}

nn::ParameterList EmoModel::parameters() {
  nn::ParameterList list;
  if (cnn_) cnn_->collect(list);
  enc_tokens_.collect(list);
  enc_positions_.collect(list);
  for (auto& b : encoder_) b.collect(list);
  image_proj_.collect(list);
  memory_proj_.collect(list);
  dec_tokens_.collect(list);
  dec_positions_.collect(list);
  for (auto& b : decoder_) b.collect(list);
  if (config_.decoder_blocks == 0) {
    shallow_ff_.collect(list);
    shallow_norm_.collect(list);
  }
  head_.collect(list);
  return list;
}

Var EmoModel::encode_image(const Tensor& input) const {
  if (config_.image_extractor == ImageExtractor::Precomputed) {
    if (input.size() != kImageFeatureDim)
      throw Error(ErrorCode::BadFeatureFile, "precomputed image input must have 512 values, got " +
                                                 std::to_string(input.size()));
    return Var::constant(input.reshaped({1, kImageFeatureDim}));
  }
  const std::size_t s = config_.image_size;
  if (input.shape() != nn::Shape{3, s, s})
    throw Error(ErrorCode::BadImage, "tiny-cnn input must be 3x" + std::to_string(s) + "x" + std::to_string(s) +
                                         ", got " + nn::shape_string(input.shape()));
  return cnn_->forward(Var::constant(input));
}

Tensor load_image_input(const ModelConfig& config, const std::filesystem::path& path) {
  if (config.image_extractor == ImageExtractor::Precomputed) return read_feature_file(path).as_row();
  return image_to_tensor(load_image(path), config.image_size);
}

Tensor EmoModel::load_image_input(const std::filesystem::path& path) const { return model::load_image_input(config_, path); }

void EmoModel::check_prefix(std::span<const TokenId> ids) const {
  if (ids.size() > config_.max_len)
    throw Error(ErrorCode::PrefixTooLong, "sequence of " + std::to_string(ids.size()) + " tokens exceeds max_len " +
                                              std::to_string(config_.max_len));
  for (TokenId id : ids)
    if (!vocab_.valid(id))
      throw Error(ErrorCode::VocabMismatch, "token id " + std::to_string(id) + " outside the vocabulary of " +
                                                std::to_string(vocab_.size()));
}

Var EmoModel::embed(const nn::Embedding& tokens, const nn::Embedding& positions, std::span<const TokenId> ids) const {
  std::vector<TokenId> pos(ids.size());
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<TokenId>(i);
  return nn::add(tokens.forward(ids), positions.forward(pos));
}

Var EmoModel::encoder_rows(std::span<const TokenId> ids) const {
  const std::size_t n = ids.size();
  // Causal self-attention restricted to non-PAD keys; each row only sees its
  // own prefix, so pooled prefixes match separate encodings exactly.
  Tensor mask({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) mask.at(i, j) = ids[j] != Vocabulary::kPad ? 1 : 0;
  Var x = embed(enc_tokens_, enc_positions_, ids);
  for (const auto& block : encoder_) x = block.forward(x, &mask);
  return x;
}

Var EmoModel::encode_midi(std::span<const TokenId> ids) const {
  check_prefix(ids);
  if (ids.empty()) return Var::constant(Tensor({1, config_.model_dim}));
  std::vector<bool> valid(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) valid[i] = ids[i] != Vocabulary::kPad;
  return nn::mean_rows(encoder_rows(ids), valid);
}

Var EmoModel::encode_midi_prefixes(std::span<const TokenId> ids) const {
  check_prefix(ids);
  if (ids.empty()) throw Error(ErrorCode::ShapeMismatch, "encode_midi_prefixes needs at least one token");
  std::vector<bool> valid(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) valid[i] = ids[i] != Vocabulary::kPad;
  return nn::cumulative_mean_rows(encoder_rows(ids), valid);
}

Var EmoModel::merge(const Var& image_feature, const Var& contexts) const {
  const std::size_t r = contexts.value().rows();
  if (contexts.value().cols() != config_.model_dim)
    throw Error(ErrorCode::ShapeMismatch, "merge: context width differs from model_dim");
  Var img = image_proj_.forward(image_feature);
  if (r != 1) img = nn::matmul(Var::constant(Tensor({r, 1}, nn::Real(1))), img);
  return nn::concat_cols({img, contexts});
}

namespace {

Var decoder_stack(const std::vector<nn::TransformerBlock>& blocks, const Var& memory, const Var& x) {
  const std::size_t n = x.value().rows();
  const Tensor mask = nn::causal_mask(n + 1);
  Var h = nn::concat_rows({memory, x});
  for (const auto& block : blocks) h = block.forward(h, &mask);
  return nn::slice_rows(h, 1, n);
}

}  // namespace

Var EmoModel::decode_logits(const Var& joint, std::span<const TokenId> prefix) const {
  check_prefix(prefix);
  if (prefix.empty()) throw Error(ErrorCode::ShapeMismatch, "decode_logits needs a non-empty prefix");
  if (joint.value().shape() != nn::Shape{1, 2 * config_.model_dim})
    throw Error(ErrorCode::ShapeMismatch, "joint vector must be 1x" + std::to_string(2 * config_.model_dim));
  const Var memory = memory_proj_.forward(joint);
  const Var x = embed(dec_tokens_, dec_positions_, prefix);
  if (decoder_.empty()) {
    const Var mem_rows = nn::matmul(Var::constant(Tensor({prefix.size(), 1}, nn::Real(1))), memory);
    const Var h = nn::add(x, mem_rows);
    return head_.forward(shallow_norm_.forward(nn::add(h, shallow_ff_.forward(h))));
  }
  return head_.forward(decoder_stack(decoder_, memory, x));
}

Var EmoModel::teacher_forced_logits(const Var& image_feature, std::span<const TokenId> prefix) const {
  const Var joints = merge(image_feature, encode_midi_prefixes(prefix));
  const Var memory = memory_proj_.forward(joints);  // T×d, row t conditions position t
  const std::size_t n = prefix.size();
  if (decoder_.empty()) {
    const Var h = nn::add(embed(dec_tokens_, dec_positions_, prefix), memory);
    return head_.forward(shallow_norm_.forward(nn::add(h, shallow_ff_.forward(h))));
  }
  std::vector<Var> rows;
  rows.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    const Var x = embed(dec_tokens_, dec_positions_, prefix.first(t + 1));
    rows.push_back(nn::slice_rows(decoder_stack(decoder_, nn::slice_rows(memory, t, 1), x), t, 1));
  }
  return head_.forward(nn::concat_rows(rows));
}

nlohmann::json EmoModel::checkpoint_config() const {
  return {{"kind", "emomodel"}, {"model", config_.to_json()}, {"vocab_hash", vocab_.hash()}};
}

nn::Checkpoint EmoModel::to_checkpoint(nlohmann::json extra) {
  nn::Checkpoint ckpt;
  ckpt.config = checkpoint_config();
  for (auto& [k, v] : extra.items()) ckpt.config[k] = v;
  ckpt.blocks = nn::export_state(parameters());
  return ckpt;
}

std::unique_ptr<EmoModel> EmoModel::from_checkpoint(const nn::Checkpoint& ckpt) {
  ModelConfig config;
  std::string hash;
  try {
    if (ckpt.config.at("kind").get<std::string>() != "emomodel")
      throw Error(ErrorCode::CheckpointCorrupt, "checkpoint does not hold a generation model");
    config = ModelConfig::from_json(ckpt.config.at("model"));
    hash = ckpt.config.at("vocab_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CheckpointCorrupt, std::string("checkpoint config: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::CheckpointCorrupt) throw;
    throw Error(ErrorCode::CheckpointCorrupt, "checkpoint config: " + e.message());
  }
  if (hash != config.vocabulary().hash())
    throw Error(ErrorCode::VocabMismatch, "checkpoint vocabulary hash " + hash + " does not match its layout");
  util::Rng rng(0);
  auto model = std::make_unique<EmoModel>(config, rng);
  nn::import_state(model->parameters(), ckpt.blocks);
  return model;
}

tok::TokenSequence generate(const EmoModel& model, const Tensor& image_input, const GenerateOptions& options) {
  if (options.max_len > model.config().max_len)
    throw Error(ErrorCode::PrefixTooLong, "max_len " + std::to_string(options.max_len) + " exceeds the model's " +
                                              std::to_string(model.config().max_len));
  if (options.strategy == Strategy::Temperature && !(options.temperature > 0))
    throw Error(ErrorCode::ConfigError, "temperature must be positive");
  nn::NoGradGuard no_grad;
  util::Rng rng(options.seed);
  tok::TokenSequence out;
  out.max_len = options.max_len;
  if (options.max_len == 0) return out;
  out.ids.push_back(Vocabulary::kBos);
  const Var image = model.encode_image(image_input);
  const auto v = static_cast<std::size_t>(model.vocab().size());
  while (out.ids.size() < options.max_len) {
    const Var joint = model.merge(image, model.encode_midi(out.ids));
    const Var out_logits = model.decode_logits(joint, out.ids);
    const Tensor& logits = out_logits.value();
    const std::size_t last = out.ids.size() - 1;
    TokenId next = Vocabulary::kEos;
    if (options.strategy == Strategy::Greedy) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t c = Vocabulary::kBos + 1; c < v; ++c)
        if (logits.at(last, c) > best) {
          best = logits.at(last, c);
          next = static_cast<TokenId>(c);
        }
    } else {
      std::vector<double> p(v, 0.0);
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = Vocabulary::kBos + 1; c < v; ++c) mx = std::max(mx, logits.at(last, c) / options.temperature);
      double total = 0;
      for (std::size_t c = Vocabulary::kBos + 1; c < v; ++c) total += p[c] = std::exp(logits.at(last, c) / options.temperature - mx);
      double u = rng.uniform() * total;
      next = static_cast<TokenId>(v - 1);
      for (std::size_t c = Vocabulary::kBos + 1; c < v; ++c) {
        if (u < p[c]) {
          next = static_cast<TokenId>(c);
          break;
        }
        u -= p[c];
      }
    }
    out.ids.push_back(next);
    if (next == Vocabulary::kEos) break;
  }
  return out;
}

}  // namespace emomusic::model
