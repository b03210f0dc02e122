#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emomusic/model/image.hpp"
#include "emomusic/nn/checkpoint.hpp"
#include "emomusic/nn/layers.hpp"
#include "emomusic/tokenizer.hpp"

namespace emomusic::model {

enum class ImageExtractor { Precomputed, TinyCnn };
std::string_view to_string(ImageExtractor e);
ImageExtractor image_extractor_from_string(std::string_view s);

struct ModelConfig {
  std::size_t encoder_blocks = 3;
  std::size_t decoder_blocks = 3;
  std::size_t model_dim = 128;
  std::size_t head_count = 4;
  std::size_t ff_dim = 256;
  std::size_t max_len = 256;
  int time_shift_bins = 100;
  int velocity_bins = 32;
  ImageExtractor image_extractor = ImageExtractor::Precomputed;
  std::size_t image_size = 32;  // tiny-cnn input resolution
  double embedding_std = 0.1;

  /// Structural checks (ConfigError). Block counts outside the ablation grid
  /// are allowed for reduced test models: encoder ≥ 1, decoder ≥ 0.
  void validate() const;
  /// encoder ∈ {2,3,4} and decoder ∈ {0,2,3}.
  bool in_ablation_grid() const;
  tok::Vocabulary vocabulary() const { return tok::Vocabulary(time_shift_bins, velocity_bins); }

  nlohmann::json to_json() const;
  /// Unknown keys are rejected (ConfigError).
  static ModelConfig from_json(const nlohmann::json& j);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Image encoder + causal MIDI transformer encoder + merge + causal decoder
/// with the joint vector as a prepended memory position.
/// Reads the model input for an image path: a feature file for the precomputed
/// extractor, an image resized to image_size for tiny-cnn.
nn::Tensor load_image_input(const ModelConfig& config, const std::filesystem::path& path);

class EmoModel {
 public:
  /// Draws every initial weight from `rng` in a fixed order.
  EmoModel(ModelConfig config, util::Rng& rng);
  EmoModel(const EmoModel&) = delete;
  EmoModel& operator=(const EmoModel&) = delete;

  const ModelConfig& config() const { return config_; }
  const tok::Vocabulary& vocab() const { return vocab_; }

  /// Image input: a 1×512 precomputed feature row or 3×S×S pixels, matching
  /// the configured extractor. Returns 1×512.
  nn::Var encode_image(const nn::Tensor& input) const;
  /// Loads the right input kind for the configured extractor.
  nn::Tensor load_image_input(const std::filesystem::path& path) const;

  /// 1×d: causal encoder over ids, mean over non-PAD positions.
  nn::Var encode_midi(std::span<const tok::TokenId> ids) const;
  /// T×d: row t equals encode_midi(ids[0..t]) (non-PAD positions only).
  nn::Var encode_midi_prefixes(std::span<const tok::TokenId> ids) const;

  /// Projects the image feature (1×512 → 1×d) and concatenates each context
  /// row: r×d contexts → r×2d.
  nn::Var merge(const nn::Var& image_feature, const nn::Var& contexts) const;

  /// prefix_len × vocab logits given one joint row (1×2d).
  nn::Var decode_logits(const nn::Var& joint, std::span<const tok::TokenId> prefix) const;

  /// Teacher-forced logits: row t = last row of
  /// decode_logits(merge(img, encode_midi(prefix[0..t])), prefix[0..t]).
  nn::Var teacher_forced_logits(const nn::Var& image_feature, std::span<const tok::TokenId> prefix) const;

  nn::ParameterList parameters();

  nlohmann::json checkpoint_config() const;
  nn::Checkpoint to_checkpoint(nlohmann::json extra = nlohmann::json::object());
  /// Rebuilds a model from a checkpoint (CheckpointCorrupt on missing or
  /// mis-shaped blocks, VocabMismatch on a vocabulary hash mismatch).
  static std::unique_ptr<EmoModel> from_checkpoint(const nn::Checkpoint& ckpt);

 private:
  nn::Var embed(const nn::Embedding& tokens, const nn::Embedding& positions, std::span<const tok::TokenId> ids) const;
  nn::Var encoder_rows(std::span<const tok::TokenId> ids) const;
  void check_prefix(std::span<const tok::TokenId> ids) const;

  ModelConfig config_;
  tok::Vocabulary vocab_;
  std::optional<TinyCnn> cnn_;
  nn::Embedding enc_tokens_, enc_positions_;
  std::vector<nn::TransformerBlock> encoder_;
  nn::Linear image_proj_;
  nn::Linear memory_proj_;
  nn::Embedding dec_tokens_, dec_positions_;
  std::vector<nn::TransformerBlock> decoder_;
  nn::FeedForward shallow_ff_;  // decoder_blocks == 0 path
  nn::LayerNorm shallow_norm_;
  nn::Linear head_;
};

enum class Strategy { Greedy, Temperature };

struct GenerateOptions {
  std::size_t max_len = 256;
  Strategy strategy = Strategy::Greedy;
  double temperature = 1.0;
  std::uint64_t seed = 0;
};

/// Autoregressive decoding from BOS until EOS or max_len. PAD and BOS are
/// never emitted after the first position. Throws PrefixTooLong when
/// max_len exceeds the model's.
tok::TokenSequence generate(const EmoModel& model, const nn::Tensor& image_input, const GenerateOptions& options);

}  // namespace emomusic::model
