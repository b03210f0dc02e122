#pragma once

#include <filesystem>
#include <functional>
#include <span>

#include "emomusic/nn/checkpoint.hpp"
#include "emomusic/nn/layers.hpp"
#include "emomusic/pairing.hpp"
#include "emomusic/tokenizer.hpp"

namespace emomusic::model {

/// Token-count histogram over the vocabulary, ignoring PAD and BOS, divided
/// by the number of counted tokens (all zeros for an empty sequence). 1×V.
nn::Tensor token_histogram(std::span<const tok::TokenId> ids, int vocab_size);

struct VaPredictorConfig {
  std::size_t hidden1 = 64;
  std::size_t hidden2 = 32;
  double output_bias = 5.0;  // centre of the VA scale

  nlohmann::json to_json() const;
  static VaPredictorConfig from_json(const nlohmann::json& j);
};

/// Maps a 1×V (or B×V) histogram to raw (valence, arousal) rows.
using VaFunction = std::function<nn::Var(const nn::Var& histogram)>;

/// FC → BatchNorm → ReLU → FC → BatchNorm → ReLU → FC(2).
class VaPredictor {
 public:
  VaPredictor(const tok::Vocabulary& vocab, VaPredictorConfig config, util::Rng& rng);
  VaPredictor(const VaPredictor&) = delete;
  VaPredictor& operator=(const VaPredictor&) = delete;

  const tok::Vocabulary& vocab() const { return vocab_; }
  const VaPredictorConfig& config() const { return config_; }

  /// B×V → B×2, unclamped.
  nn::Var forward(const nn::Var& histograms, nn::NormMode mode);

  /// Inference on one sequence: eval-mode batch norm, clamped to [1,9].
  /// Throws WeightsMissing until the predictor is pretrained or loaded.
  pairing::VaPoint predict(std::span<const tok::TokenId> ids);
  pairing::VaPoint predict_histogram(const nn::Tensor& histogram);

  /// Eval-mode forward over a frozen copy of the weights: gradients reach the
  /// histogram but never the predictor. Throws WeightsMissing when untrained.
  VaFunction frozen() const;

  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

  nn::ParameterList parameters();
  nn::Checkpoint to_checkpoint(nlohmann::json extra = nlohmann::json::object());
  /// VocabMismatch when the stored vocabulary hash differs from `vocab`'s.
  static std::unique_ptr<VaPredictor> from_checkpoint(const nn::Checkpoint& ckpt);

 private:
  tok::Vocabulary vocab_;
  VaPredictorConfig config_;
  nn::Linear fc1_, fc2_, fc3_;
  nn::BatchNorm1d bn1_, bn2_;
  bool trained_ = false;
};

}  // namespace emomusic::model
