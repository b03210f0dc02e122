#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "emomusic/model/emomodel.hpp"
#include "emomusic/model/va_predictor.hpp"
#include "emomusic/nn/optim.hpp"

namespace emomusic::training {

struct LossWeights {
  double lambda_va = 1e-5;
  double lambda_cc = 1.0;

  /// ConfigError for negative weights or both zero.
  void validate() const;
};

enum class VaLossMode { Hard, Soft, Off };
std::string_view to_string(VaLossMode mode);
VaLossMode va_loss_mode_from_string(std::string_view s);

struct TrainConfig {
  double lr = 1e-5;
  std::size_t epochs = 15;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
  VaLossMode va_loss_mode = VaLossMode::Hard;
  LossWeights weights;
  bool checkpoint_every_epoch = false;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// −Σ y·ln p over rows whose one-hot target is not PAD (class 0). Throws
/// ShapeMismatch on differing shapes.
double cce_loss(const nn::Tensor& probs, const nn::Tensor& targets);
/// Differentiable form of cce_loss.
nn::Var cce_loss(const nn::Var& probs, const nn::Tensor& targets);
/// One-hot rows for ids (N×C).
nn::Tensor one_hot(std::span<const tok::TokenId> ids, int classes);

/// λ_va·va + λ_cc·cce.
double total_loss(double cce, double va, const LossWeights& w);

/// L_VA for one pair. Row i of pred_probs predicts true_tokens[i+1]; rows
/// whose target is PAD are ignored. Both histograms are divided by the number
/// of counted targets; PAD and BOS columns never count. Hard: histogram of the
/// row argmaxes (no gradient). Soft: mean of the probability rows
/// (differentiable). Value: (|Δvalence| + |Δarousal|)/2 on the unclamped
/// predictor outputs. Throws PredictorMissing when `predictor` is empty.
nn::Var va_loss(std::span<const tok::TokenId> true_tokens, const nn::Var& pred_probs,
                const model::VaFunction& predictor, VaLossMode mode);

// --- VA predictor pretraining -------------------------------------------------

struct LabeledSequence {
  std::string id;
  std::vector<tok::TokenId> tokens;
  pairing::VaPoint va;
};

struct PretrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  double lr = 1e-2;
  double holdout_fraction = 0.2;
  std::uint64_t seed = 0;
  model::VaPredictorConfig predictor;

  nlohmann::json to_json() const;
  static PretrainConfig from_json(const nlohmann::json& j);
};

struct PretrainReport {
  double initial_train_mae = 0;
  double final_train_mae = 0;
  double holdout_mae = 0;  // NaN when nothing was held out
  std::size_t train_count = 0;
  std::size_t holdout_count = 0;
  std::vector<double> epoch_mae;  // training-mode MAE per epoch
};

/// Mean absolute error (averaged over both components) of the eval-mode
/// predictor on `items`.
double va_mae(model::VaPredictor& predictor, std::span<const LabeledSequence> items);

/// L1 regression with Adam on a seeded shuffled split. Batches never hold a
/// single item (a trailing singleton joins the previous batch). Throws
/// CatalogTooSmall for fewer than two training items.
std::unique_ptr<model::VaPredictor> pretrain_va_predictor(const tok::Vocabulary& vocab,
                                                          std::span<const LabeledSequence> items,
                                                          const PretrainConfig& config, PretrainReport* report = nullptr);

// --- main training loop -------------------------------------------------------

struct TrainingExample {
  std::string id;
  std::vector<tok::TokenId> tokens;  // BOS … (EOS), no PAD
  nn::Tensor image;                  // input for EmoModel::encode_image
};

struct EpochLosses {
  std::size_t epoch = 0;
  double l_cc = 0;
  double l_va = 0;
  double l_total = 0;
};

struct PairLosses {
  double cce = 0;
  double va = 0;
  double total = 0;
};

/// Forward (and, when `backward_scale` ≠ 0, backward) for one example.
PairLosses pair_step(model::EmoModel& model, const TrainingExample& example, const TrainConfig& config,
                     const model::VaFunction* predictor, double backward_scale);

struct FitResult {
  std::unique_ptr<model::EmoModel> model;
  std::vector<EpochLosses> curve;
};

using EpochCallback = std::function<void(const EpochLosses&, model::EmoModel&)>;

/// Teacher-forced training: per epoch, seeded shuffle, gradients accumulated
/// over batch_size pairs (mean), one Adam step per batch. The model is
/// initialized from Rng(seed), which then drives the shuffles. The VA term
/// contributes gradient only in soft mode with λ_va > 0.
FitResult fit(const model::ModelConfig& model_config, std::span<const TrainingExample> examples,
              const TrainConfig& config, const model::VaPredictor* predictor, const EpochCallback& on_epoch = {});

std::string loss_csv(const std::vector<EpochLosses>& curve);

}  // namespace emomusic::training
