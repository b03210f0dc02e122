#include "emomusic/training.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "emomusic/error.hpp"
#include "emomusic/util/csv.hpp"
#include "emomusic/util/json.hpp"

namespace emomusic::training {

using nn::Real;
using nn::Tensor;
using nn::Var;
using tok::TokenId;
using tok::Vocabulary;

void LossWeights::validate() const {
  if (!(lambda_va >= 0) || !(lambda_cc >= 0))
    throw Error(ErrorCode::ConfigError, "loss weights must be non-negative");
  if (lambda_va == 0 && lambda_cc == 0) throw Error(ErrorCode::ConfigError, "loss weights cannot both be zero");
}

std::string_view to_string(VaLossMode mode) {
  switch (mode) {
    case VaLossMode::Hard: return "hard";
    case VaLossMode::Soft: return "soft";
    case VaLossMode::Off: break;
  }
  return "off";
}

VaLossMode va_loss_mode_from_string(std::string_view s) {
  if (s == "hard") return VaLossMode::Hard;
  if (s == "soft") return VaLossMode::Soft;
  if (s == "off") return VaLossMode::Off;
  throw Error(ErrorCode::ConfigError, "va_loss_mode must be hard, soft or off, got '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (!(lr > 0) || !std::isfinite(lr)) throw Error(ErrorCode::ConfigError, "train.lr must be positive");
  if (epochs < 1) throw Error(ErrorCode::ConfigError, "train.epochs must be at least 1");
  if (batch_size < 1) throw Error(ErrorCode::ConfigError, "train.batch_size must be at least 1");
  weights.validate();
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", lr},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"seed", seed},
          {"va_loss_mode", std::string(to_string(va_loss_mode))},
          {"lambda_va", weights.lambda_va},
          {"lambda_cc", weights.lambda_cc},
          {"checkpoint_every_epoch", checkpoint_every_epoch}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  util::reject_unknown_keys(j,
                            {"lr", "epochs", "batch_size", "seed", "va_loss_mode", "lambda_va", "lambda_cc",
                             "checkpoint_every_epoch"},
                            "train");
  TrainConfig c;
  util::read_key(j, "lr", c.lr, "train");
  util::read_key(j, "epochs", c.epochs, "train");
  util::read_key(j, "batch_size", c.batch_size, "train");
  util::read_key(j, "seed", c.seed, "train");
  std::string mode(to_string(c.va_loss_mode));
  util::read_key(j, "va_loss_mode", mode, "train");
  c.va_loss_mode = va_loss_mode_from_string(mode);
  util::read_key(j, "lambda_va", c.weights.lambda_va, "train");
  util::read_key(j, "lambda_cc", c.weights.lambda_cc, "train");
  util::read_key(j, "checkpoint_every_epoch", c.checkpoint_every_epoch, "train");
  c.validate();
  return c;
}

// --- objectives -----------------------------------------------------------------

namespace {

// Copy of `targets` with PAD rows cleared, so they drop out of the sum.
Tensor mask_pad_rows(const Tensor& targets) {
  nn::require_rank2(targets, "cce_loss");
  Tensor t = targets;
  for (std::size_t i = 0; i < t.rows(); ++i)
    if (t.at(i, Vocabulary::kPad) != 0)
      for (std::size_t j = 0; j < t.cols(); ++j) t.at(i, j) = 0;
  return t;
}

}  // namespace

double cce_loss(const Tensor& probs, const Tensor& targets) {
  return cce_loss(Var::constant(probs), targets).value()[0];
}

Var cce_loss(const Var& probs, const Tensor& targets) {
  nn::require_same_shape(probs.value(), targets, "cce_loss");
  return nn::cross_entropy(probs, mask_pad_rows(targets));
}

Tensor one_hot(std::span<const TokenId> ids, int classes) {
  Tensor t({ids.size(), static_cast<std::size_t>(classes)});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= classes) throw Error(ErrorCode::VocabMismatch, "one_hot: id outside class range");
    t.at(i, static_cast<std::size_t>(ids[i])) = 1;
  }
  return t;
}

double total_loss(double cce, double va, const LossWeights& w) { return w.lambda_va * va + w.lambda_cc * cce; }

Var va_loss(std::span<const TokenId> true_tokens, const Var& pred_probs, const model::VaFunction& predictor,
            VaLossMode mode) {
  if (!predictor) throw Error(ErrorCode::PredictorMissing, "VA loss needs a pretrained VA predictor");
  if (mode == VaLossMode::Off) return Var::constant(Tensor({1, 1}));
  const Tensor& probs = pred_probs.value();
  nn::require_rank2(probs, "va_loss");
  if (true_tokens.empty() || probs.rows() != true_tokens.size() - 1)
    throw Error(ErrorCode::ShapeMismatch, "va_loss: " + std::to_string(probs.rows()) + " probability rows for " +
                                              std::to_string(true_tokens.size()) + " tokens");
  const std::size_t n_rows = probs.rows(), v = probs.cols();
  std::size_t n = 0;
  for (std::size_t i = 0; i < n_rows; ++i) n += true_tokens[i + 1] != Vocabulary::kPad;
  if (n == 0) return Var::constant(Tensor({1, 1}));
  const Real inv_n = Real(1) / static_cast<Real>(n);

  Tensor true_hist({1, v});
  for (std::size_t i = 0; i < n_rows; ++i) {
    const TokenId t = true_tokens[i + 1];
    if (t == Vocabulary::kPad || t == Vocabulary::kBos) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= v) throw Error(ErrorCode::VocabMismatch, "va_loss: target id out of range");
    true_hist[static_cast<std::size_t>(t)] += 1;
  }
  for (auto& x : true_hist.values()) x *= inv_n;

  Var pred_hist;
  if (mode == VaLossMode::Hard) {
    Tensor h({1, v});
    for (std::size_t i = 0; i < n_rows; ++i) {
      if (true_tokens[i + 1] == Vocabulary::kPad) continue;
      std::size_t best = 0;
      for (std::size_t c = 1; c < v; ++c)
        if (probs.at(i, c) > probs.at(i, best)) best = c;
      if (best != Vocabulary::kPad && best != Vocabulary::kBos) h[best] += 1;
    }
    for (auto& x : h.values()) x *= inv_n;
    pred_hist = Var::constant(std::move(h));
  } else {
    Tensor select({1, n_rows});
    for (std::size_t i = 0; i < n_rows; ++i) select[i] = true_tokens[i + 1] != Vocabulary::kPad ? Real(1) : Real(0);
    Tensor keep({1, v}, Real(1));
    keep[Vocabulary::kPad] = 0;
    keep[Vocabulary::kBos] = 0;
    // Column sums first, then the 1/n scaling, in the same order as the hard path.
    pred_hist = nn::mul(nn::scale(nn::matmul(Var::constant(select), pred_probs), inv_n), Var::constant(keep));
  }
  const Var va_pred = predictor(pred_hist);
  const Var va_true = predictor(Var::constant(true_hist));
  return nn::scale(nn::sum(nn::abs(nn::sub(va_pred, va_true))), Real(0.5));
}

// --- VA predictor pretraining -------------------------------------------------------

nlohmann::json PretrainConfig::to_json() const {
  return {{"epochs", epochs},       {"batch_size", batch_size}, {"lr", lr},
          {"holdout_fraction", holdout_fraction}, {"seed", seed}, {"predictor", predictor.to_json()}};
}

PretrainConfig PretrainConfig::from_json(const nlohmann::json& j) {
  util::reject_unknown_keys(j, {"epochs", "batch_size", "lr", "holdout_fraction", "seed", "predictor"}, "va_pretrain");
  PretrainConfig c;
  util::read_key(j, "epochs", c.epochs, "va_pretrain");
  util::read_key(j, "batch_size", c.batch_size, "va_pretrain");
  util::read_key(j, "lr", c.lr, "va_pretrain");
  util::read_key(j, "holdout_fraction", c.holdout_fraction, "va_pretrain");
  util::read_key(j, "seed", c.seed, "va_pretrain");
  if (j.contains("predictor")) c.predictor = model::VaPredictorConfig::from_json(j.at("predictor"));
  if (c.epochs < 1 || c.batch_size < 2 || !(c.lr > 0) || !(c.holdout_fraction >= 0 && c.holdout_fraction < 1))
    throw Error(ErrorCode::ConfigError, "va_pretrain: epochs ≥ 1, batch_size ≥ 2, lr > 0, holdout_fraction in [0,1)");
  return c;
}

namespace {

struct Batch {
  Tensor x;
  Tensor y;
};

Batch make_batch(std::span<const LabeledSequence> items, std::span<const std::size_t> idx, int vocab_size) {
  Batch b{Tensor({idx.size(), static_cast<std::size_t>(vocab_size)}), Tensor({idx.size(), 2})};
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto& item = items[idx[r]];
    const Tensor h = model::token_histogram(item.tokens, vocab_size);
    std::copy(h.values().begin(), h.values().end(), b.x.data() + r * h.size());
    b.y.at(r, 0) = static_cast<Real>(item.va.valence);
    b.y.at(r, 1) = static_cast<Real>(item.va.arousal);
  }
  return b;
}

}  // namespace

double va_mae(model::VaPredictor& predictor, std::span<const LabeledSequence> items) {
  if (items.empty()) return std::numeric_limits<double>::quiet_NaN();
  nn::NoGradGuard no_grad;
  std::vector<std::size_t> idx(items.size());
  std::iota(idx.begin(), idx.end(), 0);
  const Batch b = make_batch(items, idx, predictor.vocab().size());
  const Tensor out = predictor.forward(Var::constant(b.x), nn::NormMode::Eval).value();
  double total = 0;
  for (std::size_t i = 0; i < out.size(); ++i) total += std::abs(static_cast<double>(out[i]) - b.y[i]);
  return total / static_cast<double>(out.size());
}

std::unique_ptr<model::VaPredictor> pretrain_va_predictor(const tok::Vocabulary& vocab,
                                                          std::span<const LabeledSequence> items,
                                                          const PretrainConfig& config, PretrainReport* report) {
  util::Rng rng(config.seed);
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  auto holdout = static_cast<std::size_t>(std::floor(config.holdout_fraction * static_cast<double>(items.size())));
  if (items.size() - holdout < 2) holdout = items.size() >= 2 ? items.size() - 2 : 0;
  const std::size_t n_train = items.size() - holdout;
  if (n_train < 2)
    throw Error(ErrorCode::CatalogTooSmall, "VA pretraining needs at least 2 labeled pieces, got " +
                                                std::to_string(items.size()));
  std::vector<LabeledSequence> train, held;
  for (std::size_t k = 0; k < order.size(); ++k) (k < n_train ? train : held).push_back(items[order[k]]);

  auto predictor = std::make_unique<model::VaPredictor>(vocab, config.predictor, rng);
  auto params = predictor->parameters().params;
  nn::Adam adam(params, {config.lr});
  PretrainReport rep;
  rep.train_count = train.size();
  rep.holdout_count = held.size();
  rep.initial_train_mae = va_mae(*predictor, train);

  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t bs = std::max<std::size_t>(2, config.batch_size);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(idx);
    double loss_sum = 0;
    for (std::size_t start = 0; start < idx.size();) {
      std::size_t end = std::min(idx.size(), start + bs);
      if (idx.size() - end == 1) ++end;  // never leave a singleton batch behind
      const Batch b = make_batch(train, std::span(idx).subspan(start, end - start), vocab.size());
      const Var out = predictor->forward(Var::constant(b.x), nn::NormMode::Train);
      const Var loss = nn::mean(nn::abs(nn::sub(out, Var::constant(b.y))));
      loss.backward();
      adam.step();
      loss_sum += loss.value()[0] * static_cast<double>(end - start);
      start = end;
    }
    rep.epoch_mae.push_back(loss_sum / static_cast<double>(idx.size()));
  }
  predictor->mark_trained();
  rep.final_train_mae = va_mae(*predictor, train);
  rep.holdout_mae = va_mae(*predictor, held);
  if (report) *report = rep;
  return predictor;
}

// --- main loop ------------------------------------------------------------------------

PairLosses pair_step(model::EmoModel& model, const TrainingExample& example, const TrainConfig& config,
                     const model::VaFunction* predictor, double backward_scale) {
  const auto& tokens = example.tokens;
  if (tokens.size() < 2)
    throw Error(ErrorCode::MissingArtifacts, "example '" + example.id + "' has fewer than 2 tokens");
  const std::span<const TokenId> prefix(tokens.data(), tokens.size() - 1);
  std::vector<TokenId> targets(tokens.begin() + 1, tokens.end());
  for (auto& t : targets)
    if (t == Vocabulary::kPad) t = -1;

  const Var image = model.encode_image(example.image);
  const Var logits = model.teacher_forced_logits(image, prefix);
  const Var cce = nn::nll_rows(nn::log_softmax_rows(logits), targets);
  Var objective = nn::scale(cce, static_cast<Real>(config.weights.lambda_cc));

  PairLosses out;
  out.cce = cce.value()[0];
  if (config.va_loss_mode != VaLossMode::Off) {
    if (!predictor || !*predictor) throw Error(ErrorCode::PredictorMissing, "VA loss needs a pretrained VA predictor");
    const bool differentiable = config.va_loss_mode == VaLossMode::Soft && config.weights.lambda_va > 0;
    if (differentiable) {
      const Var va = va_loss(tokens, nn::softmax_rows(logits), *predictor, VaLossMode::Soft);
      out.va = va.value()[0];
      objective = nn::add(objective, nn::scale(va, static_cast<Real>(config.weights.lambda_va)));
    } else {
      nn::NoGradGuard no_grad;
      out.va = va_loss(tokens, Var::constant(nn::softmax(logits.value())), *predictor, config.va_loss_mode).value()[0];
    }
  }
  out.total = total_loss(out.cce, out.va, config.weights);
  if (backward_scale != 0) nn::scale(objective, static_cast<Real>(backward_scale)).backward();
  return out;
}

FitResult fit(const model::ModelConfig& model_config, std::span<const TrainingExample> examples,
              const TrainConfig& config, const model::VaPredictor* predictor, const EpochCallback& on_epoch) {
  config.validate();
  model_config.validate();
  if (examples.empty()) throw Error(ErrorCode::MissingArtifacts, "no training examples");
  model::VaFunction va_fn;
  if (config.va_loss_mode != VaLossMode::Off) {
    if (!predictor || !predictor->trained())
      throw Error(ErrorCode::PredictorMissing, "va_loss_mode '" + std::string(to_string(config.va_loss_mode)) +
                                                   "' needs pretrained VA predictor weights");
    if (!(predictor->vocab() == model_config.vocabulary()))
      throw Error(ErrorCode::VocabMismatch, "VA predictor vocabulary differs from the model's");
    va_fn = predictor->frozen();
  }

  util::Rng rng(config.seed);
  FitResult result;
  result.model = std::make_unique<model::EmoModel>(model_config, rng);
  nn::Adam adam(result.model->parameters().params, {config.lr});

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    EpochLosses e;
    e.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const PairLosses l = pair_step(*result.model, examples[order[k]], config, va_fn ? &va_fn : nullptr, inv);
        e.l_cc += l.cce;
        e.l_va += l.va;
        e.l_total += l.total;
      }
      adam.step();
    }
    const auto n = static_cast<double>(examples.size());
    e.l_cc /= n;
    e.l_va /= n;
    e.l_total /= n;
    result.curve.push_back(e);
    if (on_epoch) on_epoch(e, *result.model);
  }
  return result;
}

std::string loss_csv(const std::vector<EpochLosses>& curve) {
  std::string out = "epoch,l_cc,l_va,l_total\n";
  for (const auto& e : curve)
    out += std::to_string(e.epoch) + "," + util::format_real(e.l_cc) + "," + util::format_real(e.l_va) + "," +
           util::format_real(e.l_total) + "\n";
  return out;
}

}  // namespace emomusic::training
