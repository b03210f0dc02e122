#include "emomusic/model/va_predictor.hpp"

#include <algorithm>

#include "emomusic/error.hpp"
#include "emomusic/util/json.hpp"

namespace emomusic::model {

using nn::Tensor;
using nn::Var;
using tok::Vocabulary;

Tensor token_histogram(std::span<const tok::TokenId> ids, int vocab_size) {
  Tensor h({1, static_cast<std::size_t>(vocab_size)});
  std::size_t n = 0;
  for (tok::TokenId id : ids) {
    if (id == Vocabulary::kPad || id == Vocabulary::kBos) continue;
    if (id < 0 || id >= vocab_size)
      throw Error(ErrorCode::VocabMismatch, "token id " + std::to_string(id) + " outside the vocabulary");
    h[static_cast<std::size_t>(id)] += 1;
    ++n;
  }
  if (n)
    for (auto& v : h.values()) v /= static_cast<nn::Real>(n);
  return h;
}

nlohmann::json VaPredictorConfig::to_json() const {
  return {{"hidden1", hidden1}, {"hidden2", hidden2}, {"output_bias", output_bias}};
}

VaPredictorConfig VaPredictorConfig::from_json(const nlohmann::json& j) {
  util::reject_unknown_keys(j, {"hidden1", "hidden2", "output_bias"}, "va_predictor");
  VaPredictorConfig c;
  util::read_key(j, "hidden1", c.hidden1, "va_predictor");
  util::read_key(j, "hidden2", c.hidden2, "va_predictor");
  util::read_key(j, "output_bias", c.output_bias, "va_predictor");
  if (c.hidden1 == 0 || c.hidden2 == 0) throw Error(ErrorCode::ConfigError, "va_predictor: hidden sizes must be positive");
  return c;
}

VaPredictor::VaPredictor(const tok::Vocabulary& vocab, VaPredictorConfig config, util::Rng& rng)
    : vocab_(vocab),
      config_(config),
      fc1_("va.fc1", static_cast<std::size_t>(vocab.size()), config.hidden1, rng),
      fc2_("va.fc2", config.hidden1, config.hidden2, rng),
      fc3_("va.fc3", config.hidden2, 2, rng),
      bn1_("va.bn1", config.hidden1),
      bn2_("va.bn2", config.hidden2) {
  fc3_.bias.value().fill(static_cast<nn::Real>(config.output_bias));
}

Var VaPredictor::forward(const Var& histograms, nn::NormMode mode) {
  Var x = nn::relu(bn1_.forward(fc1_.forward(histograms), mode));
  x = nn::relu(bn2_.forward(fc2_.forward(x), mode));
  return fc3_.forward(x);
}

pairing::VaPoint VaPredictor::predict_histogram(const Tensor& histogram) {
  if (!trained_) throw Error(ErrorCode::WeightsMissing, "VA predictor has no pretrained weights");
  nn::NoGradGuard no_grad;
  const Tensor out = forward(Var::constant(histogram), nn::NormMode::Eval).value();
  auto clamp = [](double v) { return std::clamp(v, pairing::kVaMin, pairing::kVaMax); };
  return {clamp(out[0]), clamp(out[1])};
}

pairing::VaPoint VaPredictor::predict(std::span<const tok::TokenId> ids) {
  return predict_histogram(token_histogram(ids, vocab_.size()));
}

VaFunction VaPredictor::frozen() const {
  if (!trained_) throw Error(ErrorCode::WeightsMissing, "VA predictor has no pretrained weights");
  struct Frozen {
    Var w1, b1, w2, b2, w3, b3, g1, be1, g2, be2;
    nn::RunningStats s1, s2;
    nn::Real eps1, eps2;
  };
  auto f = std::make_shared<Frozen>(Frozen{
      Var::constant(fc1_.weight.value()), Var::constant(fc1_.bias.value()), Var::constant(fc2_.weight.value()),
      Var::constant(fc2_.bias.value()),   Var::constant(fc3_.weight.value()), Var::constant(fc3_.bias.value()),
      Var::constant(bn1_.gamma.value()),  Var::constant(bn1_.beta.value()),  Var::constant(bn2_.gamma.value()),
      Var::constant(bn2_.beta.value()),   bn1_.stats,                        bn2_.stats,
      bn1_.eps,                           bn2_.eps});
  return [f](const Var& h) {
    // Eval mode never writes the running statistics, so the shared copy stays fixed.
    Var x = nn::add_row(nn::matmul(h, f->w1), f->b1);
    x = nn::relu(nn::batch_norm(x, f->g1, f->be1, f->s1, nn::NormMode::Eval, 0, f->eps1));
    x = nn::add_row(nn::matmul(x, f->w2), f->b2);
    x = nn::relu(nn::batch_norm(x, f->g2, f->be2, f->s2, nn::NormMode::Eval, 0, f->eps2));
    return nn::add_row(nn::matmul(x, f->w3), f->b3);
  };
}

nn::ParameterList VaPredictor::parameters() {
  nn::ParameterList list;
  fc1_.collect(list);
  bn1_.collect(list);
  fc2_.collect(list);
  bn2_.collect(list);
  fc3_.collect(list);
  return list;
}

nn::Checkpoint VaPredictor::to_checkpoint(nlohmann::json extra) {
  nn::Checkpoint ckpt;
  ckpt.config = {{"kind", "va_predictor"},
                 {"predictor", config_.to_json()},
                 {"time_shift_bins", vocab_.time_shift_bins()},
                 {"velocity_bins", vocab_.velocity_bins()},
                 {"vocab_hash", vocab_.hash()}};
  for (auto& [k, v] : extra.items()) ckpt.config[k] = v;
  ckpt.blocks = nn::export_state(parameters());
  return ckpt;
}

std::unique_ptr<VaPredictor> VaPredictor::from_checkpoint(const nn::Checkpoint& ckpt) {
  VaPredictorConfig config;
  int ts = 0, vel = 0;
  std::string hash;
  try {
    if (ckpt.config.at("kind").get<std::string>() != "va_predictor")
      throw Error(ErrorCode::CheckpointCorrupt, "checkpoint does not hold a VA predictor");
    config = VaPredictorConfig::from_json(ckpt.config.at("predictor"));
    ts = ckpt.config.at("time_shift_bins").get<int>();
    vel = ckpt.config.at("velocity_bins").get<int>();
    hash = ckpt.config.at("vocab_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CheckpointCorrupt, std::string("predictor config: ") + e.what());
  }
  const tok::Vocabulary vocab(ts, vel);
  if (vocab.hash() != hash) throw Error(ErrorCode::VocabMismatch, "predictor vocabulary hash does not match its layout");
  util::Rng rng(0);
  auto p = std::make_unique<VaPredictor>(vocab, config, rng);
  nn::import_state(p->parameters(), ckpt.blocks);
  p->mark_trained();
  return p;
}

}  // namespace emomusic::model
