#include "emomusic/cli/gradcheck_suite.hpp"

#include <algorithm>
#include <cstdio>

#include "emomusic/model/image.hpp"
#include "emomusic/model/va_predictor.hpp"
#include "emomusic/nn/layers.hpp"
#include "emomusic/training.hpp"

namespace emomusic::cli {

using nn::GradcheckBlock;
using nn::Tensor;
using nn::Var;

bool SuiteReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const SuiteEntry& e) { return e.report.passed(); });
}

double SuiteReport::max_rel_error() const {
  double m = 0;
  for (const auto& e : entries) m = std::max(m, e.report.max_rel_error());
  return m;
}

std::string SuiteReport::to_string() const {
  std::string out;
  for (const auto& e : entries) {
    out += "[" + e.component + "]\n";
    for (const auto& b : e.report.entries) {
      char line[200];
      std::snprintf(line, sizeof line, "  %-4s %-36s rel=%.3e n=%zu\n", b.passed ? "ok" : "FAIL", b.name.c_str(),
                    b.max_rel_error, b.elements);
      out += line;
    }
  }
  char tail[120];
  std::snprintf(tail, sizeof tail, "max relative error %.3e: %s\n", max_rel_error(), passed() ? "passed" : "FAILED");
  return out + tail;
}

model::ModelConfig reduced_model_config() {
  model::ModelConfig c;
  c.encoder_blocks = 1;
  c.decoder_blocks = 1;
  c.model_dim = 16;
  c.head_count = 2;
  c.ff_dim = 32;
  c.max_len = 8;
  c.time_shift_bins = 4;
  c.velocity_bins = 2;
  return c;
}

namespace {

constexpr double kStep = 1e-5;
constexpr std::size_t kSample = 192;  // per block, for the large conv and model tensors

Tensor random(nn::Shape shape, util::Rng& rng, double scale = 1.0) { return nn::normal_init(std::move(shape), scale, rng); }

std::vector<GradcheckBlock> blocks_of(nn::ParameterList list) {
  std::vector<GradcheckBlock> out;
  for (nn::Parameter* p : list.params) out.push_back({p->name(), p->var()});
  return out;
}

void add(SuiteReport& r, std::string name, nn::GradcheckReport rep) { r.entries.push_back({std::move(name), std::move(rep)}); }

}  // namespace

SuiteReport run_gradcheck_suite(const model::ModelConfig& reduced, std::uint64_t seed, double tol) {
  util::Rng rng(seed);
  SuiteReport report;

  {
    nn::Linear lin("linear", 5, 4, rng);
    lin.bias.value() = random({1, 4}, rng, 0.5);
    Var x = Var::leaf(random({3, 5}, rng));
    util::Rng probe_rng(seed + 1);
    const Var w = Var::constant(random({3, 4}, probe_rng));
    nn::ParameterList pl;
    lin.collect(pl);
    auto blocks = blocks_of(pl);
    blocks.push_back({"input", x});
    add(report, "linear", nn::gradcheck([&] { return nn::sum(nn::mul(lin.forward(x), w)); }, blocks, tol));
  }
  {
    nn::Embedding emb("embedding", 10, 4, 1.0, rng);
    const std::vector<std::int32_t> ids{1, 3, 3, 7};
    const Var w = Var::constant(random({4, 4}, rng));
    nn::ParameterList pl;
    emb.collect(pl);
    add(report, "embedding", nn::gradcheck([&] { return nn::sum(nn::mul(emb.forward(ids), w)); }, blocks_of(pl), tol));
  }
  {
    nn::LayerNorm ln("layer_norm", 6);
    ln.gamma.value() = random({1, 6}, rng, 0.5);
    ln.beta.value() = random({1, 6}, rng, 0.5);
    Var x = Var::leaf(random({3, 6}, rng));
    const Var w = Var::constant(random({3, 6}, rng));
    nn::ParameterList pl;
    ln.collect(pl);
    auto blocks = blocks_of(pl);
    blocks.push_back({"input", x});
    add(report, "layer_norm", nn::gradcheck([&] { return nn::sum(nn::mul(ln.forward(x), w)); }, blocks, tol));
  }
  {
    nn::BatchNorm1d bn("batch_norm", 3);
    bn.gamma.value() = random({1, 3}, rng, 0.5);
    bn.beta.value() = random({1, 3}, rng, 0.5);
    Var x = Var::leaf(random({5, 3}, rng));
    const Var w = Var::constant(random({5, 3}, rng));
    nn::ParameterList pl;
    bn.collect(pl);
    auto blocks = blocks_of(pl);
    blocks.push_back({"input", x});
    add(report, "batch_norm(train)",
        nn::gradcheck([&] { return nn::sum(nn::mul(bn.forward(x, nn::NormMode::Train), w)); }, blocks, tol));
  }
  {
    nn::MultiHeadAttention mha("attention", {8, 2}, rng);
    Var q = Var::leaf(random({3, 8}, rng)), k = Var::leaf(random({4, 8}, rng)), v = Var::leaf(random({4, 8}, rng));
    Tensor mask({3, 4}, 1);
    mask.at(0, 3) = 0;
    mask.at(1, 3) = 0;
    const Var w = Var::constant(random({3, 8}, rng));
    nn::ParameterList pl;
    mha.collect(pl);
    auto blocks = blocks_of(pl);
    blocks.push_back({"query", q});
    blocks.push_back({"key", k});
    blocks.push_back({"value", v});
    add(report, "attention", nn::gradcheck([&] { return nn::sum(nn::mul(mha.forward(q, k, v, &mask), w)); }, blocks, tol));
  }
  {
    nn::TransformerBlock enc("encoder_block", {8, 2}, 16, rng);
    Var x = Var::leaf(random({4, 8}, rng));
    Tensor mask = nn::causal_mask(4);
    for (std::size_t i = 0; i < 4; ++i) mask.at(i, 0) = 1;
    mask.at(3, 2) = 0;  // a padded key
    const Var w = Var::constant(random({4, 8}, rng));
    nn::ParameterList pl;
    enc.collect(pl);
    auto blocks = blocks_of(pl);
    blocks.push_back({"input", x});
    add(report, "encoder_block", nn::gradcheck([&] { return nn::sum(nn::mul(enc.forward(x, &mask), w)); }, blocks, tol));
  }
  {
    nn::TransformerBlock dec("decoder_block", {8, 2}, 16, rng);
    Var memory = Var::leaf(random({1, 8}, rng));
    Var x = Var::leaf(random({3, 8}, rng));
    const Tensor mask = nn::causal_mask(4);
    const Var w = Var::constant(random({3, 8}, rng));
    nn::ParameterList pl;
    dec.collect(pl);
    auto blocks = blocks_of(pl);
    blocks.push_back({"memory", memory});
    blocks.push_back({"input", x});
    auto loss = [&] {
      const Var h = dec.forward(nn::concat_rows({memory, x}), &mask);
      return nn::sum(nn::mul(nn::slice_rows(h, 1, 3), w));
    };
    add(report, "decoder_block", nn::gradcheck(loss, blocks, tol));
  }
  {
    model::TinyCnn cnn("cnn", rng);
    Var pixels = Var::leaf(random({3, 8, 8}, rng, 0.5));
    const Var w = Var::constant(random({1, 512}, rng, 0.05));
    nn::ParameterList pl;
    cnn.collect(pl);
    auto blocks = blocks_of(pl);
    blocks.push_back({"pixels", pixels});
    add(report, "conv_pool",
        nn::gradcheck([&] { return nn::sum(nn::mul(cnn.forward(pixels), w)); }, blocks, tol, kStep, kSample));
  }
  {
    Var logits = Var::leaf(random({4, 6}, rng));
    const Tensor targets = training::one_hot(std::vector<std::int32_t>{3, 5, 1, 0}, 6);  // last row is PAD
    add(report, "cce",
        nn::gradcheck([&] { return training::cce_loss(nn::softmax_rows(logits), targets); }, {{"logits", logits}}, tol));
  }
  {
    const tok::Vocabulary vocab(4, 2);
    model::VaPredictor predictor(vocab, {8, 6, 5.0}, rng);
    auto pl = predictor.parameters();
    for (auto& ref : pl.buffers)
      for (auto& v : ref.tensor->values()) v = static_cast<nn::Real>(ref.name.ends_with("var") ? 0.5 + rng.uniform() : 0.1 * rng.normal());
    predictor.mark_trained();
    const auto fn = predictor.frozen();
    const std::vector<std::int32_t> tokens{1, 10, 140, 263, 20, 2};
    Var logits = Var::leaf(random({tokens.size() - 1, static_cast<std::size_t>(vocab.size())}, rng, 2.0));
    add(report, "va_loss(soft)",
        nn::gradcheck([&] { return training::va_loss(tokens, nn::softmax_rows(logits), fn, training::VaLossMode::Soft); },
                      {{"logits", logits}}, tol));
  }
  {
    model::ModelConfig cfg = reduced;
    cfg.image_extractor = model::ImageExtractor::Precomputed;
    util::Rng init(seed + 7);
    model::EmoModel m(cfg, init);
    const Tensor image = random({1, 512}, rng);
    std::vector<std::int32_t> tokens{tok::Vocabulary::kBos};
    const auto v = m.vocab().size();
    while (tokens.size() < std::min<std::size_t>(cfg.max_len, 6)) tokens.push_back(static_cast<std::int32_t>(3 + rng.index(static_cast<std::size_t>(v - 3))));
    tokens.push_back(tok::Vocabulary::kEos);
    const std::span<const std::int32_t> prefix(tokens.data(), tokens.size() - 1);
    const std::vector<std::int32_t> targets(tokens.begin() + 1, tokens.end());
    auto loss = [&] {
      const Var logits = m.teacher_forced_logits(m.encode_image(image), prefix);
      return nn::scale(nn::nll_rows(nn::log_softmax_rows(logits), targets), nn::Real(1.0 / double(targets.size())));
    };
    add(report, "full_model", nn::gradcheck(loss, blocks_of(m.parameters()), tol, kStep, kSample));
  }
  return report;
}

}  // namespace emomusic::cli
