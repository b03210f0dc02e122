#include <doctest.h>

#include <filesystem>

#include "emomusic/error.hpp"
#include "emomusic/model/emomodel.hpp"
#include "emomusic/model/image.hpp"
#include "emomusic/model/va_predictor.hpp"
#include "emomusic/util/io.hpp"
#include "emomusic/util/random.hpp"

using namespace emomusic;
using namespace emomusic::model;
using nn::Tensor;
using nn::Var;

namespace {

ModelConfig small_config(std::size_t dec = 1) {
  ModelConfig c;
  c.encoder_blocks = 1;
  c.decoder_blocks = dec;
  c.model_dim = 16;
  c.head_count = 2;
  c.ff_dim = 32;
  c.max_len = 12;
  c.time_shift_bins = 8;
  c.velocity_bins = 4;
  return c;
}

Tensor random_feature(util::Rng& rng) {
  std::vector<nn::Real> v(kImageFeatureDim);
  for (auto& x : v) x = static_cast<nn::Real>(rng.uniform(0.0, 1.0));
  return ImageFeature::checked(std::move(v)).as_row();
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("prefix encodings match separate encodings") {
    util::Rng rng(1);
    EmoModel m(small_config(), rng);
    const std::vector<tok::TokenId> ids{1, 20, 140, 3, 60, 150, 2};
    const auto all = m.encode_midi_prefixes(ids).value();
    for (std::size_t t = 0; t < ids.size(); ++t) {
      const auto one = m.encode_midi(std::span(ids).first(t + 1)).value();
      for (std::size_t c = 0; c < 16; ++c) CHECK(std::abs(all.at(t, c) - one[c]) < 1e-12);
    }
  }

  TEST_CASE("teacher forcing equals step-by-step decoding") {
    for (std::size_t dec : {0u, 2u}) {
      util::Rng rng(2);
      EmoModel m(small_config(dec), rng);
      const auto img = m.encode_image(random_feature(rng));
      const std::vector<tok::TokenId> ids{1, 20, 140, 3, 60};
      const auto tf = m.teacher_forced_logits(img, ids).value();
      for (std::size_t t = 0; t < ids.size(); ++t) {
        const auto prefix = std::span(ids).first(t + 1);
        const auto step = m.decode_logits(m.merge(img, m.encode_midi(prefix)), prefix).value();
        for (std::size_t c = 0; c < tf.cols(); ++c) CHECK(std::abs(tf.at(t, c) - step.at(t, c)) < 1e-10);
      }
    }
  }

  TEST_CASE("prefix and vocabulary guards") {
    util::Rng rng(3);
    EmoModel m(small_config(), rng);
    std::vector<tok::TokenId> long_ids(13, 5);
    try {
      m.encode_midi(long_ids);
      FAIL("expected PrefixTooLong");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::PrefixTooLong);
    }
    const std::vector<tok::TokenId> bad{1, m.vocab().size()};
    try {
      m.encode_midi(bad);
      FAIL("expected VocabMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::VocabMismatch);
    }
  }

  TEST_CASE("feature files must hold exactly 512 values") {
    util::Rng rng(4);
    const auto f = ImageFeature::checked(std::vector<nn::Real>(kImageFeatureDim, 0.25));
    auto bytes = serialize_feature(f);
    CHECK(parse_feature(bytes).values == f.values);
    bytes.resize(bytes.size() - 4);  // 511 values
    try {
      parse_feature(bytes);
      FAIL("expected BadFeatureFile");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::BadFeatureFile);
    }
    CHECK_THROWS_AS(ImageFeature::checked(std::vector<nn::Real>(511, 0)), Error);
  }

  TEST_CASE("generation is deterministic and well formed") {
    util::Rng rng(5);
    EmoModel m(small_config(), rng);
    const auto img = random_feature(rng);
    GenerateOptions g;
    g.max_len = 12;
    const auto a = generate(m, img, g);
    const auto b = generate(m, img, g);
    CHECK(a == b);
    CHECK(tok::well_formed(a, m.vocab()));
    g.strategy = Strategy::Temperature;
    g.seed = 9;
    const auto c = generate(m, img, g);
    CHECK(c == generate(m, img, g));
    CHECK(tok::well_formed(c, m.vocab()));
    g.max_len = 13;
    CHECK_THROWS_AS(generate(m, img, g), Error);
  }

  TEST_CASE("model checkpoint restores identical outputs") {
    util::Rng rng(6);
    EmoModel m(small_config(), rng);
    const auto bytes = nn::serialize_checkpoint(m.to_checkpoint({{"note", "x"}}));
    const auto ck = nn::deserialize_checkpoint(bytes);
    const auto back = EmoModel::from_checkpoint(ck);
    CHECK(back->config() == m.config());
    const auto img = random_feature(rng);
    const std::vector<tok::TokenId> ids{1, 20, 140};
    CHECK(back->teacher_forced_logits(back->encode_image(img), ids).value() ==
          m.teacher_forced_logits(m.encode_image(img), ids).value());
  }

  TEST_CASE("va predictor outputs a VA pair per histogram") {
    util::Rng rng(7);
    const tok::Vocabulary v(4, 2);
    VaPredictor p(v, {}, rng);
    const std::vector<tok::TokenId> ids{1, 5, 135, 2};
    const auto h = token_histogram(ids, v.size());
    double total = 0;
    for (auto x : h.values()) total += x;
    CHECK(total == doctest::Approx(1.0));
    try {
      p.predict(ids);
      FAIL("expected WeightsMissing");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::WeightsMissing);
    }
    p.mark_trained();
    const auto va = p.predict(ids);
    CHECK(std::isfinite(va.valence));
    CHECK(std::isfinite(va.arousal));
    CHECK(p.frozen()(Var::constant(h)).value().size() == 2);
  }
}
