#include <doctest.h>

#include <filesystem>

#include "emomusic/error.hpp"
#include "emomusic/tokenizer.hpp"
#include "emomusic/util/io.hpp"
#include "emomusic/util/random.hpp"
#include "support/oracles.hpp"

using namespace emomusic;
using tok::TokenSequence;
using tok::Vocabulary;

namespace {

bool piece_valid(const midi::MidiPiece& p) {
  for (const auto& n : p.notes())
    if (n.pitch < 0 || n.pitch > 127 || n.duration < 1 || n.onset < 0 || n.velocity < 1 || n.velocity > 127) return false;
  return true;
}

}  // namespace

TEST_SUITE("tokenizer") {
  TEST_CASE("id layout of the default vocabulary") {
    const Vocabulary v;
    CHECK(v.size() == 391);
    CHECK(v.note_on(0) == 3);
    CHECK(v.note_on(60) == 63);
    CHECK(v.note_off(0) == 131);
    CHECK(v.note_off(127) == 258);
    CHECK(v.time_shift(1) == 259);
    CHECK(v.time_shift(100) == 358);
    CHECK(v.velocity(0) == 359);
    CHECK(v.velocity(31) == 390);
    CHECK(v.layout() == "pad,bos,eos|on128|off128|ts100|vel32");
    CHECK(v.hash().size() == 16);
    CHECK(v.hash() != Vocabulary(100, 16).hash());
  }

  TEST_CASE("id <-> token is a bijection") {
    const Vocabulary v(7, 5);
    for (tok::TokenId id = 0; id < v.size(); ++id) CHECK(v.token_to_id(v.id_to_token(id)) == id);
    CHECK_THROWS_AS(v.id_to_token(v.size()), Error);
    CHECK_THROWS_AS(v.id_to_token(-1), Error);
  }

  TEST_CASE("velocity bins cover 1..127 monotonically") {
    const Vocabulary v;
    int last = 0;
    for (int vel = 1; vel <= 127; ++vel) {
      const int b = v.velocity_bin(vel);
      CHECK(b >= last);
      CHECK(b < v.velocity_bins());
      last = b;
    }
    CHECK(v.velocity_bin(1) == 0);
    CHECK(v.velocity_bin(127) == 31);
    for (int b = 0; b < 32; ++b) CHECK(v.velocity_bin(v.velocity_of_bin(b)) == b);
  }

  TEST_CASE("hand-encoded two-note melody") {
    const Vocabulary v;
    const midi::MidiPiece p(480, 500000, {{60, 0, 480, 100}, {64, 480, 240, 100}});
    const auto seq = tok::encode(p, v, 4, 64);
    const std::vector<tok::TokenId> expected{Vocabulary::kBos, v.velocity(v.velocity_bin(100)), v.note_on(60),
                                             v.time_shift(4),   v.note_off(60),                  v.note_on(64),
                                             v.time_shift(2),   v.note_off(64),                  Vocabulary::kEos};
    CHECK(seq.ids == expected);
    CHECK(tok::well_formed(seq, v));
  }

  TEST_CASE("long gaps become runs of maximal time shifts") {
    const Vocabulary v(100, 32);
    const midi::MidiPiece p(4, 500000, {{60, 0, 1, 64}, {62, 251, 1, 64}});  // one tick per step
    const auto seq = tok::encode(p, v, 4, 64);
    const std::vector<tok::TokenId> expected{Vocabulary::kBos,    v.velocity(v.velocity_bin(64)), v.note_on(60),
                                             v.time_shift(1),     v.note_off(60),                 v.time_shift(100),
                                             v.time_shift(100),   v.time_shift(50),               v.note_on(62),
                                             v.time_shift(1),     v.note_off(62),                 Vocabulary::kEos};
    CHECK(seq.ids == expected);
  }

  TEST_CASE("encode is a fixed point after one decode (untruncated)") {
    const Vocabulary v(16, 8);
    util::Rng rng(2);
    for (int i = 0; i < 300; ++i) {
      const auto piece = oracle::random_piece(rng, 10);
      const auto first = tok::encode(piece, v, 4, 100000);
      REQUIRE(first.ids.back() == Vocabulary::kEos);
      const auto again = tok::encode(tok::decode(first, v, 4), v, 4, 100000);
      CHECK(again == first);
    }
  }

  TEST_CASE("decode preserves quantized timing and pitch") {
    const Vocabulary v;
    const midi::MidiPiece p(480, 500000, {{60, 0, 480, 100}, {67, 0, 960, 40}, {64, 480, 240, 100}});
    const auto back = tok::decode(tok::encode(p, v, 4, 256), v, 4);
    const int tpb = tok::decode_ticks_per_beat(4);
    CHECK(back.ticks_per_beat() == tpb);
    REQUIRE(back.notes().size() == 3);
    CHECK(back.notes()[0].pitch == 60);
    CHECK(back.notes()[0].duration == tpb);
    CHECK(back.notes()[1].pitch == 67);
    CHECK(back.notes()[1].duration == 2 * tpb);
    CHECK(back.notes()[2].onset == tpb);
  }

  TEST_CASE("truncation keeps whole events, drops EOS and stays well formed") {
    const Vocabulary v;
    util::Rng rng(4);
    for (int i = 0; i < 100; ++i) {
      const auto piece = oracle::random_piece(rng, 10);
      for (std::size_t max_len : {2u, 5u, 9u, 17u}) {
        const auto seq = tok::encode(piece, v, 4, max_len);
        CHECK(seq.size() <= max_len);
        CHECK(tok::well_formed(seq, v));
        const auto full = tok::encode(piece, v, 4, 100000);
        if (full.size() > max_len) {
          CHECK(seq.ids.back() != Vocabulary::kEos);
          CHECK(std::equal(seq.ids.begin(), seq.ids.end(), full.ids.begin()));
        }
      }
    }
  }

  TEST_CASE("decode is total on arbitrary id streams") {
    const Vocabulary v(12, 6);
    util::Rng rng(9);
    for (int i = 0; i < 2000; ++i) {
      TokenSequence s;
      s.max_len = 64;
      const std::size_t n = rng.index(64);
      for (std::size_t k = 0; k < n; ++k) s.ids.push_back(static_cast<tok::TokenId>(rng.index(v.size() + 20)) - 10);
      midi::MidiPiece p;
      CHECK_NOTHROW(p = tok::decode(s, v, 4));
      CHECK(piece_valid(p));
      CHECK(tok::well_formed(tok::encode(p, v, 4, 64), v));
    }
  }

  TEST_CASE("well_formed rejects broken invariants") {
    const Vocabulary v;
    CHECK_FALSE(tok::well_formed({{}, 8}, v));
    CHECK_FALSE(tok::well_formed({{63}, 8}, v));
    CHECK_FALSE(tok::well_formed({{1, 63, 0, 63}, 8}, v));
    CHECK_FALSE(tok::well_formed({{1, 2, 63}, 8}, v));
    CHECK_FALSE(tok::well_formed({{1, 1}, 8}, v));
    CHECK_FALSE(tok::well_formed({{1, 391}, 8}, v));
    CHECK_FALSE(tok::well_formed({{1, 63, 63}, 2}, v));
    CHECK(tok::well_formed({{1, 63, 2, 0, 0}, 8}, v));
  }

  TEST_CASE("padding round trip") {
    const TokenSequence s{{1, 63, 2}, 6};
    const auto p = tok::padded(s);
    CHECK(p.ids == std::vector<tok::TokenId>{1, 63, 2, 0, 0, 0});
    CHECK(tok::unpadded(p) == s);
  }

  TEST_CASE("token records round trip and reject another vocabulary") {
    const auto dir = std::filesystem::temp_directory_path() / "emomusic_tok_test";
    std::filesystem::remove_all(dir);
    const Vocabulary v;
    const std::vector<tok::TokenRecord> recs{{"a", {{1, 63, 2}, 16}}, {"b", {{1, 2}, 16}}};
    tok::write_token_records(dir / "t.jsonl", recs, v);
    const auto back = tok::read_token_records(dir / "t.jsonl", v, 16);
    REQUIRE(back.size() == 2);
    CHECK(back[0].id == "a");
    CHECK(back[0].tokens.ids == recs[0].tokens.ids);
    try {
      tok::read_token_records(dir / "t.jsonl", Vocabulary(100, 16), 16);
      FAIL("expected VocabMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::VocabMismatch);
    }
    std::filesystem::remove_all(dir);
  }
}
