#include <doctest.h>

#include <cmath>

#include "emomusic/error.hpp"
#include "emomusic/metrics.hpp"
#include "emomusic/util/random.hpp"
#include "support/oracles.hpp"

using namespace emomusic;
using midi::MidiPiece;
using midi::NoteEvent;

namespace {

// One note per listed step on a 4-steps-per-beat grid (120 ticks per step).
MidiPiece onsets_at(const std::vector<int>& steps, int pitch = 60) {
  std::vector<NoteEvent> notes;
  for (int s : steps) notes.push_back({pitch, s * 120, 120, 80});
  return MidiPiece(480, 500000, notes);
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::IoError;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("pitch entropy hand values") {
    CHECK(metrics::pitch_entropy(MidiPiece(480, 500000, {{60, 0, 10, 64}, {60, 20, 10, 64}})) == 0.0);
    const MidiPiece p(480, 500000, {{60, 0, 10, 64}, {60, 20, 10, 64}, {64, 0, 10, 64}, {67, 0, 10, 64}});
    CHECK(metrics::pitch_entropy(p) == 1.5);
    const MidiPiece u(480, 500000, {{60, 0, 10, 64}, {62, 0, 10, 64}, {64, 0, 10, 64}, {65, 0, 10, 64}});
    CHECK(metrics::pitch_entropy(u) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(code_of([] { metrics::pitch_entropy(MidiPiece{}); }) == ErrorCode::EmptyPiece);
  }

  TEST_CASE("polyphony hand values") {
    const auto mono = midi::to_piano_roll(onsets_at({0, 1, 2, 3}));
    CHECK(metrics::polyphony_rate(mono) == 0.0);
    const MidiPiece chords(480, 500000, {{60, 0, 240, 64}, {64, 0, 240, 64}, {67, 0, 240, 64}});
    CHECK(metrics::polyphony_rate(midi::to_piano_roll(chords)) == 1.0);
    // Five sounding steps, two with chords, one silent gap at steps 4..5.
    const MidiPiece half(480, 500000,
                         {{60, 0, 480, 64}, {64, 0, 240, 64}, {72, 720, 120, 64}});
    const auto roll = midi::to_piano_roll(half);
    CHECK(metrics::polyphony_rate(roll) == 0.4);
    CHECK(metrics::polyphony_rate(roll, metrics::PolyphonyDenominator::TotalSteps) == doctest::Approx(2.0 / 7.0));
    CHECK(code_of([] { metrics::polyphony_rate(midi::PianoRoll(4, 0)); }) == ErrorCode::EmptyRoll);
  }

  TEST_CASE("groove hand values") {
    std::vector<int> repeated;
    for (int m = 0; m < 3; ++m)
      for (int s : {0, 4, 8, 12}) repeated.push_back(16 * m + s);
    CHECK(metrics::groove_consistency(midi::to_piano_roll(onsets_at(repeated)), 16) == 1.0);

    // second measure drops one onset; a held note keeps it a full measure
    const MidiPiece dropped(480, 500000,
                            {{60, 0, 120, 80}, {60, 480, 120, 80}, {60, 960, 120, 80}, {60, 1440, 120, 80},
                             {60, 1920, 120, 80}, {60, 2400, 120, 80}, {60, 2880, 960, 80}});
    CHECK(metrics::groove_consistency(midi::to_piano_roll(dropped), 16) == 0.9375);
    auto moved = onsets_at({0, 4, 8, 12, 16, 20, 24, 29});
    moved = MidiPiece(480, 500000, [&] {
      auto n = moved.notes();
      n.back().duration = 360;
      return n;
    }());
    CHECK(metrics::groove_consistency(midi::to_piano_roll(moved), 16) == 0.875);
    CHECK(metrics::groove_consistency(midi::to_piano_roll(moved), 16, metrics::GrooveDistance::Raw) == -1.0);

    std::vector<int> full;
    for (int s = 0; s < 16; ++s) full.push_back(s);
    full.push_back(47);  // third measure exists, empty onsets in the second
    auto roll = midi::to_piano_roll(onsets_at(full));
    CHECK(metrics::groove_consistency(roll, 16) == doctest::Approx(1.0 - (1.0 + 1.0 / 16.0) / 2.0));

    CHECK(code_of([] { metrics::groove_consistency(midi::to_piano_roll(onsets_at({0, 20})), 16); }) ==
          ErrorCode::TooShort);
  }

  TEST_CASE("trailing partial measures are discarded") {
    const auto roll = midi::to_piano_roll(onsets_at({0, 16, 33, 34, 35}));
    CHECK(metrics::groove_consistency(roll, 16) == 1.0);
  }

  TEST_CASE("music quality loss") {
    CHECK(metrics::music_quality_loss(metrics::kReferenceTriple) == 0.0);
    CHECK(metrics::music_quality_loss({0.5303, 3.9863, 0.9922}, {0.5303, 3.9863, 0.9922}) == 0.0);
    CHECK(metrics::music_quality_loss({0, 0, 0.9922}) == doctest::Approx((0.5303 + 3.9863) / 3.0).epsilon(1e-15));
  }

  TEST_CASE("metrics match the brute-force oracle") {
    util::Rng rng(21);
    for (int i = 0; i < 300; ++i) {
      const auto piece = oracle::random_piece(rng, 8);
      for (int spb : {1, 4}) {
        const auto roll = midi::to_piano_roll(piece, spb);
        CHECK(std::abs(metrics::pitch_entropy(piece) - oracle::entropy_bits(piece)) <= 1e-12);
        CHECK(std::abs(metrics::polyphony_rate(roll) - oracle::polyphony(piece, spb)) <= 1e-12);
        CHECK(std::abs(metrics::polyphony_rate(roll, metrics::PolyphonyDenominator::TotalSteps) -
                       oracle::polyphony(piece, spb, true)) <= 1e-12);
        for (int spm : {2, 4, 16}) {
          const auto g = oracle::groove(piece, spb, spm);
          if (g) {
            CHECK(std::abs(metrics::groove_consistency(roll, spm) - *g) <= 1e-12);
            CHECK(std::abs(metrics::groove_consistency(roll, spm, metrics::GrooveDistance::Raw) -
                           *oracle::groove(piece, spb, spm, false)) <= 1e-12);
          } else {
            CHECK_THROWS_AS(metrics::groove_consistency(roll, spm), Error);
          }
        }
      }
    }
  }

  TEST_CASE("ranges, entropy bound and transposition invariance") {
    util::Rng rng(22);
    for (int i = 0; i < 300; ++i) {
      const auto piece = oracle::random_piece(rng, 8);
      const auto roll = midi::to_piano_roll(piece, 4);
      const double h = metrics::pitch_entropy(piece);
      std::set<int> distinct;
      for (const auto& n : piece.notes()) distinct.insert(n.pitch);
      CHECK(h <= std::log2(static_cast<double>(distinct.size())) + 1e-12);
      const double poly = metrics::polyphony_rate(roll);
      CHECK(poly >= 0.0);
      CHECK(poly <= 1.0);
      if (const auto g = oracle::groove(piece, 4, 4)) {
        const double gc = metrics::groove_consistency(roll, 4);
        CHECK(gc >= 0.0);
        CHECK(gc <= 1.0);
      }
      std::vector<NoteEvent> up = piece.notes();
      for (auto& n : up) n.pitch += 12;
      const MidiPiece t(piece.ticks_per_beat(), piece.tempo_us_per_beat(), up);
      CHECK(metrics::pitch_entropy(t) == h);
      CHECK(metrics::polyphony_rate(midi::to_piano_roll(t, 4)) == poly);
    }
  }

  TEST_CASE("entropy equals log2 of the distinct count iff uniform") {
    const MidiPiece uniform(480, 500000, {{60, 0, 1, 64}, {61, 0, 1, 64}, {62, 0, 1, 64}});
    CHECK(metrics::pitch_entropy(uniform) == doctest::Approx(std::log2(3.0)).epsilon(1e-15));
    const MidiPiece skewed(480, 500000, {{60, 0, 1, 64}, {60, 5, 1, 64}, {61, 0, 1, 64}, {62, 0, 1, 64}});
    CHECK(metrics::pitch_entropy(skewed) < std::log2(3.0) - 1e-6);
  }

  TEST_CASE("corpus summary averages per-piece losses") {
    std::vector<int> a_steps, b_steps;
    for (int s = 0; s <= 32; s += 4) a_steps.push_back(s);
    for (int s = 0; s <= 32; s += 2) b_steps.push_back(s);
    const std::vector<MidiPiece> pieces{onsets_at(a_steps, 60), onsets_at(b_steps, 67),
                                        MidiPiece(480, 500000, {{60, 0, 1, 64}})};
    const auto evals = metrics::evaluate_all(pieces, {}, 2);
    REQUIRE(evals.size() == 3);
    CHECK(evals[0].complete());
    CHECK(evals[1].complete());
    CHECK_FALSE(evals[2].complete());
    CHECK(evals[2].error == "TooShort");
    const auto s = metrics::summarize(evals);
    CHECK(s.pieces == 3);
    CHECK(s.complete == 2);
    CHECK(s.music_quality_loss ==
          doctest::Approx((*evals[0].music_quality_loss + *evals[1].music_quality_loss) / 2).epsilon(1e-15));
    const auto serial = metrics::evaluate_all(pieces, {}, 1);
    for (std::size_t i = 0; i < 3; ++i) CHECK(serial[i].music_quality_loss == evals[i].music_quality_loss);
  }
}
