#include <doctest.h>

#include "emomusic/error.hpp"
#include "emomusic/midi_io.hpp"
#include "emomusic/util/random.hpp"
#include "support/oracles.hpp"

using namespace emomusic;
using midi::MidiPiece;
using midi::NoteEvent;

namespace {

std::vector<std::uint8_t> vlq(std::uint32_t v) {
  std::vector<std::uint8_t> out;
  midi::append_vlq(out, v);
  return out;
}

ErrorCode code_of(const std::vector<std::uint8_t>& bytes) {
  try {
    midi::parse_midi(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::IoError;
}

}  // namespace

TEST_SUITE("midi_io") {
  TEST_CASE("VLQ encodings from the SMF reference table") {
    CHECK(vlq(0x00) == std::vector<std::uint8_t>{0x00});
    CHECK(vlq(0x40) == std::vector<std::uint8_t>{0x40});
    CHECK(vlq(0x7F) == std::vector<std::uint8_t>{0x7F});
    CHECK(vlq(0x80) == std::vector<std::uint8_t>{0x81, 0x00});
    CHECK(vlq(0x2000) == std::vector<std::uint8_t>{0xC0, 0x00});
    CHECK(vlq(0x3FFF) == std::vector<std::uint8_t>{0xFF, 0x7F});
    CHECK(vlq(0x4000) == std::vector<std::uint8_t>{0x81, 0x80, 0x00});
    CHECK(vlq(0x1FFFFF) == std::vector<std::uint8_t>{0xFF, 0xFF, 0x7F});
    CHECK(vlq(0x200000) == std::vector<std::uint8_t>{0x81, 0x80, 0x80, 0x00});
    CHECK(vlq(0x0FFFFFFF) == std::vector<std::uint8_t>{0xFF, 0xFF, 0xFF, 0x7F});
  }

  TEST_CASE("VLQ read inverts append and rejects five-byte values") {
    util::Rng rng(3);
    for (int i = 0; i < 2000; ++i) {
      const auto v = static_cast<std::uint32_t>(rng.index(0x10000000));
      const auto bytes = vlq(v);
      std::size_t pos = 0;
      CHECK(midi::read_vlq(bytes, pos) == v);
      CHECK(pos == bytes.size());
    }
    const std::vector<std::uint8_t> five{0x81, 0x80, 0x80, 0x80, 0x00};
    std::size_t pos = 0;
    CHECK_THROWS_AS(midi::read_vlq(five, pos), Error);
  }

  TEST_CASE("hand-assembled format-1 file with running status and velocity-0 note-offs") {
    // Track 0: tempo 600000. Track 1: C4 at 0 for 96 ticks, E4+G4 chord at 96
    // for 48 ticks using running status and Note-On velocity 0 as Note-Off.
    const std::vector<std::uint8_t> bytes = {
        'M', 'T', 'h', 'd', 0, 0, 0, 6, 0, 1, 0, 2, 0, 96,                                  //
        'M', 'T', 'r', 'k', 0, 0, 0, 11, 0x00, 0xFF, 0x51, 0x03, 0x09, 0x27, 0xC0, 0x00, 0xFF, 0x2F, 0x00,  //
        'M', 'T', 'r', 'k', 0, 0, 0, 28,                                                   //
        0x00, 0x90, 60, 100,                                                               //
        0x60, 0x80, 60, 64,                                                                //
        0x00, 0x90, 64, 90,                                                                //
        0x00, 67, 80,                                                                      // running status
        0x30, 64, 0,                                                                       // velocity 0 = off
        0x00, 67, 0,                                                                       //
        0x00, 0xC0, 5,                                                                     // program change
        0x00, 0xFF, 0x2F, 0x00};
    const auto piece = midi::parse_midi(bytes);
    CHECK(piece.ticks_per_beat() == 96);
    CHECK(piece.tempo_us_per_beat() == 600000);
    const std::vector<NoteEvent> expected{{60, 0, 96, 100}, {64, 96, 48, 90}, {67, 96, 48, 80}};
    CHECK(piece.notes() == expected);
  }

  TEST_CASE("write then parse reproduces canonical pieces and the bytes") {
    util::Rng rng(11);
    for (int i = 0; i < 200; ++i) {
      const auto piece = oracle::random_piece(rng, 12);
      const auto bytes = midi::write_midi(piece);
      const auto back = midi::parse_midi(bytes);
      CHECK(back == piece);
      CHECK(midi::write_midi(back) == bytes);
    }
  }

  TEST_CASE("construction resolves same-pitch overlaps like a note-on stream") {
    const MidiPiece p(480, 500000, {{60, 0, 480, 90}, {60, 240, 480, 70}, {62, 0, 10, 50}});
    const std::vector<NoteEvent> expected{{60, 0, 240, 90}, {62, 0, 10, 50}, {60, 240, 480, 70}};
    CHECK(p.notes() == expected);
    CHECK(p.end_tick() == 720);
    CHECK_THROWS_AS(MidiPiece(480, 500000, {{128, 0, 1, 64}}), Error);
    CHECK_THROWS_AS(MidiPiece(480, 500000, {{60, 0, 0, 64}}), Error);
  }

  TEST_CASE("header and chunk errors carry their codes") {
    CHECK(code_of({'R', 'I', 'F', 'F', 0, 0, 0, 6, 0, 0, 0, 1, 0, 96}) == ErrorCode::MalformedHeader);
    CHECK(code_of({'M', 'T', 'h', 'd', 0, 0, 0, 6, 0, 2, 0, 1, 0, 96}) == ErrorCode::UnsupportedFormat);
    CHECK(code_of({'M', 'T', 'h', 'd', 0, 0, 0, 6, 0, 0, 0, 1, 0xE7, 0x28}) == ErrorCode::UnsupportedFormat);
    CHECK(code_of({'M', 'T', 'h', 'd', 0, 0, 0, 6, 0, 0, 0, 1, 0, 96, 'M', 'T', 'r', 'k', 0, 0, 0, 40, 0x00, 0x90}) ==
          ErrorCode::TruncatedTrack);
    CHECK(code_of({'M', 'T', 'h', 'd', 0, 0, 0, 6, 0, 0, 0, 1, 0, 96, 'M', 'T', 'r', 'k', 0, 0, 0, 2, 0x00, 0x90}) ==
          ErrorCode::TruncatedTrack);
  }

  TEST_CASE("piano roll: step spans and grid contents") {
    const MidiPiece p(480, 500000, {{60, 0, 480, 90}, {64, 120, 1, 90}, {67, 479, 2, 90}});
    const auto roll = midi::to_piano_roll(p, 4);
    CHECK(roll.steps() == 5);
    for (std::size_t t = 0; t < 4; ++t) CHECK(roll.sounding(60, t));
    CHECK_FALSE(roll.sounding(60, 4));
    CHECK(roll.sounding(64, 1));
    CHECK_FALSE(roll.sounding(64, 2));
    CHECK(roll.onset(67, 3));
    CHECK(roll.sounding(67, 4));
    CHECK(roll.column_count(1) == 2);
    CHECK_THROWS_AS(midi::to_piano_roll(p, 0), Error);
  }

  TEST_CASE("rasterization agrees with the interval-overlap oracle") {
    util::Rng rng(5);
    for (int i = 0; i < 200; ++i) {
      const auto piece = oracle::random_piece(rng, 8);
      for (int spb : {1, 4, 12}) {
        const auto roll = midi::to_piano_roll(piece, spb);
        REQUIRE(static_cast<std::int64_t>(roll.steps()) == oracle::step_count(piece, spb));
        for (std::size_t t = 0; t < roll.steps(); ++t)
          for (const auto& n : piece.notes()) {
            if (oracle::sounds_at(n, piece.ticks_per_beat(), spb, static_cast<std::int64_t>(t)))
              CHECK(roll.sounding(n.pitch, t));
            if (oracle::starts_at(n, piece.ticks_per_beat(), spb, static_cast<std::int64_t>(t)))
              CHECK(roll.onset(n.pitch, t));
          }
      }
    }
  }

  TEST_CASE("refining the grid by an integer factor never loses sounding time") {
    util::Rng rng(8);
    for (int i = 0; i < 200; ++i) {
      const auto piece = oracle::random_piece(rng, 8);
      const auto coarse = midi::to_piano_roll(piece, 2);
      const auto fine = midi::to_piano_roll(piece, 6);
      for (int pitch = 0; pitch < 128; ++pitch)
        for (std::size_t t = 0; t < fine.steps(); ++t)
          if (fine.sounding(pitch, t)) CHECK(coarse.sounding(pitch, t / 3));
    }
  }
}
