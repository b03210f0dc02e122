#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace emomusic::midi {

inline constexpr int kPitchCount = 128;
inline constexpr std::int64_t kDefaultTempo = 500000;  // µs per beat, 120 BPM
inline constexpr int kDefaultStepsPerBeat = 4;

struct NoteEvent {
  int pitch = 60;            // 0..127
  std::int64_t onset = 0;    // ticks
  std::int64_t duration = 1; // ticks, >= 1
  int velocity = 64;         // 1..127

  friend bool operator==(const NoteEvent&, const NoteEvent&) = default;
};

/// A single-part piece of symbolic music.
///
/// Construction canonicalizes the note list: notes are sorted by
/// (onset, pitch) and overlapping notes of the same pitch are resolved the way
/// a Note-On stream would be, i.e. the later onset truncates the earlier note
/// (which disappears if the truncation leaves it empty). Throws OutOfRange for
/// notes violating the NoteEvent field ranges.
class MidiPiece {
 public:
  MidiPiece() = default;
  MidiPiece(int ticks_per_beat, std::int64_t tempo_us_per_beat, std::vector<NoteEvent> notes);

  int ticks_per_beat() const noexcept { return ticks_per_beat_; }
  std::int64_t tempo_us_per_beat() const noexcept { return tempo_us_per_beat_; }
  const std::vector<NoteEvent>& notes() const noexcept { return notes_; }
  bool empty() const noexcept { return notes_.empty(); }
  std::int64_t end_tick() const noexcept;

  friend bool operator==(const MidiPiece&, const MidiPiece&) = default;

 private:
  int ticks_per_beat_ = 480;
  std::int64_t tempo_us_per_beat_ = kDefaultTempo;
  std::vector<NoteEvent> notes_;
};

/// Pitch × time-step rasterization; both matrices are stored pitch-major
/// (index = pitch * steps + t).
class PianoRoll {
 public:
  PianoRoll(int steps_per_beat, std::size_t steps);

  int steps_per_beat() const noexcept { return steps_per_beat_; }
  std::size_t steps() const noexcept { return steps_; }

  bool sounding(int pitch, std::size_t t) const { return grid_[index(pitch, t)] != 0; }
  bool onset(int pitch, std::size_t t) const { return onsets_[index(pitch, t)] != 0; }
  void set_sounding(int pitch, std::size_t t, bool v = true) { grid_[index(pitch, t)] = v; }
  void set_onset(int pitch, std::size_t t, bool v = true) { onsets_[index(pitch, t)] = v; }

  /// Number of sounding pitches at step t.
  int column_count(std::size_t t) const;
  bool any_onset(std::size_t t) const;

 private:
  std::size_t index(int pitch, std::size_t t) const { return static_cast<std::size_t>(pitch) * steps_ + t; }

  int steps_per_beat_;
  std::size_t steps_;
  std::vector<std::uint8_t> grid_;
  std::vector<std::uint8_t> onsets_;
};

/// Parses a Standard MIDI File (format 0 or 1; tracks are merged by absolute
/// tick). Channels are merged, controllers and sysex are skipped, the first
/// tempo meta-event wins.
MidiPiece parse_midi(std::span<const std::uint8_t> bytes);

/// Emits a format-0 SMF: one tempo meta-event, then Note-On/Note-Off pairs.
/// At equal ticks Note-Offs precede Note-Ons, each group by ascending pitch.
std::vector<std::uint8_t> write_midi(const MidiPiece& piece);

/// Note [onset, onset+duration) covers steps
/// [floor(onset*s/tpb), max(start+1, ceil((onset+duration)*s/tpb))).
PianoRoll to_piano_roll(const MidiPiece& piece, int steps_per_beat = kDefaultStepsPerBeat);

/// Half-open step range a note occupies under to_piano_roll's mapping.
struct StepSpan {
  std::int64_t start;
  std::int64_t end;
};
StepSpan note_steps(const NoteEvent& note, int ticks_per_beat, int steps_per_beat);

// Variable-length quantity helpers, exposed for tests.
void append_vlq(std::vector<std::uint8_t>& out, std::uint32_t value);
std::uint32_t read_vlq(std::span<const std::uint8_t> bytes, std::size_t& pos);

}  // namespace emomusic::midi
