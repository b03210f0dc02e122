#include "emomusic/midi_io.hpp"

#include <algorithm>
#include <array>
#include <optional>
#include <string>

#include "emomusic/error.hpp"

namespace emomusic::midi {

namespace {

constexpr std::int64_t kMaxTick = 0x0FFFFFFF;  // largest VLQ delta

std::uint32_t read_be(std::span<const std::uint8_t> bytes, std::size_t pos, int n) {
  std::uint32_t v = 0;
  for (int i = 0; i < n; ++i) v = (v << 8) | bytes[pos + static_cast<std::size_t>(i)];
  return v;
}

void append_be(std::vector<std::uint8_t>& out, std::uint32_t v, int n) {
  for (int i = n - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

bool has_tag(std::span<const std::uint8_t> bytes, std::size_t pos, const char* tag) {
  return std::equal(tag, tag + 4, bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; });
}

struct RawNoteEvent {
  std::int64_t tick;
  std::size_t track;
  std::size_t order;  // position within the track, keeps file order at equal ticks
  bool on;
  int pitch;
  int velocity;
};

struct TrackResult {
  std::int64_t end_tick = 0;
  std::optional<std::int64_t> first_tempo;
  std::optional<std::int64_t> first_tempo_tick;
};

TrackResult parse_track(std::span<const std::uint8_t> data, std::size_t track,
                        std::vector<RawNoteEvent>& events) {
  TrackResult result;
  std::size_t pos = 0;
  std::int64_t tick = 0;
  std::uint8_t running = 0;
  std::size_t order = 0;

  auto need = [&](std::size_t n) {
    if (pos + n > data.size())
      throw Error(ErrorCode::TruncatedTrack, "track " + std::to_string(track) + " ends mid-event");
  };

  while (pos < data.size()) {
    tick += read_vlq(data, pos);
    need(1);
    std::uint8_t status = data[pos];
    if (status & 0x80) {
      ++pos;
    } else {
      if (running == 0)
        throw Error(ErrorCode::MalformedHeader,
                    "data byte without running status in track " + std::to_string(track));
      status = running;
    }

    if (status == 0xFF) {
      need(1);
      std::uint8_t type = data[pos++];
      std::uint32_t len = read_vlq(data, pos);
      need(len);
      if (type == 0x51 && len == 3 && !result.first_tempo) {
        result.first_tempo = read_be(data, pos, 3);
        result.first_tempo_tick = tick;
      }
      pos += len;
      if (type == 0x2F) break;
      continue;
    }
    if (status == 0xF0 || status == 0xF7) {
      std::uint32_t len = read_vlq(data, pos);
      need(len);
      pos += len;
      continue;
    }
    if (status >= 0xF0) {
      // System common/real-time messages do not belong in files; skip their data.
      continue;
    }

    running = status;
    const std::uint8_t kind = status & 0xF0;
    const std::size_t data_len = (kind == 0xC0 || kind == 0xD0) ? 1 : 2;
    need(data_len);
    const int d1 = data[pos] & 0x7F;
    const int d2 = data_len == 2 ? (data[pos + 1] & 0x7F) : 0;
    pos += data_len;

    if (kind == 0x90 && d2 > 0) {
      events.push_back({tick, track, order++, true, d1, d2});
    } else if (kind == 0x80 || kind == 0x90) {
      events.push_back({tick, track, order++, false, d1, 0});
    }
  }
  result.end_tick = tick;
  return result;
}

}  // namespace

MidiPiece::MidiPiece(int ticks_per_beat, std::int64_t tempo_us_per_beat, std::vector<NoteEvent> notes)
    : ticks_per_beat_(ticks_per_beat), tempo_us_per_beat_(tempo_us_per_beat) {
  if (ticks_per_beat <= 0 || ticks_per_beat > 0x7FFF)
    throw Error(ErrorCode::OutOfRange, "ticks_per_beat must be in 1..32767");
  if (tempo_us_per_beat <= 0 || tempo_us_per_beat > 0xFFFFFF)
    throw Error(ErrorCode::OutOfRange, "tempo must be in 1..16777215 us/beat");
  for (const auto& n : notes) {
    if (n.pitch < 0 || n.pitch > 127 || n.duration < 1 || n.velocity < 1 || n.velocity > 127 ||
        n.onset < 0 || n.onset + n.duration > kMaxTick)
      throw Error(ErrorCode::OutOfRange,
                  "invalid note (pitch " + std::to_string(n.pitch) + ", onset " + std::to_string(n.onset) +
                      ", duration " + std::to_string(n.duration) + ", velocity " +
                      std::to_string(n.velocity) + ")");
  }
  std::sort(notes.begin(), notes.end(), [](const NoteEvent& a, const NoteEvent& b) {
    return std::tie(a.onset, a.pitch, a.duration, a.velocity) <
           std::tie(b.onset, b.pitch, b.duration, b.velocity);
  });

  std::array<std::ptrdiff_t, kPitchCount> last;
  last.fill(-1);
  std::vector<bool> drop(notes.size(), false);
  for (std::size_t i = 0; i < notes.size(); ++i) {
    auto& prev_idx = last[static_cast<std::size_t>(notes[i].pitch)];
    if (prev_idx >= 0) {
      auto& prev = notes[static_cast<std::size_t>(prev_idx)];
      if (prev.onset + prev.duration > notes[i].onset) {
        prev.duration = notes[i].onset - prev.onset;
        if (prev.duration == 0) drop[static_cast<std::size_t>(prev_idx)] = true;
      }
    }
    prev_idx = static_cast<std::ptrdiff_t>(i);
  }
  notes_.reserve(notes.size());
  for (std::size_t i = 0; i < notes.size(); ++i)
    if (!drop[i]) notes_.push_back(notes[i]);
}

std::int64_t MidiPiece::end_tick() const noexcept {
  std::int64_t end = 0;
  for (const auto& n : notes_) end = std::max(end, n.onset + n.duration);
  return end;
}

PianoRoll::PianoRoll(int steps_per_beat, std::size_t steps)
    : steps_per_beat_(steps_per_beat),
      steps_(steps),
      grid_(static_cast<std::size_t>(kPitchCount) * steps, 0),
      onsets_(static_cast<std::size_t>(kPitchCount) * steps, 0) {}

int PianoRoll::column_count(std::size_t t) const {
  int count = 0;
  for (int p = 0; p < kPitchCount; ++p) count += sounding(p, t) ? 1 : 0;
  return count;
}

bool PianoRoll::any_onset(std::size_t t) const {
  for (int p = 0; p < kPitchCount; ++p)
    if (onset(p, t)) return true;
  return false;
}

void append_vlq(std::vector<std::uint8_t>& out, std::uint32_t value) {
  std::uint8_t buf[5];
  int n = 0;
  buf[n++] = static_cast<std::uint8_t>(value & 0x7F);
  while ((value >>= 7) != 0) buf[n++] = static_cast<std::uint8_t>(0x80 | (value & 0x7F));
  while (n > 0) out.push_back(buf[--n]);
}

std::uint32_t read_vlq(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  std::uint32_t value = 0;
  for (int i = 0; i < 4; ++i) {
    if (pos >= bytes.size()) throw Error(ErrorCode::TruncatedTrack, "bytes end inside a variable-length quantity");
    std::uint8_t b = bytes[pos++];
    value = (value << 7) | (b & 0x7F);
    if (!(b & 0x80)) return value;
  }
  throw Error(ErrorCode::MalformedHeader, "variable-length quantity longer than 4 bytes");
}

MidiPiece parse_midi(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 14 || !has_tag(bytes, 0, "MThd"))
    throw Error(ErrorCode::MalformedHeader, "missing MThd chunk");
  const std::uint32_t header_len = read_be(bytes, 4, 4);
  if (header_len < 6 || 8 + static_cast<std::size_t>(header_len) > bytes.size())
    throw Error(ErrorCode::MalformedHeader, "bad MThd length " + std::to_string(header_len));
  const std::uint32_t format = read_be(bytes, 8, 2);
  const std::uint32_t division = read_be(bytes, 12, 2);
  if (format == 2) throw Error(ErrorCode::UnsupportedFormat, "SMF format 2 is not supported");
  if (format > 2) throw Error(ErrorCode::MalformedHeader, "unknown SMF format " + std::to_string(format));
  if (division & 0x8000) throw Error(ErrorCode::UnsupportedFormat, "SMPTE time division is not supported");
  if (division == 0) throw Error(ErrorCode::MalformedHeader, "zero ticks per beat");

  std::vector<RawNoteEvent> events;
  std::vector<std::int64_t> track_end;
  std::optional<std::int64_t> tempo, tempo_tick;
  std::size_t pos = 8 + header_len;
  while (pos < bytes.size()) {
    if (pos + 8 > bytes.size()) throw Error(ErrorCode::TruncatedTrack, "bytes end inside a chunk header");
    const std::uint32_t len = read_be(bytes, pos + 4, 4);
    const bool is_track = has_tag(bytes, pos, "MTrk");
    pos += 8;
    if (pos + len > bytes.size()) throw Error(ErrorCode::TruncatedTrack, "chunk length exceeds file size");
    if (is_track) {
      auto res = parse_track(bytes.subspan(pos, len), track_end.size(), events);
      track_end.push_back(res.end_tick);
      if (res.first_tempo && (!tempo || *res.first_tempo_tick < *tempo_tick)) {
        tempo = res.first_tempo;
        tempo_tick = res.first_tempo_tick;
      }
    }
    pos += len;
  }

  std::stable_sort(events.begin(), events.end(), [](const RawNoteEvent& a, const RawNoteEvent& b) {
    return std::tie(a.tick, a.track, a.order) < std::tie(b.tick, b.track, b.order);
  });

  struct Open {
    std::int64_t onset;
    int velocity;
    std::size_t track;
  };
  std::array<std::optional<Open>, kPitchCount> open;
  std::vector<NoteEvent> notes;
  for (const auto& ev : events) {
    auto& slot = open[static_cast<std::size_t>(ev.pitch)];
    if (slot) {
      const std::int64_t dur = ev.tick - slot->onset;
      if (dur > 0) notes.push_back({ev.pitch, slot->onset, dur, slot->velocity});
      slot.reset();
    }
    if (ev.on) slot = Open{ev.tick, ev.velocity, ev.track};
  }
  for (int p = 0; p < kPitchCount; ++p) {
    const auto& slot = open[static_cast<std::size_t>(p)];
    if (!slot) continue;
    const std::int64_t end = track_end[slot->track];
    notes.push_back({p, slot->onset, std::max<std::int64_t>(1, end - slot->onset), slot->velocity});
  }
  return MidiPiece(static_cast<int>(division), tempo.value_or(kDefaultTempo), std::move(notes));
}

std::vector<std::uint8_t> write_midi(const MidiPiece& piece) {
  struct Ev {
    std::int64_t tick;
    int kind;  // 0 = off, 1 = on
    int pitch;
    int velocity;
  };
  std::vector<Ev> evs;
  evs.reserve(piece.notes().size() * 2);
  for (const auto& n : piece.notes()) {
    evs.push_back({n.onset, 1, n.pitch, n.velocity});
    evs.push_back({n.onset + n.duration, 0, n.pitch, 0});
  }
  std::sort(evs.begin(), evs.end(), [](const Ev& a, const Ev& b) {
    return std::tie(a.tick, a.kind, a.pitch) < std::tie(b.tick, b.kind, b.pitch);
  });

  std::vector<std::uint8_t> track;
  track.insert(track.end(), {0x00, 0xFF, 0x51, 0x03});
  append_be(track, static_cast<std::uint32_t>(piece.tempo_us_per_beat()), 3);
  std::int64_t last = 0;
  for (const auto& e : evs) {
    append_vlq(track, static_cast<std::uint32_t>(e.tick - last));
    last = e.tick;
    if (e.kind == 1) {
      track.insert(track.end(), {0x90, static_cast<std::uint8_t>(e.pitch), static_cast<std::uint8_t>(e.velocity)});
    } else {
      track.insert(track.end(), {0x80, static_cast<std::uint8_t>(e.pitch), 0x40});
    }
  }
  track.insert(track.end(), {0x00, 0xFF, 0x2F, 0x00});

  std::vector<std::uint8_t> out = {'M', 'T', 'h', 'd', 0, 0, 0, 6, 0, 0, 0, 1};
  append_be(out, static_cast<std::uint32_t>(piece.ticks_per_beat()), 2);
  out.insert(out.end(), {'M', 'T', 'r', 'k'});
  append_be(out, static_cast<std::uint32_t>(track.size()), 4);
  out.insert(out.end(), track.begin(), track.end());
  return out;
}

StepSpan note_steps(const NoteEvent& note, int ticks_per_beat, int steps_per_beat) {
  const std::int64_t tpb = ticks_per_beat;
  const std::int64_t s = steps_per_beat;
  const std::int64_t start = note.onset * s / tpb;
  const std::int64_t end_num = (note.onset + note.duration) * s;
  std::int64_t end = (end_num + tpb - 1) / tpb;
  end = std::max(end, start + 1);
  return {start, end};
}

PianoRoll to_piano_roll(const MidiPiece& piece, int steps_per_beat) {
  if (steps_per_beat <= 0) throw Error(ErrorCode::OutOfRange, "steps_per_beat must be positive");
  std::int64_t steps = 0;
  for (const auto& n : piece.notes())
    steps = std::max(steps, note_steps(n, piece.ticks_per_beat(), steps_per_beat).end);
  PianoRoll roll(steps_per_beat, static_cast<std::size_t>(steps));
  for (const auto& n : piece.notes()) {
    auto span = note_steps(n, piece.ticks_per_beat(), steps_per_beat);
    for (std::int64_t t = span.start; t < span.end; ++t) roll.set_sounding(n.pitch, static_cast<std::size_t>(t));
    roll.set_onset(n.pitch, static_cast<std::size_t>(span.start));
  }
  return roll;
}

}  // namespace emomusic::midi
