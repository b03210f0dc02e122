#include "emomusic/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "emomusic/error.hpp"
#include "emomusic/util/io.hpp"

namespace emomusic::tok {

namespace {

constexpr TokenId kNoteOnBase = 3;
constexpr TokenId kNoteOffBase = 3 + 128;
constexpr TokenId kTimeShiftBase = 3 + 256;
constexpr int kTicksPerStep = 120;
constexpr std::int64_t kMaxTick = 0x0FFFFFFF;

}  // namespace

Vocabulary::Vocabulary(int time_shift_bins, int velocity_bins)
    : time_shift_bins_(time_shift_bins), velocity_bins_(velocity_bins) {
  if (time_shift_bins < 1) throw Error(ErrorCode::ConfigError, "time_shift_bins must be >= 1");
  if (velocity_bins < 1 || velocity_bins > 127)
    throw Error(ErrorCode::ConfigError, "velocity_bins must be in 1..127");
}

TokenId Vocabulary::note_on(int pitch) const {
  if (pitch < 0 || pitch > 127) throw Error(ErrorCode::OutOfRange, "pitch out of range");
  return kNoteOnBase + pitch;
}

TokenId Vocabulary::note_off(int pitch) const {
  if (pitch < 0 || pitch > 127) throw Error(ErrorCode::OutOfRange, "pitch out of range");
  return kNoteOffBase + pitch;
}

TokenId Vocabulary::time_shift(int steps) const {
  if (steps < 1 || steps > time_shift_bins_) throw Error(ErrorCode::OutOfRange, "time shift out of range");
  return kTimeShiftBase + steps - 1;
}

TokenId Vocabulary::velocity(int bin) const {
  if (bin < 0 || bin >= velocity_bins_) throw Error(ErrorCode::OutOfRange, "velocity bin out of range");
  return kTimeShiftBase + time_shift_bins_ + bin;
}

TokenId Vocabulary::token_to_id(const Token& token) const {
  switch (token.kind) {
    case TokenKind::Pad: return kPad;
    case TokenKind::Bos: return kBos;
    case TokenKind::Eos: return kEos;
    case TokenKind::NoteOn: return note_on(token.value);
    case TokenKind::NoteOff: return note_off(token.value);
    case TokenKind::TimeShift: return time_shift(token.value);
    case TokenKind::Velocity: return velocity(token.value);
  }
  throw Error(ErrorCode::OutOfRange, "unknown token kind");
}

Token Vocabulary::id_to_token(TokenId id) const {
  if (!valid(id)) throw Error(ErrorCode::VocabMismatch, "token id " + std::to_string(id) + " outside vocabulary");
  if (id == kPad) return {TokenKind::Pad, 0};
  if (id == kBos) return {TokenKind::Bos, 0};
  if (id == kEos) return {TokenKind::Eos, 0};
  if (id < kNoteOffBase) return {TokenKind::NoteOn, id - kNoteOnBase};
  if (id < kTimeShiftBase) return {TokenKind::NoteOff, id - kNoteOffBase};
  if (id < kTimeShiftBase + time_shift_bins_) return {TokenKind::TimeShift, id - kTimeShiftBase + 1};
  return {TokenKind::Velocity, id - kTimeShiftBase - time_shift_bins_};
}

int Vocabulary::velocity_bin(int velocity) const {
  velocity = std::clamp(velocity, 1, 127);
  return (velocity - 1) * velocity_bins_ / 127;
}

int Vocabulary::velocity_of_bin(int bin) const {
  int lo = 0, hi = 0;
  for (int v = 1; v <= 127; ++v) {
    if (velocity_bin(v) == bin) {
      if (lo == 0) lo = v;
      hi = v;
    }
  }
  if (lo == 0) throw Error(ErrorCode::OutOfRange, "velocity bin out of range");
  return (lo + hi) / 2;
}

std::string Vocabulary::layout() const {
  return "pad,bos,eos|on128|off128|ts" + std::to_string(time_shift_bins_) + "|vel" +
         std::to_string(velocity_bins_);
}

std::string Vocabulary::hash() const { return util::hex64(util::fnv1a64(layout())); }

int decode_ticks_per_beat(int steps_per_beat) { return kTicksPerStep * steps_per_beat; }

TokenSequence encode(const midi::MidiPiece& piece, const Vocabulary& vocab, int steps_per_beat,
                     std::size_t max_len) {
  if (steps_per_beat <= 0) throw Error(ErrorCode::OutOfRange, "steps_per_beat must be positive");
  if (max_len < 2) throw Error(ErrorCode::OutOfRange, "max_len must be >= 2");

  struct QNote {
    std::int64_t start, end;
    int pitch, vbin;
  };
  std::vector<QNote> q;
  q.reserve(piece.notes().size());
  for (const auto& n : piece.notes()) {
    auto span = midi::note_steps(n, piece.ticks_per_beat(), steps_per_beat);
    q.push_back({span.start, span.end, n.pitch, vocab.velocity_bin(n.velocity)});
  }
  // Quantization can make same-pitch notes overlap; resolve like MidiPiece does.
  std::sort(q.begin(), q.end(), [](const QNote& a, const QNote& b) {
    return std::tie(a.start, a.pitch, a.end, a.vbin) < std::tie(b.start, b.pitch, b.end, b.vbin);
  });
  std::array<std::ptrdiff_t, 128> last;
  last.fill(-1);
  std::vector<bool> drop(q.size(), false);
  for (std::size_t i = 0; i < q.size(); ++i) {
    auto& prev_idx = last[static_cast<std::size_t>(q[i].pitch)];
    if (prev_idx >= 0) {
      auto& prev = q[static_cast<std::size_t>(prev_idx)];
      if (prev.end > q[i].start) {
        prev.end = q[i].start;
        if (prev.end == prev.start) drop[static_cast<std::size_t>(prev_idx)] = true;
      }
    }
    prev_idx = static_cast<std::ptrdiff_t>(i);
  }

  struct StepEvents {
    std::vector<int> offs;
    std::vector<std::pair<int, int>> ons;  // (pitch, vbin)
  };
  std::map<std::int64_t, StepEvents> steps;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (drop[i]) continue;
    steps[q[i].start].ons.emplace_back(q[i].pitch, q[i].vbin);
    steps[q[i].end].offs.push_back(q[i].pitch);
  }

  std::vector<std::vector<TokenId>> events;
  std::int64_t cursor = 0;
  int current_vbin = -1;
  for (auto& [step, ev] : steps) {
    for (std::int64_t gap = step - cursor; gap > 0;) {
      const int shift = static_cast<int>(std::min<std::int64_t>(gap, vocab.time_shift_bins()));
      events.push_back({vocab.time_shift(shift)});
      gap -= shift;
    }
    cursor = step;
    std::sort(ev.offs.begin(), ev.offs.end());
    std::sort(ev.ons.begin(), ev.ons.end());
    for (int p : ev.offs) events.push_back({vocab.note_off(p)});
    for (auto [p, vbin] : ev.ons) {
      if (vbin != current_vbin) {
        events.push_back({vocab.velocity(vbin), vocab.note_on(p)});
        current_vbin = vbin;
      } else {
        events.push_back({vocab.note_on(p)});
      }
    }
  }

  TokenSequence out;
  out.max_len = max_len;
  out.ids.push_back(Vocabulary::kBos);
  std::size_t total = 2;
  for (const auto& e : events) total += e.size();
  if (total <= max_len) {
    for (const auto& e : events) out.ids.insert(out.ids.end(), e.begin(), e.end());
    out.ids.push_back(Vocabulary::kEos);
  } else {
    for (const auto& e : events) {
      if (out.ids.size() + e.size() > max_len) break;
      out.ids.insert(out.ids.end(), e.begin(), e.end());
    }
  }
  return out;
}

midi::MidiPiece decode(const TokenSequence& tokens, const Vocabulary& vocab, int steps_per_beat) {
  if (steps_per_beat <= 0) throw Error(ErrorCode::OutOfRange, "steps_per_beat must be positive");
  const int tpb = decode_ticks_per_beat(steps_per_beat);
  const std::int64_t ticks_per_step = kTicksPerStep;
  const std::int64_t max_step = kMaxTick / ticks_per_step - 1;

  struct Open {
    std::int64_t start;
    int vbin;
  };
  std::array<std::optional<Open>, 128> open;
  std::vector<midi::NoteEvent> notes;
  std::int64_t cursor = 0;
  int vbin = vocab.velocity_bin(64);

  auto close = [&](int pitch, std::int64_t end) {
    auto& slot = open[static_cast<std::size_t>(pitch)];
    end = std::min(std::max(end, slot->start + 1), max_step);
    notes.push_back({pitch, slot->start * ticks_per_step, (end - slot->start) * ticks_per_step,
                     vocab.velocity_of_bin(slot->vbin)});
    slot.reset();
  };

  for (TokenId id : tokens.ids) {
    if (!vocab.valid(id)) continue;
    const Token t = vocab.id_to_token(id);
    if (t.kind == TokenKind::Eos) break;
    switch (t.kind) {
      case TokenKind::TimeShift:
        cursor = std::min(cursor + t.value, max_step - 1);
        break;
      case TokenKind::Velocity:
        vbin = t.value;
        break;
      case TokenKind::NoteOn: {
        auto& slot = open[static_cast<std::size_t>(t.value)];
        if (slot && slot->start == cursor) break;
        if (slot) close(t.value, cursor);
        slot = Open{cursor, vbin};
        break;
      }
      case TokenKind::NoteOff:
        if (open[static_cast<std::size_t>(t.value)]) close(t.value, cursor);
        break;
      default:
        break;
    }
  }
  for (int p = 0; p < 128; ++p)
    if (open[static_cast<std::size_t>(p)]) close(p, cursor);
  return midi::MidiPiece(tpb, midi::kDefaultTempo, std::move(notes));
}

bool well_formed(const TokenSequence& tokens, const Vocabulary& vocab) {
  const auto& ids = tokens.ids;
  if (ids.empty() || ids.size() > tokens.max_len || ids[0] != Vocabulary::kBos) return false;
  bool in_pad = false, after_eos = false;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!vocab.valid(ids[i])) return false;
    if (ids[i] == Vocabulary::kPad) {
      in_pad = true;
      continue;
    }
    if (in_pad || after_eos) return false;
    if (i > 0 && ids[i] == Vocabulary::kBos) return false;
    if (ids[i] == Vocabulary::kEos) after_eos = true;
  }
  return true;
}

TokenSequence padded(const TokenSequence& tokens) {
  TokenSequence out = tokens;
  if (out.ids.size() < out.max_len) out.ids.resize(out.max_len, Vocabulary::kPad);
  return out;
}

TokenSequence unpadded(const TokenSequence& tokens) {
  TokenSequence out = tokens;
  while (!out.ids.empty() && out.ids.back() == Vocabulary::kPad) out.ids.pop_back();
  return out;
}

void write_token_records(const std::filesystem::path& path, const std::vector<TokenRecord>& records,
                         const Vocabulary& vocab) {
  std::string text;
  for (const auto& r : records) {
    nlohmann::json j;
    j["id"] = r.id;
    j["tokens"] = r.tokens.ids;
    j["vocab_hash"] = vocab.hash();
    text += j.dump();
    text += '\n';
  }
  util::write_text(path, text);
}

std::vector<TokenRecord> read_token_records(const std::filesystem::path& path, const Vocabulary& vocab,
                                            std::size_t max_len) {
  std::istringstream in(util::read_text(path));
  std::vector<TokenRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ConfigError, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.contains("id") || !j.contains("tokens") || !j.contains("vocab_hash"))
      throw Error(ErrorCode::ConfigError, path.string() + ":" + std::to_string(lineno) + ": missing field");
    if (j["vocab_hash"].get<std::string>() != vocab.hash())
      throw Error(ErrorCode::VocabMismatch, path.string() + ":" + std::to_string(lineno) +
                                                ": record vocab hash differs from configured vocabulary");
    TokenRecord r;
    r.id = j["id"].get<std::string>();
    r.tokens.ids = j["tokens"].get<std::vector<TokenId>>();
    r.tokens.max_len = max_len;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace emomusic::tok
