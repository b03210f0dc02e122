#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "emomusic/midi_io.hpp"

namespace emomusic::tok {

using TokenId = std::int32_t;

enum class TokenKind { Pad, Bos, Eos, NoteOn, NoteOff, TimeShift, Velocity };

/// A decoded token: kind plus its argument (pitch, shift length in steps
/// 1..K, or velocity bin 0..V-1; zero for specials).
struct Token {
  TokenKind kind = TokenKind::Pad;
  int value = 0;
  friend bool operator==(const Token&, const Token&) = default;
};

/// Event vocabulary with the fixed ID layout
///   0 PAD, 1 BOS, 2 EOS,
///   3..130 NOTE_ON(pitch), 131..258 NOTE_OFF(pitch),
///   259..258+K TIME_SHIFT(1..K), 259+K..258+K+V VELOCITY(bin).
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr int kSpecialCount = 3;

  explicit Vocabulary(int time_shift_bins = 100, int velocity_bins = 32);

  int time_shift_bins() const noexcept { return time_shift_bins_; }
  int velocity_bins() const noexcept { return velocity_bins_; }
  int size() const noexcept { return 259 + time_shift_bins_ + velocity_bins_; }

  TokenId note_on(int pitch) const;
  TokenId note_off(int pitch) const;
  TokenId time_shift(int steps) const;
  TokenId velocity(int bin) const;

  TokenId token_to_id(const Token& token) const;
  /// Throws VocabMismatch for ids outside [0, size()).
  Token id_to_token(TokenId id) const;
  bool valid(TokenId id) const noexcept { return id >= 0 && id < size(); }

  /// Uniform bins over velocities 1..127.
  int velocity_bin(int velocity) const;
  int velocity_of_bin(int bin) const;

  /// Stable layout descriptor, e.g. "pad,bos,eos|on128|off128|ts100|vel32".
  std::string layout() const;
  /// FNV-1a of layout(), as 16 hex digits.
  std::string hash() const;

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;

 private:
  int time_shift_bins_;
  int velocity_bins_;
};

/// Token ids of one piece. Invariants: ids valid for the vocabulary, length
/// at most max_len, starts with BOS, PAD only as a trailing run.
struct TokenSequence {
  std::vector<TokenId> ids;
  std::size_t max_len = 256;

  std::size_t size() const noexcept { return ids.size(); }
  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

struct TokenizerConfig {
  int time_shift_bins = 100;
  int velocity_bins = 32;
  int steps_per_beat = midi::kDefaultStepsPerBeat;
  std::size_t max_len = 256;

  Vocabulary vocabulary() const { return Vocabulary(time_shift_bins, velocity_bins); }
};

/// Event stream: per grid step, NOTE_OFFs then (VELOCITY when the bin
/// changes) NOTE_ONs, ascending pitch; gaps as greedy TIME_SHIFT runs.
/// Truncation at max_len drops whole events; a truncated sequence has no EOS.
TokenSequence encode(const midi::MidiPiece& piece, const Vocabulary& vocab, int steps_per_beat,
                     std::size_t max_len);

/// Total over arbitrary id sequences: invalid ids and misplaced specials are
/// skipped, dangling NOTE_ONs are closed at stream end (at least one step).
/// Output resolution is 120 ticks per step.
midi::MidiPiece decode(const TokenSequence& tokens, const Vocabulary& vocab, int steps_per_beat);

/// True when the sequence satisfies the TokenSequence invariants.
bool well_formed(const TokenSequence& tokens, const Vocabulary& vocab);

/// Pads with trailing PAD up to max_len.
TokenSequence padded(const TokenSequence& tokens);

/// Removes trailing PAD.
TokenSequence unpadded(const TokenSequence& tokens);

/// Ticks-per-beat of decoded pieces for a given grid.
int decode_ticks_per_beat(int steps_per_beat);

// Tokenized dataset file: one JSON object per line,
//   {"id": "...", "tokens": [...], "vocab_hash": "..."}
struct TokenRecord {
  std::string id;
  TokenSequence tokens;
};
void write_token_records(const std::filesystem::path& path, const std::vector<TokenRecord>& records,
                         const Vocabulary& vocab);
/// Throws VocabMismatch when a record's hash differs from vocab.hash().
std::vector<TokenRecord> read_token_records(const std::filesystem::path& path, const Vocabulary& vocab,
                                            std::size_t max_len);

}  // namespace emomusic::tok
