#pragma once

// Naive reference implementations used by the unit and acceptance tests.
// They work from the metric and pairing definitions directly (interval
// overlap per step, explicit enumeration) and share no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "emomusic/midi_io.hpp"
#include "emomusic/pairing.hpp"
#include "emomusic/util/random.hpp"

namespace oracle {

inline double entropy_bits(const emomusic::midi::MidiPiece& piece) {
  std::map<int, int> counts;
  for (const auto& n : piece.notes()) ++counts[n.pitch];
  const double total = static_cast<double>(piece.notes().size());
  double h = 0;
  for (const auto& [pitch, c] : counts) {
    const double p = c / total;
    h -= p * std::log2(p);
  }
  return h;
}

// Note sounds during step t when [t, t+1) steps overlaps [onset, onset+duration)
// ticks, compared in integer units of ticks·steps_per_beat.
inline bool sounds_at(const emomusic::midi::NoteEvent& n, int tpb, int spb, std::int64_t t) {
  return t * tpb < (n.onset + n.duration) * spb && (t + 1) * tpb > n.onset * spb;
}

inline bool starts_at(const emomusic::midi::NoteEvent& n, int tpb, int spb, std::int64_t t) {
  return t * tpb <= n.onset * spb && n.onset * spb < (t + 1) * tpb;
}

inline std::int64_t step_count(const emomusic::midi::MidiPiece& piece, int spb) {
  std::int64_t t = 0;
  for (const auto& n : piece.notes())
    while (t * piece.ticks_per_beat() < (n.onset + n.duration) * spb) ++t;
  return t;
}

inline double polyphony(const emomusic::midi::MidiPiece& piece, int spb, bool total_steps_denominator = false) {
  const auto steps = step_count(piece, spb);
  std::int64_t multi = 0, sounding = 0;
  for (std::int64_t t = 0; t < steps; ++t) {
    std::set<int> pitches;
    for (const auto& n : piece.notes())
      if (sounds_at(n, piece.ticks_per_beat(), spb, t)) pitches.insert(n.pitch);
    if (!pitches.empty()) ++sounding;
    if (pitches.size() >= 2) ++multi;
  }
  return static_cast<double>(multi) / static_cast<double>(total_steps_denominator ? steps : sounding);
}

/// nullopt when fewer than two whole measures.
inline std::optional<double> groove(const emomusic::midi::MidiPiece& piece, int spb, int steps_per_measure,
                                    bool normalized = true) {
  const auto measures = step_count(piece, spb) / steps_per_measure;
  if (measures < 2) return std::nullopt;
  std::vector<std::vector<bool>> g(static_cast<std::size_t>(measures), std::vector<bool>(steps_per_measure, false));
  for (std::int64_t m = 0; m < measures; ++m)
    for (int k = 0; k < steps_per_measure; ++k)
      for (const auto& n : piece.notes())
        if (starts_at(n, piece.ticks_per_beat(), spb, m * steps_per_measure + k)) g[m][k] = true;
  double sum = 0;
  for (std::int64_t m = 0; m + 1 < measures; ++m) {
    int d = 0;
    for (int k = 0; k < steps_per_measure; ++k) d += g[m][k] != g[m + 1][k];
    sum += normalized ? static_cast<double>(d) / steps_per_measure : d;
  }
  return 1.0 - sum / static_cast<double>(measures - 1);
}

/// Random piece with up to `max_notes` notes on a coarse tick grid so that
/// chords, repeated pitches and step-boundary cases are common.
inline emomusic::midi::MidiPiece random_piece(emomusic::util::Rng& rng, std::size_t max_notes) {
  static constexpr int kTpb[] = {96, 120, 480, 7};
  const int tpb = kTpb[rng.index(4)];
  std::vector<emomusic::midi::NoteEvent> notes;
  const std::size_t count = 1 + rng.index(max_notes);
  for (std::size_t i = 0; i < count; ++i) {
    emomusic::midi::NoteEvent n;
    n.pitch = 55 + static_cast<int>(rng.index(12));
    n.onset = static_cast<std::int64_t>(rng.index(static_cast<std::size_t>(tpb) * 12));
    n.duration = 1 + static_cast<std::int64_t>(rng.index(static_cast<std::size_t>(tpb) * 3));
    n.velocity = 1 + static_cast<int>(rng.index(127));
    notes.push_back(n);
  }
  return emomusic::midi::MidiPiece(tpb, 500000, std::move(notes));
}

struct OraclePair {
  std::string midi_id;
  std::string image_id;
};

/// For each MIDI (ascending id) the image with the smallest VA distance; ties
/// go to the smallest image id.
inline std::vector<OraclePair> exhaustive_pairs(const emomusic::pairing::Catalog& midis,
                                                const emomusic::pairing::Catalog& images) {
  std::vector<const emomusic::pairing::TaggedItem*> ms, is;
  for (const auto& m : midis) ms.push_back(&m);
  for (const auto& i : images) is.push_back(&i);
  auto by_id = [](auto* a, auto* b) { return a->id < b->id; };
  std::sort(ms.begin(), ms.end(), by_id);
  std::sort(is.begin(), is.end(), by_id);
  std::vector<OraclePair> out;
  for (const auto* m : ms) {
    std::vector<double> score;
    for (const auto* i : is) {
      const double dv = m->va.valence - i->va.valence, da = m->va.arousal - i->va.arousal;
      const double d = std::sqrt(dv * dv + da * da);
      score.push_back(d == 0 ? INFINITY : 1.0 / d);
    }
    std::size_t best = 0;
    for (std::size_t j = 0; j < score.size(); ++j)
      if (score[j] > score[best]) best = j;
    out.push_back({m->id, is[best]->id});
  }
  return out;
}

/// Random catalog; `grid` draws VA on a coarse half-unit grid to force ties.
inline emomusic::pairing::Catalog random_catalog(emomusic::util::Rng& rng, std::size_t n, const std::string& prefix,
                                                 emomusic::pairing::ItemKind kind, bool grid) {
  emomusic::pairing::Catalog c;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = grid ? 1.0 + 0.5 * static_cast<double>(rng.index(17)) : rng.uniform(1.0, 9.0);
    const double a = grid ? 1.0 + 0.5 * static_cast<double>(rng.index(17)) : rng.uniform(1.0, 9.0);
    c.push_back({prefix + std::to_string(n - i), kind, emomusic::pairing::VaPoint::checked(v, a), prefix + ".x"});
  }
  return c;
}

}  // namespace oracle
