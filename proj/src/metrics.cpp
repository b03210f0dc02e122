#include "emomusic/metrics.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <thread>

#include "emomusic/error.hpp"

namespace emomusic::metrics {

double pitch_entropy(const midi::MidiPiece& piece) {
  if (piece.empty()) throw Error(ErrorCode::EmptyPiece, "pitch entropy of a piece without notes");
  std::array<std::size_t, midi::kPitchCount> counts{};
  for (const auto& n : piece.notes()) ++counts[static_cast<std::size_t>(n.pitch)];
  const double total = static_cast<double>(piece.notes().size());
  double h = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    h -= p * std::log2(p);
  }
  // -0.0 for a single pitch reads badly in CSV output
  return h == 0.0 ? 0.0 : h;
}

double polyphony_rate(const midi::PianoRoll& roll, PolyphonyDenominator denominator) {
  if (roll.steps() == 0) throw Error(ErrorCode::EmptyRoll, "polyphony rate of an empty roll");
  std::size_t multi = 0, sounding = 0;
  for (std::size_t t = 0; t < roll.steps(); ++t) {
    const int c = roll.column_count(t);
    if (c >= 1) ++sounding;
    if (c >= 2) ++multi;
  }
  const std::size_t denom = denominator == PolyphonyDenominator::SoundingSteps ? sounding : roll.steps();
  if (denom == 0) return 0.0;
  return static_cast<double>(multi) / static_cast<double>(denom);
}

double groove_consistency(const midi::PianoRoll& roll, int steps_per_measure, GrooveDistance distance) {
  if (steps_per_measure < 1) throw Error(ErrorCode::OutOfRange, "steps_per_measure must be >= 1");
  const std::size_t spm = static_cast<std::size_t>(steps_per_measure);
  const std::size_t measures = roll.steps() / spm;
  if (measures < 2)
    throw Error(ErrorCode::TooShort, "groove consistency needs two full measures, got " +
                                         std::to_string(measures));
  std::vector<std::uint8_t> prev(spm), cur(spm);
  for (std::size_t k = 0; k < spm; ++k) prev[k] = roll.any_onset(k);
  double total = 0.0;
  for (std::size_t m = 1; m < measures; ++m) {
    std::size_t hamming = 0;
    for (std::size_t k = 0; k < spm; ++k) {
      cur[k] = roll.any_onset(m * spm + k);
      hamming += cur[k] != prev[k] ? 1 : 0;
    }
    total += distance == GrooveDistance::Normalized ? static_cast<double>(hamming) / static_cast<double>(spm)
                                                    : static_cast<double>(hamming);
    std::swap(prev, cur);
  }
  return 1.0 - total / static_cast<double>(measures - 1);
}

double music_quality_loss(const MetricTriple& m, const MetricTriple& reference) {
  return (std::abs(m.polyphony_rate - reference.polyphony_rate) +
          std::abs(m.pitch_entropy - reference.pitch_entropy) +
          std::abs(m.groove_consistency - reference.groove_consistency)) /
         3.0;
}

MetricTriple PieceEvaluation::triple() const {
  return {polyphony_rate.value_or(std::numeric_limits<double>::quiet_NaN()),
          pitch_entropy.value_or(std::numeric_limits<double>::quiet_NaN()),
          groove_consistency.value_or(std::numeric_limits<double>::quiet_NaN())};
}

namespace {

void validate(const MetricConfig& config) {
  if (config.steps_per_beat < 1) throw Error(ErrorCode::ConfigError, "steps_per_beat must be >= 1");
  if (config.steps_per_measure < 1) throw Error(ErrorCode::ConfigError, "steps_per_measure must be >= 1");
}

}  // namespace

PieceEvaluation evaluate(const midi::MidiPiece& piece, const MetricConfig& config) {
  validate(config);
  PieceEvaluation ev;
  if (piece.empty()) {
    ev.error = "EmptyPiece";
    return ev;
  }
  const auto roll = midi::to_piano_roll(piece, config.steps_per_beat);
  ev.pitch_entropy = pitch_entropy(piece);
  ev.polyphony_rate = polyphony_rate(roll, config.polyphony_denominator);
  try {
    ev.groove_consistency = groove_consistency(roll, config.steps_per_measure, config.groove_distance);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::TooShort) throw;
    ev.error = "TooShort";
    return ev;
  }
  ev.music_quality_loss = music_quality_loss(ev.triple(), config.reference);
  return ev;
}

std::vector<PieceEvaluation> evaluate_all(std::span<const midi::MidiPiece> pieces, const MetricConfig& config,
                                          unsigned threads) {
  validate(config);
  std::vector<PieceEvaluation> out(pieces.size());
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(pieces.size())));
  if (threads <= 1) {
    for (std::size_t i = 0; i < pieces.size(); ++i) out[i] = evaluate(pieces[i], config);
    return out;
  }
  // Strided sharding; every slot is written by exactly one worker.
  {
    std::vector<std::jthread> workers;
    for (unsigned w = 0; w < threads; ++w) {
      workers.emplace_back([&, w] {
        for (std::size_t i = w; i < pieces.size(); i += threads) out[i] = evaluate(pieces[i], config);
      });
    }
  }
  return out;
}

CorpusSummary summarize(std::span<const PieceEvaluation> evaluations) {
  CorpusSummary s;
  s.pieces = evaluations.size();
  double sums[4] = {0, 0, 0, 0};
  std::size_t counts[4] = {0, 0, 0, 0};
  auto add = [&](int k, const std::optional<double>& v) {
    if (v) {
      sums[k] += *v;
      ++counts[k];
    }
  };
  for (const auto& e : evaluations) {
    add(0, e.polyphony_rate);
    add(1, e.pitch_entropy);
    add(2, e.groove_consistency);
    add(3, e.music_quality_loss);
    if (e.complete()) ++s.complete;
  }
  auto mean = [&](int k) {
    return counts[k] ? sums[k] / static_cast<double>(counts[k]) : std::numeric_limits<double>::quiet_NaN();
  };
  s.polyphony_rate = mean(0);
  s.pitch_entropy = mean(1);
  s.groove_consistency = mean(2);
  s.music_quality_loss = mean(3);
  return s;
}

}  // namespace emomusic::metrics
