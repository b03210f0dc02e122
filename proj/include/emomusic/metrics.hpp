#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emomusic/midi_io.hpp"

namespace emomusic::metrics {

/// Field order follows the evaluation table: polyphony, entropy, groove.
struct MetricTriple {
  double polyphony_rate = 0.0;
  double pitch_entropy = 0.0;
  double groove_consistency = 0.0;
};

/// Ground-truth reference triple used for Music_Quality_Loss.
inline constexpr MetricTriple kReferenceTriple{0.5303, 3.9863, 0.9922};

enum class PolyphonyDenominator { SoundingSteps, TotalSteps };
enum class GrooveDistance { Normalized, Raw };

struct MetricConfig {
  int steps_per_beat = midi::kDefaultStepsPerBeat;
  int steps_per_measure = 16;
  PolyphonyDenominator polyphony_denominator = PolyphonyDenominator::SoundingSteps;
  GrooveDistance groove_distance = GrooveDistance::Normalized;
  MetricTriple reference = kReferenceTriple;
};

/// Shannon entropy (bits) of the note-count pitch distribution.
/// Throws EmptyPiece when there are no notes.
double pitch_entropy(const midi::MidiPiece& piece);

/// Fraction of steps with two or more sounding pitches. The denominator is
/// the number of sounding steps by default, or all steps. Throws EmptyRoll
/// for a zero-length roll.
double polyphony_rate(const midi::PianoRoll& roll,
                      PolyphonyDenominator denominator = PolyphonyDenominator::SoundingSteps);

/// One minus the mean distance between onset vectors of consecutive full
/// measures. Normalized mode divides each Hamming distance by
/// steps_per_measure. Throws TooShort for fewer than two full measures.
double groove_consistency(const midi::PianoRoll& roll, int steps_per_measure,
                          GrooveDistance distance = GrooveDistance::Normalized);

/// Mean absolute deviation over the three metrics.
double music_quality_loss(const MetricTriple& m, const MetricTriple& reference = kReferenceTriple);

/// Per-piece evaluation. Metrics that are undefined for the piece (no notes,
/// shorter than two measures) are left empty and `error` names the reason.
struct PieceEvaluation {
  std::optional<double> polyphony_rate;
  std::optional<double> pitch_entropy;
  std::optional<double> groove_consistency;
  std::optional<double> music_quality_loss;
  std::string error;

  bool complete() const { return music_quality_loss.has_value(); }
  MetricTriple triple() const;
};

PieceEvaluation evaluate(const midi::MidiPiece& piece, const MetricConfig& config = {});

struct CorpusSummary {
  std::size_t pieces = 0;
  std::size_t complete = 0;
  /// Means over the pieces where each value is defined; NaN if none.
  double polyphony_rate = 0.0;
  double pitch_entropy = 0.0;
  double groove_consistency = 0.0;
  /// Mean of per-piece losses (not the loss of the mean triple).
  double music_quality_loss = 0.0;
};

/// Evaluates pieces (in parallel when threads > 1) and reduces in input order.
std::vector<PieceEvaluation> evaluate_all(std::span<const midi::MidiPiece> pieces, const MetricConfig& config,
                                          unsigned threads = 1);
CorpusSummary summarize(std::span<const PieceEvaluation> evaluations);

}  // namespace emomusic::metrics
