#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emomusic/cli/config.hpp"
#include "emomusic/metrics.hpp"
#include "emomusic/model/va_predictor.hpp"
#include "emomusic/pairing.hpp"
#include "emomusic/training.hpp"

namespace emomusic::cli {

/// Writes `<command>.config.json` into `dir`: the command, its arguments and
/// the effective RunConfig.
void write_echo(const std::filesystem::path& dir, std::string_view command, const nlohmann::json& arguments,
                const RunConfig& config);

std::vector<tok::TokenId> tokenize_midi_file(const std::filesystem::path& path, const tok::TokenizerConfig& cfg);

/// Catalog items tokenized and labelled with their VA point.
std::vector<training::LabeledSequence> labeled_sequences(const pairing::Catalog& midis, const tok::TokenizerConfig& cfg);

/// Training pairs of the manifest (the train split when one is assigned).
/// Tokens come from config.data.tokens when set, else from the MIDI files.
std::vector<training::TrainingExample> training_examples(const RunConfig& config,
                                                         const pairing::PairManifest& manifest);

std::unique_ptr<model::VaPredictor> load_predictor(const std::filesystem::path& path);

struct TrainArtifacts {
  training::FitResult fit;
  std::filesystem::path checkpoint;
};

/// Full train step of the CLI: loads the manifest and predictor named in the
/// config, fits, and writes model.ckpt, loss.csv (plus epoch_NN.ckpt when
/// enabled) into out_dir.
TrainArtifacts train_run(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream* log);

/// Extra checkpoint config stored alongside the model weights.
nlohmann::json model_checkpoint_extra(const RunConfig& config);

midi::MidiPiece generate_piece(const model::EmoModel& model, int steps_per_beat, const nn::Tensor& image_input,
                               const GenerateConfig& gen);

struct MetricsReport {
  std::vector<std::string> labels;
  std::vector<metrics::PieceEvaluation> evaluations;
  metrics::CorpusSummary summary;
};

/// Files that fail to parse are reported as rows carrying the error.
MetricsReport evaluate_files(const std::vector<std::filesystem::path>& files, const metrics::MetricConfig& cfg,
                             unsigned threads);

/// path,polyphony_rate,pitch_entropy,groove_consistency,music_quality_loss,error
/// with a final `mean` row.
std::string metrics_csv(const MetricsReport& report);

struct SummaryRow {
  std::string model;
  metrics::CorpusSummary summary;
  std::string status = "ok";
};

/// Markdown table: model | Music_Quality_Loss | Polyphony rate | Pitch Entropy | Groove Consistency.
std::string summary_markdown(const std::vector<SummaryRow>& rows, bool with_status);
std::string summary_csv(const std::vector<SummaryRow>& rows);

struct AblationVariant {
  std::string name;
  nlohmann::json overrides;
};

/// Grid file keys: base (RunConfig object or path), overrides (applied to the
/// base), grid {encoder_blocks, decoder_blocks, va_loss, va_loss_on_mode} or
/// variants [{name, overrides}], evaluate {pieces}. Grid variants set
/// train.va_loss_mode to va_loss_on_mode (default hard) or off.
std::vector<AblationVariant> ablation_variants(const nlohmann::json& grid_file);

/// Trains, generates and scores each variant in order; failures become rows
/// with a `failed: …` status.
std::vector<SummaryRow> run_ablation(const nlohmann::json& grid_file, const std::filesystem::path& grid_dir,
                                     const std::filesystem::path& out_dir, std::ostream* log);

/// Ready-to-run configuration for a desk dataset directory (relative paths).
RunConfig desk_config();
nlohmann::json desk_config_json();
nlohmann::json desk_grid_json();

}  // namespace emomusic::cli
