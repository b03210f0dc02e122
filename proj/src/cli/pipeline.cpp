#include "emomusic/cli/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "emomusic/error.hpp"
#include "emomusic/nn/checkpoint.hpp"
#include "emomusic/util/csv.hpp"
#include "emomusic/util/io.hpp"
#include "emomusic/util/json.hpp"

namespace emomusic::cli {

namespace fs = std::filesystem;
using nlohmann::json;

void write_echo(const fs::path& dir, std::string_view command, const json& arguments, const RunConfig& config) {
  fs::create_directories(dir);
  const json echo{{"command", command}, {"arguments", arguments}, {"config", config.to_json()}};
  util::write_text(dir / (std::string(command) + ".config.json"), echo.dump(2) + "\n");
}

std::vector<tok::TokenId> tokenize_midi_file(const fs::path& path, const tok::TokenizerConfig& cfg) {
  const auto piece = midi::parse_midi(util::read_bytes(path));
  return tok::unpadded(tok::encode(piece, cfg.vocabulary(), cfg.steps_per_beat, cfg.max_len)).ids;
}

std::vector<training::LabeledSequence> labeled_sequences(const pairing::Catalog& midis,
                                                         const tok::TokenizerConfig& cfg) {
  std::vector<training::LabeledSequence> out;
  for (const auto& item : midis) {
    try {
      out.push_back({item.id, tokenize_midi_file(item.payload_path, cfg), item.va});
    } catch (const Error& e) {
      throw Error(e.code(), item.payload_path + ": " + e.message());
    }
  }
  return out;
}

std::vector<training::TrainingExample> training_examples(const RunConfig& config,
                                                         const pairing::PairManifest& manifest) {
  std::map<std::string, std::vector<tok::TokenId>, std::less<>> tokens;
  if (!config.data.tokens.empty())
    for (auto& r : tok::read_token_records(config.data.tokens, config.tokenizer.vocabulary(), config.tokenizer.max_len))
      tokens[r.id] = tok::unpadded(r.tokens).ids;

  const bool has_split = manifest.counts.has_value();
  std::vector<training::TrainingExample> out;
  for (const auto& pair : manifest.pairs) {
    if (has_split && pair.split != pairing::Split::Train) continue;
    training::TrainingExample ex;
    ex.id = pair.midi_id + "+" + pair.image_id;
    if (!config.data.tokens.empty()) {
      const auto it = tokens.find(pair.midi_id);
      if (it == tokens.end())
        throw Error(ErrorCode::MissingArtifacts, "no token record for MIDI '" + pair.midi_id + "' in " +
                                                     config.data.tokens.string());
      ex.tokens = it->second;
    } else {
      try {
        ex.tokens = tokenize_midi_file(pair.midi_path, config.tokenizer);
      } catch (const Error& e) {
        throw Error(e.code(), pair.midi_path + ": " + e.message());
      }
    }
    try {
      ex.image = model::load_image_input(config.model, pair.image_path);
    } catch (const Error& e) {
      throw Error(e.code(), pair.image_path + ": " + e.message());
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::unique_ptr<model::VaPredictor> load_predictor(const fs::path& path) {
  return model::VaPredictor::from_checkpoint(nn::load_checkpoint(path));
}

json model_checkpoint_extra(const RunConfig& config) {
  return {{"tokenizer", config.to_json().at("tokenizer")}, {"run", config.to_json()}};
}

TrainArtifacts train_run(const RunConfig& config, const fs::path& out_dir, std::ostream* log) {
  if (config.data.manifest.empty()) throw Error(ErrorCode::MissingArtifacts, "config data.manifest is not set");
  const auto manifest = pairing::load_manifest(config.data.manifest);
  const auto examples = training_examples(config, manifest);
  std::unique_ptr<model::VaPredictor> predictor;
  if (config.train.va_loss_mode != training::VaLossMode::Off) {
    if (config.data.predictor.empty())
      throw Error(ErrorCode::PredictorMissing, "train.va_loss_mode is '" +
                                                   std::string(training::to_string(config.train.va_loss_mode)) +
                                                   "' but data.predictor is not set");
    predictor = load_predictor(config.data.predictor);
  }
  fs::create_directories(out_dir);
  const json extra = model_checkpoint_extra(config);
  auto on_epoch = [&](const training::EpochLosses& e, model::EmoModel& m) {
    if (log) {
      char line[160];
      std::snprintf(line, sizeof line, "epoch %zu  l_cc %.6f  l_va %.6f  l_total %.6f\n", e.epoch, e.l_cc, e.l_va,
                    e.l_total);
      *log << line << std::flush;
    }
    if (config.train.checkpoint_every_epoch) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%02zu.ckpt", e.epoch);
      nn::save_checkpoint(out_dir / name, m.to_checkpoint(extra));
    }
  };
  TrainArtifacts out{training::fit(config.model, examples, config.train, predictor.get(), on_epoch), out_dir / "model.ckpt"};
  nn::save_checkpoint(out.checkpoint, out.fit.model->to_checkpoint(extra));
  util::write_text(out_dir / "loss.csv", training::loss_csv(out.fit.curve));
  return out;
}

midi::MidiPiece generate_piece(const model::EmoModel& m, int steps_per_beat, const nn::Tensor& image_input,
                               const GenerateConfig& gen) {
  model::GenerateOptions opts;
  opts.max_len = gen.max_len == 0 ? m.config().max_len : gen.max_len;
  opts.strategy = gen.strategy;
  opts.temperature = gen.temperature;
  opts.seed = gen.seed;
  return tok::decode(model::generate(m, image_input, opts), m.vocab(), steps_per_beat);
}

MetricsReport evaluate_files(const std::vector<fs::path>& files, const metrics::MetricConfig& cfg, unsigned threads) {
  MetricsReport report;
  std::vector<midi::MidiPiece> pieces;
  std::vector<std::string> parse_errors;
  for (const auto& f : files) {
    report.labels.push_back(f.string());
    try {
      pieces.push_back(midi::parse_midi(util::read_bytes(f)));
      parse_errors.emplace_back();
    } catch (const Error& e) {
      pieces.emplace_back();
      parse_errors.push_back(e.what());
    }
  }
  report.evaluations = metrics::evaluate_all(pieces, cfg, threads);
  for (std::size_t i = 0; i < files.size(); ++i)
    if (!parse_errors[i].empty()) {
      report.evaluations[i] = metrics::PieceEvaluation{};
      report.evaluations[i].error = parse_errors[i];
    }
  report.summary = metrics::summarize(report.evaluations);
  return report;
}

namespace {

std::string cell(const std::optional<double>& v) { return v ? util::format_real(*v) : ""; }

std::string md_number(double v) {
  if (std::isnan(v)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

std::string metrics_csv(const MetricsReport& report) {
  std::string out = "path,polyphony_rate,pitch_entropy,groove_consistency,music_quality_loss,error\n";
  for (std::size_t i = 0; i < report.labels.size(); ++i) {
    const auto& e = report.evaluations[i];
    out += util::csv_escape(report.labels[i]) + "," + cell(e.polyphony_rate) + "," + cell(e.pitch_entropy) + "," +
           cell(e.groove_consistency) + "," + cell(e.music_quality_loss) + "," + util::csv_escape(e.error) + "\n";
  }
  const auto& s = report.summary;
  auto mean = [](double v) { return std::isnan(v) ? std::string() : util::format_real(v); };
  out += "mean," + mean(s.polyphony_rate) + "," + mean(s.pitch_entropy) + "," + mean(s.groove_consistency) + "," +
         mean(s.music_quality_loss) + ",\n";
  return out;
}

std::string summary_markdown(const std::vector<SummaryRow>& rows, bool with_status) {
  std::string out = "| model | Music_Quality_Loss | Polyphony rate | Pitch Entropy | Groove Consistency |";
  out += with_status ? " status |\n|---|---|---|---|---|---|\n" : "\n|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    const auto& s = r.summary;
    out += "| " + r.model + " | " + md_number(s.music_quality_loss) + " | " + md_number(s.polyphony_rate) + " | " +
           md_number(s.pitch_entropy) + " | " + md_number(s.groove_consistency) + " |";
    out += with_status ? " " + r.status + " |\n" : "\n";
  }
  return out;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out = "model,music_quality_loss,polyphony_rate,pitch_entropy,groove_consistency,status\n";
  auto num = [](double v) { return std::isnan(v) ? std::string() : util::format_real(v); };
  for (const auto& r : rows) {
    const auto& s = r.summary;
    out += util::csv_escape(r.model) + "," + num(s.music_quality_loss) + "," + num(s.polyphony_rate) + "," +
           num(s.pitch_entropy) + "," + num(s.groove_consistency) + "," + util::csv_escape(r.status) + "\n";
  }
  return out;
}

std::vector<AblationVariant> ablation_variants(const json& grid_file) {
  util::reject_unknown_keys(grid_file, {"base", "overrides", "grid", "variants", "evaluate"}, "config-grid");
  if (grid_file.contains("grid") == grid_file.contains("variants"))
    throw Error(ErrorCode::ConfigError, "config-grid needs exactly one of 'grid' or 'variants'");
  std::vector<AblationVariant> out;
  if (grid_file.contains("variants")) {
    const auto& vs = grid_file.at("variants");
    if (!vs.is_array() || vs.empty()) throw Error(ErrorCode::ConfigError, "config-grid.variants must be a non-empty array");
    for (const auto& v : vs) {
      util::reject_unknown_keys(v, {"name", "overrides"}, "config-grid.variants[]");
      AblationVariant a;
      util::read_key(v, "name", a.name, "config-grid.variants[]");
      a.overrides = v.value("overrides", json::object());
      if (a.name.empty()) throw Error(ErrorCode::ConfigError, "config-grid variant without a name");
      out.push_back(std::move(a));
    }
  } else {
    const auto& g = grid_file.at("grid");
    util::reject_unknown_keys(g, {"encoder_blocks", "decoder_blocks", "va_loss", "va_loss_on_mode"}, "config-grid.grid");
    std::vector<int> enc{3}, dec{3};
    std::vector<bool> va{true};
    std::string on_mode = "hard";
    util::read_key(g, "encoder_blocks", enc, "config-grid.grid");
    util::read_key(g, "decoder_blocks", dec, "config-grid.grid");
    util::read_key(g, "va_loss", va, "config-grid.grid");
    util::read_key(g, "va_loss_on_mode", on_mode, "config-grid.grid");
    if (training::va_loss_mode_from_string(on_mode) == training::VaLossMode::Off)
      throw Error(ErrorCode::ConfigError, "config-grid.grid.va_loss_on_mode must be 'hard' or 'soft'");
    for (int e : enc)
      for (int d : dec)
        for (bool on : va) {
          json o{{"model", {{"encoder_blocks", e}, {"decoder_blocks", d}}}};
          o["train"]["va_loss_mode"] = on ? on_mode : "off";
          out.push_back({"enc" + std::to_string(e) + "_dec" + std::to_string(d) + (on ? "_va" : "_nova"), o});
        }
  }
  std::map<std::string, int> seen;
  for (const auto& v : out)
    if (seen[v.name]++) throw Error(ErrorCode::ConfigError, "config-grid variant name '" + v.name + "' repeats");
  return out;
}

namespace {

std::size_t evaluate_pieces(const json& grid_file) {
  std::size_t pieces = 4;
  if (grid_file.contains("evaluate")) {
    util::reject_unknown_keys(grid_file.at("evaluate"), {"pieces"}, "config-grid.evaluate");
    util::read_key(grid_file.at("evaluate"), "pieces", pieces, "config-grid.evaluate");
  }
  if (pieces == 0) throw Error(ErrorCode::ConfigError, "config-grid.evaluate.pieces must be positive");
  return pieces;
}

std::pair<json, fs::path> ablation_base(const json& grid_file, const fs::path& grid_dir) {
  json base = RunConfig{}.to_json();
  fs::path dir = grid_dir;
  if (grid_file.contains("base")) {
    const auto& b = grid_file.at("base");
    if (b.is_string()) {
      const fs::path p = fs::path(b.get<std::string>()).is_relative() ? grid_dir / b.get<std::string>()
                                                                       : fs::path(b.get<std::string>());
      try {
        base = json::parse(util::read_text(p));
      } catch (const json::exception& e) {
        throw Error(ErrorCode::ConfigError, p.string() + ": not valid JSON: " + e.what());
      }
      dir = p.parent_path();
    } else {
      base = b;
    }
  }
  if (grid_file.contains("overrides")) base = merge_json(base, grid_file.at("overrides"));
  return {base, dir};
}

// Images used for evaluation: the test split when assigned, else every paired
// image, first `limit` in manifest order.
std::vector<std::string> evaluation_images(const pairing::PairManifest& manifest, std::size_t limit) {
  std::vector<std::string> out;
  for (const auto& p : manifest.pairs) {
    if (manifest.counts && p.split != pairing::Split::Test) continue;
    if (std::find(out.begin(), out.end(), p.image_path) == out.end()) out.push_back(p.image_path);
    if (out.size() == limit) break;
  }
  return out;
}

SummaryRow run_variant(const RunConfig& cfg, const fs::path& dir, std::size_t pieces, std::ostream* log) {
  write_echo(dir, "train", json::object(), cfg);
  const auto trained = train_run(cfg, dir, log);
  const auto manifest = pairing::load_manifest(cfg.data.manifest);
  const auto images = evaluation_images(manifest, pieces);
  fs::create_directories(dir / "generated");
  std::vector<fs::path> files;
  for (std::size_t i = 0; i < images.size(); ++i) {
    GenerateConfig gen = cfg.generate;
    gen.seed = cfg.generate.seed + i;
    const auto input = model::load_image_input(cfg.model, images[i]);
    const auto piece = generate_piece(*trained.fit.model, cfg.tokenizer.steps_per_beat, input, gen);
    char name[32];
    std::snprintf(name, sizeof name, "g%02zu.mid", i);
    util::write_bytes(dir / "generated" / name, midi::write_midi(piece));
    files.push_back(dir / "generated" / name);
  }
  const auto report = evaluate_files(files, cfg.metrics, cfg.metric_threads);
  util::write_text(dir / "metrics.csv", metrics_csv(report));
  SummaryRow row{dir.filename().string(), report.summary, "ok"};
  util::write_text(dir / "metrics.md", summary_markdown({row}, false));
  row.status = "ok (" + std::to_string(report.summary.complete) + "/" + std::to_string(report.summary.pieces) +
               " pieces scored)";
  return row;
}

}  // namespace

std::vector<SummaryRow> run_ablation(const json& grid_file, const fs::path& grid_dir, const fs::path& out_dir,
                                     std::ostream* log) {
  const auto variants = ablation_variants(grid_file);
  const auto pieces = evaluate_pieces(grid_file);
  const auto [base, base_dir] = ablation_base(grid_file, grid_dir);
  RunConfig::from_json(base, base_dir);  // the base itself must be valid
  fs::create_directories(out_dir);
  std::vector<SummaryRow> rows;
  for (const auto& v : variants) {
    if (log) *log << "== " << v.name << "\n" << std::flush;
    const double nan = std::nan("");
    SummaryRow row{v.name, {0, 0, nan, nan, nan, nan}, ""};
    try {
      const auto cfg = RunConfig::from_json(merge_json(base, v.overrides), base_dir);
      row = run_variant(cfg, out_dir / v.name, pieces, log);
    } catch (const Error& e) {
      row.status = std::string("failed: ") + e.what();
    } catch (const std::exception& e) {
      row.status = std::string("failed: RuntimeError: ") + e.what();
    }
    if (log) *log << v.name << ": " << row.status << "\n" << std::flush;
    rows.push_back(std::move(row));
  }
  util::write_text(out_dir / "ablation.csv", summary_csv(rows));
  util::write_text(out_dir / "ablation.md", summary_markdown(rows, true));
  return rows;
}

RunConfig desk_config() {
  RunConfig c;
  c.tokenizer.max_len = 128;
  c.model.max_len = 128;
  c.model.encoder_blocks = 3;
  c.model.decoder_blocks = 3;
  c.model.model_dim = 32;
  c.model.head_count = 2;
  c.model.ff_dim = 64;
  c.model.image_extractor = model::ImageExtractor::Precomputed;
  c.train.lr = 1e-3;
  c.train.epochs = 15;
  c.generate.strategy = model::Strategy::Temperature;
  c.generate.temperature = 1.0;
  c.data.manifest = "manifest.json";
  c.data.predictor = "predictor.ckpt";
  return c;
}

json desk_config_json() { return desk_config().to_json(); }

json desk_grid_json() {
  return {{"base", "config.json"},
          {"overrides", {{"train", {{"epochs", 2}}}}},
          {"grid", {{"encoder_blocks", {2, 3, 4}}, {"decoder_blocks", {0, 2, 3}}, {"va_loss", {true, false}}}},
          {"evaluate", {{"pieces", 4}}}};
}

}  // namespace emomusic::cli
