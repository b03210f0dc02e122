#include "emomusic/cli/app.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>

#include "emomusic/cli/desk_data.hpp"
#include "emomusic/cli/gradcheck_suite.hpp"
#include "emomusic/cli/pipeline.hpp"
#include "emomusic/error.hpp"
#include "emomusic/nn/checkpoint.hpp"
#include "emomusic/util/io.hpp"

namespace emomusic::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string config, out, out_dir, images, midis, dictionary, split, image, checkpoint, midi_dir, grid;
  std::string image_range = "1,9", midi_range = "1,9", strategy, tokens;
  std::uint64_t seed = 0;
  double temperature = 0, tolerance = 1e-4;
  std::size_t max_len = 0, count = 16;
  bool with_images = false;
};

RunConfig load_or_default(const std::string& path) { return path.empty() ? RunConfig{} : RunConfig::load(path); }

fs::path parent_dir(const fs::path& file) {
  const auto p = fs::absolute(file).parent_path();
  fs::create_directories(p);
  return p;
}

pairing::SourceRange parse_range(const std::string& text, const char* flag) {
  double lo = 0, hi = 0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%lf,%lf%c", &lo, &hi, &tail) != 2)
    throw Error(ErrorCode::ConfigError, std::string(flag) + " expects 'min,max', got '" + text + "'");
  return {lo, hi};
}

pairing::SplitCounts parse_split(const std::string& text) {
  unsigned long long a = 0, b = 0, c = 0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%llu,%llu,%llu%c", &a, &b, &c, &tail) != 3)
    throw Error(ErrorCode::ConfigError, "--split expects 'train,test,val', got '" + text + "'");
  return {a, b, c};
}

std::string fixed(double v, int digits = 4) {
  if (std::isinf(v)) return "inf";
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

int cmd_pair(const Options& o, std::ostream& out) {
  pairing::EmotionDictionary dict;
  if (!o.dictionary.empty()) dict = pairing::load_dictionary(o.dictionary);
  const auto* d = o.dictionary.empty() ? nullptr : &dict;
  const auto midis = pairing::load_catalog(o.midis, pairing::ItemKind::Midi, parse_range(o.midi_range, "--midi-range"), d);
  const auto images =
      pairing::load_catalog(o.images, pairing::ItemKind::Image, parse_range(o.image_range, "--image-range"), d);
  auto manifest = pairing::pair_datasets(midis, images);
  manifest.seed = o.seed;
  if (!o.split.empty()) manifest = pairing::split(std::move(manifest), parse_split(o.split), o.seed);
  pairing::save_manifest(o.out, manifest);

  std::vector<double> sims;
  std::size_t exact = 0;
  for (const auto& p : manifest.pairs) {
    if (p.similarity.is_max())
      ++exact;
    else
      sims.push_back(p.similarity.value());
  }
  std::sort(sims.begin(), sims.end());
  out << "pairs: " << manifest.pairs.size() << " (midis " << midis.size() << ", images " << images.size() << ")\n";
  out << "exact VA matches: " << exact << "\n";
  if (!sims.empty()) {
    double sum = 0;
    for (double s : sims) sum += s;
    out << "similarity min " << fixed(sims.front()) << "  median " << fixed(sims[sims.size() / 2]) << "  mean "
        << fixed(sum / static_cast<double>(sims.size())) << "  max " << fixed(sims.back()) << "\n";
  }
  if (manifest.counts)
    out << "split train " << manifest.counts->train << "  test " << manifest.counts->test << "  val "
        << manifest.counts->val << "\n";
  write_echo(parent_dir(o.out), "pair",
             {{"images", o.images}, {"midis", o.midis}, {"dictionary", o.dictionary}, {"image_range", o.image_range},
              {"midi_range", o.midi_range}, {"out", o.out}, {"seed", o.seed}, {"split", o.split}},
             RunConfig{});
  return 0;
}

int cmd_tokenize(const Options& o, std::ostream& out) {
  const auto cfg = load_or_default(o.config);
  const auto midis = pairing::load_catalog(o.midis, pairing::ItemKind::Midi);
  std::vector<tok::TokenRecord> records;
  std::size_t truncated = 0;
  for (const auto& seq : labeled_sequences(midis, cfg.tokenizer)) {
    if (seq.tokens.back() != tok::Vocabulary::kEos) ++truncated;
    records.push_back({seq.id, tok::TokenSequence{seq.tokens, cfg.tokenizer.max_len}});
  }
  tok::write_token_records(o.out, records, cfg.tokenizer.vocabulary());
  out << "tokenized " << records.size() << " pieces (" << truncated << " truncated at max_len "
      << cfg.tokenizer.max_len << ")\n";
  write_echo(parent_dir(o.out), "tokenize", {{"midis", o.midis}, {"out", o.out}, {"config", o.config}}, cfg);
  return 0;
}

int cmd_pretrain_va(const Options& o, std::ostream& out) {
  const auto cfg = load_or_default(o.config);
  const auto midis = pairing::load_catalog(o.midis, pairing::ItemKind::Midi);
  const auto items = labeled_sequences(midis, cfg.tokenizer);
  training::PretrainReport report;
  auto predictor = training::pretrain_va_predictor(cfg.tokenizer.vocabulary(), items, cfg.va_pretrain, &report);
  const json summary{{"train_count", report.train_count},
                     {"holdout_count", report.holdout_count},
                     {"initial_train_mae", report.initial_train_mae},
                     {"final_train_mae", report.final_train_mae},
                     {"holdout_mae", std::isnan(report.holdout_mae) ? json(nullptr) : json(report.holdout_mae)}};
  nn::save_checkpoint(o.out, predictor->to_checkpoint({{"tokenizer", cfg.to_json().at("tokenizer")}, {"report", summary}}));
  out << "trained on " << report.train_count << " pieces, held out " << report.holdout_count << "\n";
  out << "train MAE " << fixed(report.initial_train_mae) << " -> " << fixed(report.final_train_mae) << "\n";
  out << "holdout MAE " << (std::isnan(report.holdout_mae) ? std::string("n/a") : fixed(report.holdout_mae)) << "\n";
  const auto dir = parent_dir(o.out);
  write_echo(dir, "pretrain-va", {{"midis", o.midis}, {"out", o.out}, {"config", o.config}}, cfg);
  return 0;
}

int cmd_train(const Options& o, std::ostream& out) {
  const auto cfg = RunConfig::load(o.config);
  write_echo(o.out_dir, "train", {{"config", o.config}, {"out_dir", o.out_dir}}, cfg);
  const auto result = train_run(cfg, o.out_dir, &out);
  out << "wrote " << result.checkpoint.string() << "\n";
  return 0;
}

int cmd_generate(const Options& o, std::ostream& out) {
  const auto ckpt = nn::load_checkpoint(o.checkpoint);
  auto m = model::EmoModel::from_checkpoint(ckpt);
  RunConfig cfg;
  if (ckpt.config.contains("run")) cfg = RunConfig::from_json(ckpt.config.at("run"));
  if (!o.strategy.empty()) {
    if (o.strategy != "greedy" && o.strategy != "temperature")
      throw Error(ErrorCode::ConfigError, "--strategy must be 'greedy' or 'temperature'");
    cfg.generate.strategy = o.strategy == "greedy" ? model::Strategy::Greedy : model::Strategy::Temperature;
  }
  if (o.temperature != 0) cfg.generate.temperature = o.temperature;
  if (!(cfg.generate.temperature > 0)) throw Error(ErrorCode::ConfigError, "--temperature must be positive");
  cfg.generate.seed = o.seed;
  if (o.max_len != 0) cfg.generate.max_len = o.max_len;
  const auto input = m->load_image_input(o.image);
  const auto piece = generate_piece(*m, cfg.tokenizer.steps_per_beat, input, cfg.generate);
  util::write_bytes(o.out, midi::write_midi(piece));
  out << "wrote " << o.out << " (" << piece.notes().size() << " notes)\n";
  write_echo(parent_dir(o.out), "generate",
             {{"image", o.image}, {"checkpoint", o.checkpoint}, {"out", o.out}, {"strategy", o.strategy},
              {"temperature", o.temperature}, {"seed", o.seed}, {"max_len", o.max_len}},
             cfg);
  return 0;
}

int cmd_metrics(const Options& o, std::ostream& out) {
  const auto cfg = load_or_default(o.config);
  if (!fs::is_directory(o.midi_dir)) throw Error(ErrorCode::MissingArtifacts, o.midi_dir + ": not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(o.midi_dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".mid" || ext == ".midi")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  const auto report = evaluate_files(files, cfg.metrics, cfg.metric_threads);
  util::write_text(o.out, metrics_csv(report));
  fs::path md = o.out;
  md.replace_extension(".md");
  const auto label = fs::path(o.midi_dir).lexically_normal().filename().string();
  util::write_text(md, summary_markdown({{label.empty() ? "corpus" : label, report.summary, "ok"}}, false));
  out << report.summary.complete << "/" << report.summary.pieces << " pieces scored\n"
      << summary_markdown({{label.empty() ? "corpus" : label, report.summary, "ok"}}, false);
  write_echo(parent_dir(o.out), "metrics", {{"midi_dir", o.midi_dir}, {"out", o.out}, {"config", o.config}}, cfg);
  return 0;
}

int cmd_ablate(const Options& o, std::ostream& out) {
  json grid;
  try {
    grid = json::parse(util::read_text(o.grid));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, o.grid + ": not valid JSON: " + e.what());
  }
  fs::create_directories(o.out_dir);
  util::write_text(fs::path(o.out_dir) / "ablate.config.json",
                   json{{"command", "ablate"}, {"arguments", {{"config_grid", o.grid}, {"out_dir", o.out_dir}}},
                        {"grid", grid}}
                           .dump(2) +
                       "\n");
  const auto rows = run_ablation(grid, fs::absolute(o.grid).parent_path(), o.out_dir, &out);
  const auto failed = std::count_if(rows.begin(), rows.end(), [](const SummaryRow& r) { return r.status.starts_with("failed"); });
  out << summary_markdown(rows, true) << rows.size() - static_cast<std::size_t>(failed) << "/" << rows.size()
      << " variants completed\n";
  return 0;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  model::ModelConfig reduced = reduced_model_config();
  RunConfig cfg;
  if (!o.config.empty()) {
    cfg = RunConfig::load(o.config);
    reduced = cfg.model;
    reduced.max_len = std::min<std::size_t>(reduced.max_len, 8);
  }
  const auto report = run_gradcheck_suite(reduced, o.seed, o.tolerance);
  out << report.to_string();
  if (!o.out_dir.empty()) {
    write_echo(o.out_dir, "gradcheck", {{"config", o.config}, {"seed", o.seed}, {"tolerance", o.tolerance}}, cfg);
    util::write_text(fs::path(o.out_dir) / "gradcheck.txt", report.to_string());
  }
  return report.passed() ? 0 : 2;
}

int cmd_make_desk_data(const Options& o, std::ostream& out) {
  const fs::path dir = fs::absolute(o.out_dir);
  const auto layout = desk::write_desk_dataset(dir, o.count, o.seed, o.with_images);
  const auto midis = pairing::load_catalog(layout.midi_catalog, pairing::ItemKind::Midi);
  const auto images = pairing::load_catalog(layout.image_catalog, pairing::ItemKind::Image);
  auto manifest = pairing::pair_datasets(midis, images);
  manifest.seed = o.seed;
  pairing::save_manifest(dir / "manifest.json", manifest);
  util::write_text(dir / "config.json", desk_config_json().dump(2) + "\n");
  util::write_text(dir / "grid.json", desk_grid_json().dump(2) + "\n");
  out << "wrote " << layout.pairs << " pairs to " << dir.string() << "\n";
  write_echo(dir, "make-desk-data", {{"out_dir", o.out_dir}, {"count", o.count}, {"seed", o.seed}, {"images", o.with_images}},
             RunConfig::from_json(desk_config_json(), dir));
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Image-conditioned emotional music generation toolkit", "emomusic"};
  app.require_subcommand(1);
  Options o;

  auto* pair = app.add_subcommand("pair", "Pair images with MIDI pieces by VA similarity");
  pair->add_option("--images", o.images, "image catalog CSV (id,path,valence,arousal)")->required();
  pair->add_option("--midis", o.midis, "MIDI catalog CSV")->required();
  pair->add_option("--dictionary", o.dictionary, "emotion dictionary CSV (label,valence,arousal)");
  pair->add_option("--image-range", o.image_range, "source VA scale of the image catalog as min,max");
  pair->add_option("--midi-range", o.midi_range, "source VA scale of the MIDI catalog as min,max");
  pair->add_option("--out", o.out, "manifest path")->required();
  pair->add_option("--seed", o.seed, "split seed");
  pair->add_option("--split", o.split, "train,test,val counts, e.g. 2884,100,16");

  auto* tokenize = app.add_subcommand("tokenize", "Tokenize a MIDI catalog");
  tokenize->add_option("--midis", o.midis, "MIDI catalog CSV")->required();
  tokenize->add_option("--out", o.out, "token file (JSON lines)")->required();
  tokenize->add_option("--config", o.config, "run config (tokenizer section)");

  auto* pretrain = app.add_subcommand("pretrain-va", "Pretrain the VA predictor on a labelled MIDI catalog");
  pretrain->add_option("--midis", o.midis, "MIDI catalog CSV with VA labels")->required();
  pretrain->add_option("--out", o.out, "predictor checkpoint")->required();
  pretrain->add_option("--config", o.config, "run config (tokenizer, va_pretrain)");

  auto* train = app.add_subcommand("train", "Train the generator");
  train->add_option("--config", o.config, "run config")->required();
  train->add_option("--out-dir", o.out_dir, "output directory")->required();

  auto* generate = app.add_subcommand("generate", "Generate a MIDI piece for an image");
  generate->add_option("--image", o.image, "image or feature file")->required();
  generate->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
  generate->add_option("--out", o.out, "output .mid")->required();
  generate->add_option("--strategy", o.strategy, "greedy or temperature (default: from the checkpoint's config)");
  generate->add_option("--temperature", o.temperature, "sampling temperature");
  generate->add_option("--seed", o.seed, "sampling seed");
  generate->add_option("--max-len", o.max_len, "maximum sequence length");

  auto* metrics_cmd = app.add_subcommand("metrics", "Score a directory of MIDI files");
  metrics_cmd->add_option("--midi-dir", o.midi_dir, "directory of .mid files")->required();
  metrics_cmd->add_option("--out", o.out, "per-piece CSV (a .md summary is written beside it)")->required();
  metrics_cmd->add_option("--config", o.config, "run config (metrics section)");

  auto* ablate = app.add_subcommand("ablate", "Run an ablation grid");
  ablate->add_option("--config-grid", o.grid, "grid file")->required();
  ablate->add_option("--out-dir", o.out_dir, "output directory")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gradcheck->add_option("--config", o.config, "run config whose model section is checked (max_len capped at 8)");
  gradcheck->add_option("--seed", o.seed, "seed for inputs and weights");
  gradcheck->add_option("--tolerance", o.tolerance, "relative error tolerance");
  gradcheck->add_option("--out-dir", o.out_dir, "write the report and echoed config here");

  auto* desk = app.add_subcommand("make-desk-data", "Write a small synthetic dataset with config and grid files");
  desk->add_option("--out-dir", o.out_dir, "output directory")->required();
  desk->add_option("--count", o.count, "number of image/MIDI pairs");
  desk->add_option("--seed", o.seed, "seed");
  desk->add_flag("--images", o.with_images, "also write PPM images");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::Success&) {
    out << app.help();
    if (!app.get_subcommands().empty()) out << app.get_subcommands().front()->help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error [UsageError]: " << e.what() << "\n";
    return 1;
  }

  try {
    if (pair->parsed()) return cmd_pair(o, out);
    if (tokenize->parsed()) return cmd_tokenize(o, out);
    if (pretrain->parsed()) return cmd_pretrain_va(o, out);
    if (train->parsed()) return cmd_train(o, out);
    if (generate->parsed()) return cmd_generate(o, out);
    if (metrics_cmd->parsed()) return cmd_metrics(o, out);
    if (ablate->parsed()) return cmd_ablate(o, out);
    if (gradcheck->parsed()) return cmd_gradcheck(o, out);
    if (desk->parsed()) return cmd_make_desk_data(o, out);
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.message() << "\n";
    return is_validation_error(e.code()) ? 1 : 2;
  } catch (const std::exception& e) {
    err << "error [RuntimeError]: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace emomusic::cli
