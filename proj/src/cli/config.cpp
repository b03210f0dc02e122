#include "emomusic/cli/config.hpp"

#include "emomusic/error.hpp"
#include "emomusic/util/io.hpp"
#include "emomusic/util/json.hpp"

namespace emomusic::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string_view to_string(metrics::PolyphonyDenominator d) {
  return d == metrics::PolyphonyDenominator::TotalSteps ? "total" : "sounding";
}

std::string_view to_string(metrics::GrooveDistance d) {
  return d == metrics::GrooveDistance::Raw ? "raw" : "normalized";
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return (path.is_relative() && !base.empty() ? base / path : path).lexically_normal();
}

}  // namespace

json merge_json(json base, const json& patch) {
  if (!base.is_object() || !patch.is_object()) return patch;
  for (const auto& [key, value] : patch.items()) {
    if (base.contains(key))
      base[key] = merge_json(base[key], value);
    else
      base[key] = value;
  }
  return base;
}

json RunConfig::to_json() const {
  json model_json = model.to_json();
  for (const char* k : {"time_shift_bins", "velocity_bins", "max_len"}) model_json.erase(k);
  return {
      {"tokenizer",
       {{"time_shift_bins", tokenizer.time_shift_bins},
        {"velocity_bins", tokenizer.velocity_bins},
        {"steps_per_beat", tokenizer.steps_per_beat},
        {"max_len", tokenizer.max_len}}},
      {"model", model_json},
      {"va_pretrain", va_pretrain.to_json()},
      {"train", train.to_json()},
      {"metrics",
       {{"steps_per_beat", metrics.steps_per_beat},
        {"steps_per_measure", metrics.steps_per_measure},
        {"polyphony_denominator", std::string(to_string(metrics.polyphony_denominator))},
        {"groove_distance", std::string(to_string(metrics.groove_distance))},
        {"reference",
         {metrics.reference.polyphony_rate, metrics.reference.pitch_entropy, metrics.reference.groove_consistency}},
        {"threads", metric_threads}}},
      {"generate",
       {{"strategy", generate.strategy == model::Strategy::Greedy ? "greedy" : "temperature"},
        {"temperature", generate.temperature},
        {"max_len", generate.max_len},
        {"seed", generate.seed}}},
      {"data",
       {{"manifest", data.manifest.string()}, {"tokens", data.tokens.string()}, {"predictor", data.predictor.string()}}},
  };
}

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
  util::reject_unknown_keys(j, {"tokenizer", "model", "va_pretrain", "train", "metrics", "generate", "data"}, "config");
  RunConfig c;
  if (j.contains("tokenizer")) {
    const auto& t = j.at("tokenizer");
    util::reject_unknown_keys(t, {"time_shift_bins", "velocity_bins", "steps_per_beat", "max_len"}, "tokenizer");
    util::read_key(t, "time_shift_bins", c.tokenizer.time_shift_bins, "tokenizer");
    util::read_key(t, "velocity_bins", c.tokenizer.velocity_bins, "tokenizer");
    util::read_key(t, "steps_per_beat", c.tokenizer.steps_per_beat, "tokenizer");
    util::read_key(t, "max_len", c.tokenizer.max_len, "tokenizer");
    if (c.tokenizer.steps_per_beat < 1 || c.tokenizer.max_len < 2)
      throw Error(ErrorCode::ConfigError, "tokenizer: steps_per_beat ≥ 1 and max_len ≥ 2 required");
  }
  json model_json = j.value("model", json::object());
  util::reject_unknown_keys(model_json,
                            {"encoder_blocks", "decoder_blocks", "model_dim", "head_count", "ff_dim",
                             "image_extractor", "image_size", "embedding_std"},
                            "model");
  model_json["time_shift_bins"] = c.tokenizer.time_shift_bins;
  model_json["velocity_bins"] = c.tokenizer.velocity_bins;
  model_json["max_len"] = c.tokenizer.max_len;
  c.model = model::ModelConfig::from_json(model_json);
  if (j.contains("va_pretrain")) c.va_pretrain = training::PretrainConfig::from_json(j.at("va_pretrain"));
  if (j.contains("train")) c.train = training::TrainConfig::from_json(j.at("train"));
  if (j.contains("metrics")) {
    const auto& m = j.at("metrics");
    util::reject_unknown_keys(m,
                              {"steps_per_beat", "steps_per_measure", "polyphony_denominator", "groove_distance",
                               "reference", "threads"},
                              "metrics");
    util::read_key(m, "steps_per_beat", c.metrics.steps_per_beat, "metrics");
    util::read_key(m, "steps_per_measure", c.metrics.steps_per_measure, "metrics");
    std::string pd(to_string(c.metrics.polyphony_denominator)), gd(to_string(c.metrics.groove_distance));
    util::read_key(m, "polyphony_denominator", pd, "metrics");
    util::read_key(m, "groove_distance", gd, "metrics");
    if (pd != "sounding" && pd != "total")
      throw Error(ErrorCode::ConfigError, "metrics.polyphony_denominator must be 'sounding' or 'total'");
    if (gd != "normalized" && gd != "raw")
      throw Error(ErrorCode::ConfigError, "metrics.groove_distance must be 'normalized' or 'raw'");
    c.metrics.polyphony_denominator =
        pd == "total" ? metrics::PolyphonyDenominator::TotalSteps : metrics::PolyphonyDenominator::SoundingSteps;
    c.metrics.groove_distance = gd == "raw" ? metrics::GrooveDistance::Raw : metrics::GrooveDistance::Normalized;
    if (m.contains("reference")) {
      std::vector<double> r;
      util::read_key(m, "reference", r, "metrics");
      if (r.size() != 3) throw Error(ErrorCode::ConfigError, "metrics.reference must hold 3 numbers");
      c.metrics.reference = {r[0], r[1], r[2]};
    }
    util::read_key(m, "threads", c.metric_threads, "metrics");
    if (c.metrics.steps_per_beat < 1 || c.metrics.steps_per_measure < 1 || c.metric_threads < 1)
      throw Error(ErrorCode::ConfigError, "metrics: steps and threads must be positive");
  }
  if (j.contains("generate")) {
    const auto& g = j.at("generate");
    util::reject_unknown_keys(g, {"strategy", "temperature", "max_len", "seed"}, "generate");
    std::string s = "greedy";
    util::read_key(g, "strategy", s, "generate");
    if (s != "greedy" && s != "temperature")
      throw Error(ErrorCode::ConfigError, "generate.strategy must be 'greedy' or 'temperature'");
    c.generate.strategy = s == "greedy" ? model::Strategy::Greedy : model::Strategy::Temperature;
    util::read_key(g, "temperature", c.generate.temperature, "generate");
    util::read_key(g, "max_len", c.generate.max_len, "generate");
    util::read_key(g, "seed", c.generate.seed, "generate");
    if (!(c.generate.temperature > 0)) throw Error(ErrorCode::ConfigError, "generate.temperature must be positive");
    if (c.generate.max_len > c.tokenizer.max_len)
      throw Error(ErrorCode::ConfigError, "generate.max_len exceeds tokenizer.max_len");
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    util::reject_unknown_keys(d, {"manifest", "tokens", "predictor"}, "data");
    std::string m, t, p;
    util::read_key(d, "manifest", m, "data");
    util::read_key(d, "tokens", t, "data");
    util::read_key(d, "predictor", p, "data");
    c.data = {resolve(base_dir, m), resolve(base_dir, t), resolve(base_dir, p)};
  }
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  json j;
  try {
    j = json::parse(util::read_text(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": not valid JSON: " + e.what());
  }
  try {
    return from_json(j, path.parent_path());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.message());
  }
}

}  // namespace emomusic::cli
