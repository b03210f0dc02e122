#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "emomusic/metrics.hpp"
#include "emomusic/model/emomodel.hpp"
#include "emomusic/tokenizer.hpp"
#include "emomusic/training.hpp"

namespace emomusic::cli {

struct GenerateConfig {
  model::Strategy strategy = model::Strategy::Greedy;
  double temperature = 1.0;
  std::size_t max_len = 0;  // 0 = the model's max_len
  std::uint64_t seed = 0;
};

/// Input/output locations; relative paths resolve against the config file's
/// directory.
struct DataPaths {
  std::filesystem::path manifest;
  std::filesystem::path tokens;     // optional; MIDIs are tokenized on the fly otherwise
  std::filesystem::path predictor;  // needed when train.va_loss_mode != off
};

/// Every knob of every module. JSON sections: tokenizer, model, va_pretrain,
/// train, metrics, generate, data. Unknown keys anywhere are rejected. The
/// vocabulary and max_len live in `tokenizer` and are mirrored into `model`.
struct RunConfig {
  tok::TokenizerConfig tokenizer;
  model::ModelConfig model;
  training::PretrainConfig va_pretrain;
  training::TrainConfig train;
  metrics::MetricConfig metrics;
  unsigned metric_threads = 1;
  GenerateConfig generate;
  DataPaths data;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);
};

/// Recursively overlays `patch` onto `base` (objects merge, other values replace).
nlohmann::json merge_json(nlohmann::json base, const nlohmann::json& patch);

}  // namespace emomusic::cli
