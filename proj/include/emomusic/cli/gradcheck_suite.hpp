#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emomusic/model/emomodel.hpp"
#include "emomusic/nn/gradcheck.hpp"

namespace emomusic::cli {

struct SuiteEntry {
  std::string component;
  nn::GradcheckReport report;
};

struct SuiteReport {
  std::vector<SuiteEntry> entries;

  bool passed() const;
  double max_rel_error() const;
  std::string to_string() const;
};

/// Central-difference checks of every differentiable component on small
/// random inputs: linear, embedding, layer norm, batch norm (train), attention,
/// encoder block, decoder block, conv/pool stack, CCE, soft VA loss, and the
/// full model (encoder + merge + decoder + CCE) built from `reduced`.
SuiteReport run_gradcheck_suite(const model::ModelConfig& reduced, std::uint64_t seed, double tolerance = 1e-4);

/// The reduced configuration used by default: d_model 16, 2 heads, one block
/// each, a tiny vocabulary, max_len 8.
model::ModelConfig reduced_model_config();

}  // namespace emomusic::cli
