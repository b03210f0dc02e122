#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "emomusic/midi_io.hpp"
#include "emomusic/model/image.hpp"
#include "emomusic/pairing.hpp"

namespace emomusic::desk {

/// Short single-part phrase whose mode/register follow valence and whose
/// tempo, note length, and loudness follow arousal. Deterministic in `seed`.
midi::MidiPiece synth_piece(const pairing::VaPoint& va, std::uint64_t seed, std::size_t notes = 16);

/// 512-d descriptor: smooth VA-dependent pattern plus small seeded noise.
model::ImageFeature synth_feature(const pairing::VaPoint& va, std::uint64_t seed);

/// size×size RGB gradient whose hue follows valence and brightness arousal.
model::Image synth_image(const pairing::VaPoint& va, std::size_t size = 32);

/// Evenly spread VA points over [2,8]², deterministic in seed.
std::vector<pairing::VaPoint> spread_points(std::size_t count, std::uint64_t seed);

struct DeskLayout {
  std::filesystem::path midi_catalog;   // id,path,valence,arousal
  std::filesystem::path image_catalog;  // precomputed features
  std::filesystem::path ppm_catalog;    // same images as PPM (when written)
  std::size_t pairs = 0;
};

/// Writes `count` MIDI pieces, matching image features (and PPM images when
/// `with_images`), and their catalogs under `dir`. Each image sits closer in
/// VA space to its own piece than to any other.
DeskLayout write_desk_dataset(const std::filesystem::path& dir, std::size_t count, std::uint64_t seed,
                              bool with_images);

}  // namespace emomusic::desk
