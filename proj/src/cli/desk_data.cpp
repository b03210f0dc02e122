#include "emomusic/cli/desk_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "emomusic/util/csv.hpp"
#include "emomusic/util/io.hpp"
#include "emomusic/util/random.hpp"

namespace emomusic::desk {

namespace fs = std::filesystem;

midi::MidiPiece synth_piece(const pairing::VaPoint& va, std::uint64_t seed, std::size_t notes) {
  util::Rng rng(seed);
  static constexpr int kMajor[7] = {0, 2, 4, 5, 7, 9, 11};
  static constexpr int kMinor[7] = {0, 2, 3, 5, 7, 8, 10};
  const int* scale = va.valence >= 5.0 ? kMajor : kMinor;
  const int root = 48 + static_cast<int>(std::lround(va.valence * 2.0));
  const int tpb = 480;
  // Higher arousal: shorter notes, faster tempo, louder.
  const int step = va.arousal >= 6.0 ? tpb / 2 : (va.arousal >= 3.5 ? tpb : 2 * tpb);
  const auto tempo = static_cast<std::int64_t>(60'000'000.0 / (60.0 + 12.0 * va.arousal));
  const int velocity = std::clamp(static_cast<int>(30 + 10 * va.arousal), 1, 127);
  std::vector<midi::NoteEvent> out;
  int degree = 0;
  for (std::size_t i = 0; i < notes; ++i) {
    const int octave = degree / 7, d = ((degree % 7) + 7) % 7;
    const int pitch = std::clamp(root + 12 * octave + scale[d], 0, 127);
    const std::int64_t onset = static_cast<std::int64_t>(i) * step;
    out.push_back({pitch, onset, step, velocity});
    if (va.valence >= 5.0 && i % 2 == 0) out.push_back({std::min(pitch + 7, 127), onset, step, velocity});
    degree += static_cast<int>(rng.index(3)) - 1;
    degree = std::clamp(degree, -3, 9);
  }
  return midi::MidiPiece(tpb, tempo, std::move(out));
}

model::ImageFeature synth_feature(const pairing::VaPoint& va, std::uint64_t seed) {
  util::Rng rng(seed);
  std::vector<nn::Real> v(model::kImageFeatureDim);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(v.size());
    const double base = std::sin(2 * std::numbers::pi * (t * va.valence)) + std::cos(2 * std::numbers::pi * (t * va.arousal));
    v[i] = static_cast<nn::Real>(0.5 * base + 0.05 * rng.normal());
  }
  return model::ImageFeature::checked(std::move(v));
}

model::Image synth_image(const pairing::VaPoint& va, std::size_t size) {
  model::Image img{size, size, std::vector<std::uint8_t>(size * size * 3)};
  const double warm = (va.valence - 1.0) / 8.0, bright = (va.arousal - 1.0) / 8.0;
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double g = static_cast<double>(x + y) / static_cast<double>(2 * size);
      const double rgb[3] = {warm, 0.5 * (1 - g) + 0.5 * bright, 1 - warm};
      for (std::size_t c = 0; c < 3; ++c)
        img.rgb[(y * size + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(rgb[c] * (0.4 + 0.6 * bright) + 0.2 * g, 0.0, 1.0)));
    }
  return img;
}

std::vector<pairing::VaPoint> spread_points(std::size_t count, std::uint64_t seed) {
  util::Rng rng(seed);
  const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(count))));
  std::vector<pairing::VaPoint> pts;
  for (std::size_t k = 0; k < count; ++k) {
    const double cell = 6.0 / static_cast<double>(side);
    const double v = 2.0 + cell * (static_cast<double>(k % side) + 0.25 + 0.5 * rng.uniform());
    const double a = 2.0 + cell * (static_cast<double>(k / side) + 0.25 + 0.5 * rng.uniform());
    pts.push_back(pairing::VaPoint::checked(v, a));
  }
  return pts;
}

DeskLayout write_desk_dataset(const fs::path& dir, std::size_t count, std::uint64_t seed, bool with_images) {
  fs::create_directories(dir / "midi");
  fs::create_directories(dir / "features");
  if (with_images) fs::create_directories(dir / "images");
  const auto points = spread_points(count, seed);
  std::string midis = "id,path,valence,arousal\n", images = midis, ppms = midis;
  char id[32];
  for (std::size_t k = 0; k < count; ++k) {
    const auto& va = points[k];
    std::snprintf(id, sizeof id, "%02zu", k);
    const std::string mid = std::string("m") + id, img = std::string("i") + id;
    util::write_bytes(dir / "midi" / (mid + ".mid"), midi::write_midi(synth_piece(va, seed * 1000 + k)));
    model::write_feature_file(dir / "features" / (img + ".feat"), synth_feature(va, seed * 1000 + k));
    // Images sit a tenth of a unit away, well inside each piece's cell.
    const std::string iv = util::format_real(va.valence + 0.1), ia = util::format_real(va.arousal - 0.1);
    midis += mid + ",midi/" + mid + ".mid," + util::format_real(va.valence) + "," + util::format_real(va.arousal) + "\n";
    images += img + ",features/" + img + ".feat," + iv + "," + ia + "\n";
    if (with_images) {
      util::write_bytes(dir / "images" / (img + ".ppm"), model::encode_ppm(synth_image(va)));
      ppms += img + ",images/" + img + ".ppm," + iv + "," + ia + "\n";
    }
  }
  DeskLayout layout{dir / "midis.csv", dir / "images.csv", {}, count};
  util::write_text(layout.midi_catalog, midis);
  util::write_text(layout.image_catalog, images);
  if (with_images) {
    layout.ppm_catalog = dir / "images_ppm.csv";
    util::write_text(layout.ppm_catalog, ppms);
  }
  return layout;
}

}  // namespace emomusic::desk
