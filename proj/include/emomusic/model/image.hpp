#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "emomusic/nn/layers.hpp"

namespace emomusic::model {

inline constexpr std::size_t kImageFeatureDim = 512;

/// The 1×1×512 image descriptor fed to the merge layer.
struct ImageFeature {
  std::vector<nn::Real> values;

  /// Throws BadFeatureFile unless there are exactly 512 finite values.
  static ImageFeature checked(std::vector<nn::Real> values);
  static ImageFeature zeros() { return {std::vector<nn::Real>(kImageFeatureDim, 0)}; }
  nn::Tensor as_row() const;
};

// Feature file: "EMOFEAT\0", u32 version=1, u32 count, then count
// little-endian float32 values (count must be 512).
std::vector<std::uint8_t> serialize_feature(const ImageFeature& feature);
ImageFeature parse_feature(std::span<const std::uint8_t> bytes);
void write_feature_file(const std::filesystem::path& path, const ImageFeature& feature);
ImageFeature read_feature_file(const std::filesystem::path& path);

/// 8-bit RGB raster, row-major HWC.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;
};

/// Binary PPM (P6) / PGM (P5) natively, PNG when built with libpng.
/// Throws BadImage for anything undecodable.
Image load_image(const std::filesystem::path& path);
Image decode_image(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const Image& image);

/// Bilinear resize to size×size, scaled to [0,1], laid out as a 3×size×size
/// tensor.
nn::Tensor image_to_tensor(const Image& image, std::size_t size);

/// Three conv blocks (3×3 conv + ReLU, the first two followed by 2×2 max
/// pooling) ending in 512 channels, then global average pooling.
class TinyCnn {
 public:
  TinyCnn() = default;
  TinyCnn(const std::string& name, util::Rng& rng);

  /// 3×S×S pixels → 1×512.
  nn::Var forward(const nn::Var& pixels) const;
  void collect(nn::ParameterList& out);

  nn::Parameter w1, b1, w2, b2, w3, b3;
};

}  // namespace emomusic::model
