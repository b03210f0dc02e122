#include "emomusic/model/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#ifdef EMOMUSIC_HAVE_PNG
#include <png.h>
#endif

#include "emomusic/error.hpp"
#include "emomusic/util/io.hpp"

namespace emomusic::model {

using nn::Real;
using nn::Tensor;

namespace {

constexpr char kFeatureMagic[8] = {'E', 'M', 'O', 'F', 'E', 'A', 'T', '\0'};

std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

[[noreturn]] void bad_image(const std::string& why) { throw Error(ErrorCode::BadImage, why); }

// Netpbm header token, skipping whitespace and comments.
std::size_t pnm_number(std::span<const std::uint8_t> b, std::size_t& pos) {
  for (;;) {
    while (pos < b.size() && std::isspace(b[pos])) ++pos;
    if (pos < b.size() && b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  if (pos >= b.size() || !std::isdigit(b[pos])) bad_image("malformed PNM header");
  std::size_t v = 0;
  while (pos < b.size() && std::isdigit(b[pos])) {
    v = v * 10 + (b[pos++] - '0');
    if (v > 1u << 20) bad_image("PNM dimension too large");
  }
  return v;
}

Image decode_pnm(std::span<const std::uint8_t> b) {
  const bool color = b[1] == '6';
  std::size_t pos = 2;
  Image img;
  img.width = pnm_number(b, pos);
  img.height = pnm_number(b, pos);
  const std::size_t maxval = pnm_number(b, pos);
  if (img.width == 0 || img.height == 0) bad_image("PNM image has zero size");
  if (maxval == 0 || maxval > 255) bad_image("only 8-bit PNM images are supported");
  if (pos >= b.size() || !std::isspace(b[pos])) bad_image("malformed PNM header");
  ++pos;
  const std::size_t channels = color ? 3 : 1;
  const std::size_t need = img.width * img.height * channels;
  if (b.size() - pos < need) bad_image("PNM pixel data is truncated");
  img.rgb.resize(img.width * img.height * 3);
  for (std::size_t i = 0; i < img.width * img.height; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t v = b[pos + i * channels + (color ? c : 0)];
      img.rgb[i * 3 + c] = static_cast<std::uint8_t>(v * 255 / maxval);
    }
  return img;
}

#ifdef EMOMUSIC_HAVE_PNG
Image decode_png(std::span<const std::uint8_t> b) {
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, b.data(), b.size()))
    bad_image(std::string("PNG decode failed: ") + png.message);
  png.format = PNG_FORMAT_RGB;
  Image img;
  img.width = png.width;
  img.height = png.height;
  img.rgb.resize(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, img.rgb.data(), 0, nullptr)) {
    png_image_free(&png);
    bad_image(std::string("PNG decode failed: ") + png.message);
  }
  return img;
}
#endif

}  // namespace

ImageFeature ImageFeature::checked(std::vector<Real> values) {
  if (values.size() != kImageFeatureDim)
    throw Error(ErrorCode::BadFeatureFile, "image feature has " + std::to_string(values.size()) + " values, expected 512");
  for (Real v : values)
    if (!std::isfinite(v)) throw Error(ErrorCode::BadFeatureFile, "image feature contains a non-finite value");
  return {std::move(values)};
}

Tensor ImageFeature::as_row() const { return Tensor({1, values.size()}, values); }

std::vector<std::uint8_t> serialize_feature(const ImageFeature& feature) {
  std::vector<std::uint8_t> out(kFeatureMagic, kFeatureMagic + 8);
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(feature.values.size()));
  for (Real v : feature.values) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
  return out;
}

ImageFeature parse_feature(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kFeatureMagic, 8) != 0)
    throw Error(ErrorCode::BadFeatureFile, "missing EMOFEAT header");
  if (read_u32(bytes.data() + 8) != 1) throw Error(ErrorCode::BadFeatureFile, "unsupported feature file version");
  const std::uint32_t count = read_u32(bytes.data() + 12);
  if (count != kImageFeatureDim)
    throw Error(ErrorCode::BadFeatureFile, "feature file declares " + std::to_string(count) + " values, expected 512");
  if (bytes.size() != 16 + 4 * static_cast<std::size_t>(count))
    throw Error(ErrorCode::BadFeatureFile, "feature file holds " + std::to_string((bytes.size() - 16) / 4) +
                                               " values (" + std::to_string(bytes.size()) + " bytes), expected 512");
  std::vector<Real> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t bits = read_u32(bytes.data() + 16 + 4 * i);
    float f;
    std::memcpy(&f, &bits, 4);
    values[i] = static_cast<Real>(f);
  }
  return ImageFeature::checked(std::move(values));
}

void write_feature_file(const std::filesystem::path& path, const ImageFeature& feature) {
  util::write_bytes(path, serialize_feature(feature));
}

ImageFeature read_feature_file(const std::filesystem::path& path) {
  try {
    return parse_feature(util::read_bytes(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.message());
  }
}

Image decode_image(std::span<const std::uint8_t> b) {
  if (b.size() >= 2 && b[0] == 'P' && (b[1] == '5' || b[1] == '6')) return decode_pnm(b);
  static constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (b.size() >= 8 && std::memcmp(b.data(), kPngSig, 8) == 0) {
#ifdef EMOMUSIC_HAVE_PNG
    return decode_png(b);
#else
    bad_image("PNG support was not compiled in");
#endif
  }
  bad_image("unrecognized image format (expected binary PPM/PGM or PNG)");
}

Image load_image(const std::filesystem::path& path) {
  const auto bytes = util::read_bytes(path);
  try {
    return decode_image(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.message());
  }
}

std::vector<std::uint8_t> encode_ppm(const Image& image) {
  const std::string header = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.rgb.begin(), image.rgb.end());
  return out;
}

Tensor image_to_tensor(const Image& image, std::size_t size) {
  if (image.width == 0 || image.height == 0 || image.rgb.size() != image.width * image.height * 3)
    throw Error(ErrorCode::BadImage, "image raster is empty or inconsistent");
  Tensor t({3, size, size});
  // Pixel-center aligned bilinear sampling.
  auto sample = [&](double x, double y, std::size_t c) {
    x = std::clamp(x, 0.0, static_cast<double>(image.width - 1));
    y = std::clamp(y, 0.0, static_cast<double>(image.height - 1));
    const auto x0 = static_cast<std::size_t>(x), y0 = static_cast<std::size_t>(y);
    const std::size_t x1 = std::min(x0 + 1, image.width - 1), y1 = std::min(y0 + 1, image.height - 1);
    const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
    auto px = [&](std::size_t xx, std::size_t yy) { return image.rgb[(yy * image.width + xx) * 3 + c] / 255.0; };
    return (1 - fy) * ((1 - fx) * px(x0, y0) + fx * px(x1, y0)) + fy * ((1 - fx) * px(x0, y1) + fx * px(x1, y1));
  };
  const double sx = static_cast<double>(image.width) / static_cast<double>(size);
  const double sy = static_cast<double>(image.height) / static_cast<double>(size);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < size; ++i)
      for (std::size_t j = 0; j < size; ++j)
        t[(c * size + i) * size + j] =
            static_cast<Real>(sample((static_cast<double>(j) + 0.5) * sx - 0.5, (static_cast<double>(i) + 0.5) * sy - 0.5, c));
  return t;
}

TinyCnn::TinyCnn(const std::string& name, util::Rng& rng)
    : w1(name + ".conv1.weight", nn::uniform_init({16, 3, 3, 3}, 27, rng)),
      b1(name + ".conv1.bias", Tensor({1, 16})),
      w2(name + ".conv2.weight", nn::uniform_init({32, 16, 3, 3}, 144, rng)),
      b2(name + ".conv2.bias", Tensor({1, 32})),
      w3(name + ".conv3.weight", nn::uniform_init({512, 32, 3, 3}, 288, rng)),
      b3(name + ".conv3.bias", Tensor({1, 512})) {}

nn::Var TinyCnn::forward(const nn::Var& pixels) const {
  if (pixels.value().rank() != 3 || pixels.value().dim(0) != 3)
    throw Error(ErrorCode::ShapeMismatch, "tiny-cnn expects 3×S×S pixels, got " + nn::shape_string(pixels.shape()));
  nn::Var x = nn::maxpool2(nn::relu(nn::conv2d(pixels, w1.var(), b1.var(), 1)));
  x = nn::maxpool2(nn::relu(nn::conv2d(x, w2.var(), b2.var(), 1)));
  x = nn::relu(nn::conv2d(x, w3.var(), b3.var(), 1));
  return nn::global_avg_pool(x);
}

void TinyCnn::collect(nn::ParameterList& out) {
  for (nn::Parameter* p : {&w1, &b1, &w2, &b2, &w3, &b3}) out.params.push_back(p);
}

}  // namespace emomusic::model
