#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace emomusic::pairing {

inline constexpr double kVaMin = 1.0;
inline constexpr double kVaMax = 9.0;

/// A (valence, arousal) coordinate in [1, 9]².
struct VaPoint {
  double valence = 5.0;
  double arousal = 5.0;

  /// Throws OutOfRange unless both coordinates are within [1, 9].
  static VaPoint checked(double valence, double arousal);
  friend bool operator==(const VaPoint&, const VaPoint&) = default;
};

/// Affine map of [source_min, source_max] onto [1, 9].
double normalize_va(double value, double source_min, double source_max);

/// Reciprocal Euclidean distance in VA space, stored as the squared distance
/// so that identical points (the singular case) compare above every finite
/// score without dividing by zero.
class Similarity {
 public:
  static Similarity from_squared_distance(double d2) { return Similarity(d2); }

  bool is_max() const noexcept { return squared_distance_ == 0.0; }
  double squared_distance() const noexcept { return squared_distance_; }
  /// 1/distance; +infinity for the maximal sentinel.
  double value() const noexcept;

  /// Higher similarity orders greater.
  friend std::partial_ordering operator<=>(const Similarity& a, const Similarity& b) {
    return b.squared_distance_ <=> a.squared_distance_;
  }
  friend bool operator==(const Similarity&, const Similarity&) = default;

 private:
  explicit Similarity(double d2) : squared_distance_(d2) {}
  double squared_distance_;
};

Similarity similarity(const VaPoint& x, const VaPoint& y);

enum class ItemKind { Image, Midi };

struct TaggedItem {
  std::string id;
  ItemKind kind = ItemKind::Midi;
  VaPoint va;
  std::string payload_path;
};

using Catalog = std::vector<TaggedItem>;

enum class Split { Unassigned, Train, Test, Val };
std::string_view to_string(Split split);

struct Pair {
  std::string midi_id;
  std::string midi_path;
  std::string image_id;
  std::string image_path;
  Similarity similarity = Similarity::from_squared_distance(0.0);
  Split split = Split::Unassigned;
};

struct SplitCounts {
  std::size_t train = 0;
  std::size_t test = 0;
  std::size_t val = 0;
  std::size_t total() const { return train + test + val; }
};

inline constexpr SplitCounts kPaperSplit{2884, 100, 16};

struct PairManifest {
  std::vector<Pair> pairs;  // ascending midi_id
  std::uint64_t seed = 0;
  std::optional<SplitCounts> counts;
  std::string config_hash;
};

/// Per-MIDI argmax of similarity over the images, ties to the lowest image id;
/// images may be reused. Throws EmptyCatalog / DuplicateId.
PairManifest pair_datasets(const Catalog& midis, const Catalog& images);

/// Seeded shuffle followed by contiguous train/test/val assignment. Throws
/// CountMismatch when counts do not sum to the number of pairs.
PairManifest split(PairManifest manifest, SplitCounts counts, std::uint64_t seed);

// --- files -----------------------------------------------------------------

/// label -> VA in the dictionary's own scale.
using EmotionDictionary = std::map<std::string, VaPoint, std::less<>>;

/// CSV with header `label,valence,arousal` (values are not range-checked here;
/// they are normalized with the catalog's source range).
EmotionDictionary load_dictionary(const std::filesystem::path& path);

struct SourceRange {
  double min = kVaMin;
  double max = kVaMax;
};

/// CSV with header `id,path,valence,arousal`, or `id,path,emotion_label` plus a
/// dictionary. Values are normalized from `range` onto [1, 9]; relative paths
/// are resolved against the catalog's directory. Diagnostics name file and line.
Catalog load_catalog(const std::filesystem::path& path, ItemKind kind, SourceRange range = {},
                     const EmotionDictionary* dictionary = nullptr);

std::string manifest_to_json(const PairManifest& manifest);
PairManifest manifest_from_json(const std::string& text);
void save_manifest(const std::filesystem::path& path, const PairManifest& manifest);
PairManifest load_manifest(const std::filesystem::path& path);

}  // namespace emomusic::pairing
