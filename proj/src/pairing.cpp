#include "emomusic/pairing.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "emomusic/error.hpp"
#include "emomusic/util/csv.hpp"
#include "emomusic/util/io.hpp"
#include "emomusic/util/random.hpp"

namespace emomusic::pairing {

using nlohmann::json;

VaPoint VaPoint::checked(double valence, double arousal) {
  auto ok = [](double v) { return std::isfinite(v) && v >= kVaMin && v <= kVaMax; };
  if (!ok(valence) || !ok(arousal))
    throw Error(ErrorCode::OutOfRange, "VA point (" + util::format_real(valence) + ", " +
                                           util::format_real(arousal) + ") outside [1,9]");
  return {valence, arousal};
}

double normalize_va(double value, double source_min, double source_max) {
  if (!(source_max > source_min)) {
    if (source_max == source_min) throw Error(ErrorCode::DegenerateRange, "source range has zero width");
    throw Error(ErrorCode::DegenerateRange, "source range is inverted");
  }
  if (!(value >= source_min && value <= source_max))
    throw Error(ErrorCode::OutOfRange, "value " + util::format_real(value) + " outside [" +
                                           util::format_real(source_min) + ", " +
                                           util::format_real(source_max) + "]");
  return kVaMin + (kVaMax - kVaMin) * (value - source_min) / (source_max - source_min);
}

double Similarity::value() const noexcept {
  if (is_max()) return std::numeric_limits<double>::infinity();
  return 1.0 / std::sqrt(squared_distance_);
}

Similarity similarity(const VaPoint& x, const VaPoint& y) {
  const double dv = x.valence - y.valence;
  const double da = x.arousal - y.arousal;
  return Similarity::from_squared_distance(dv * dv + da * da);
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Test: return "test";
    case Split::Val: return "val";
    case Split::Unassigned: break;
  }
  return "unassigned";
}

namespace {

std::vector<const TaggedItem*> sorted_unique(const Catalog& catalog, const char* what) {
  if (catalog.empty()) throw Error(ErrorCode::EmptyCatalog, std::string(what) + " catalog is empty");
  std::vector<const TaggedItem*> items;
  items.reserve(catalog.size());
  for (const auto& item : catalog) items.push_back(&item);
  std::sort(items.begin(), items.end(), [](const TaggedItem* a, const TaggedItem* b) { return a->id < b->id; });
  for (std::size_t i = 1; i < items.size(); ++i)
    if (items[i]->id == items[i - 1]->id)
      throw Error(ErrorCode::DuplicateId, std::string(what) + " catalog repeats id '" + items[i]->id + "'");
  return items;
}

double parse_number(const std::string& field, const std::string& where) {
  double v = 0.0;
  auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size() || !std::isfinite(v))
    throw Error(ErrorCode::ConfigError, where + ": not a number: '" + field + "'");
  return v;
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  if (s == "val") return Split::Val;
  if (s == "unassigned") return Split::Unassigned;
  throw Error(ErrorCode::ConfigError, "unknown split tag '" + s + "'");
}

}  // namespace

PairManifest pair_datasets(const Catalog& midis, const Catalog& images) {
  const auto ms = sorted_unique(midis, "MIDI");
  const auto is = sorted_unique(images, "image");
  PairManifest manifest;
  manifest.pairs.reserve(ms.size());
  for (const TaggedItem* m : ms) {
    const TaggedItem* best = is.front();
    Similarity best_sim = similarity(best->va, m->va);
    for (std::size_t j = 1; j < is.size(); ++j) {
      const Similarity s = similarity(is[j]->va, m->va);
      if (s > best_sim) {
        best = is[j];
        best_sim = s;
      }
    }
    manifest.pairs.push_back({m->id, m->payload_path, best->id, best->payload_path, best_sim, Split::Unassigned});
  }
  return manifest;
}

PairManifest split(PairManifest manifest, SplitCounts counts, std::uint64_t seed) {
  if (counts.total() != manifest.pairs.size())
    throw Error(ErrorCode::CountMismatch, "split counts " + std::to_string(counts.train) + "+" +
                                              std::to_string(counts.test) + "+" + std::to_string(counts.val) +
                                              " do not sum to " + std::to_string(manifest.pairs.size()) +
                                              " pairs");
  std::vector<std::size_t> order(manifest.pairs.size());
  std::iota(order.begin(), order.end(), 0);
  util::Rng rng(seed);
  rng.shuffle(order);
  for (std::size_t k = 0; k < order.size(); ++k) {
    Split s = k < counts.train ? Split::Train : (k < counts.train + counts.test ? Split::Test : Split::Val);
    manifest.pairs[order[k]].split = s;
  }
  manifest.seed = seed;
  manifest.counts = counts;
  return manifest;
}

EmotionDictionary load_dictionary(const std::filesystem::path& path) {
  const auto table = util::read_csv(path);
  const int lc = table.column("label"), vc = table.column("valence"), ac = table.column("arousal");
  if (lc < 0 || vc < 0 || ac < 0)
    throw Error(ErrorCode::ConfigError, path.string() + ": header must be label,valence,arousal");
  EmotionDictionary dict;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = path.string() + ":" + std::to_string(table.lines[r]);
    if (row.size() != table.header.size()) throw Error(ErrorCode::ConfigError, where + ": wrong field count");
    VaPoint p{parse_number(row[static_cast<std::size_t>(vc)], where),
              parse_number(row[static_cast<std::size_t>(ac)], where)};
    if (!dict.emplace(row[static_cast<std::size_t>(lc)], p).second)
      throw Error(ErrorCode::DuplicateId, where + ": duplicate label '" + row[static_cast<std::size_t>(lc)] + "'");
  }
  return dict;
}

Catalog load_catalog(const std::filesystem::path& path, ItemKind kind, SourceRange range,
                     const EmotionDictionary* dictionary) {
  const auto table = util::read_csv(path);
  const int ic = table.column("id"), pc = table.column("path");
  const int vc = table.column("valence"), ac = table.column("arousal"), ec = table.column("emotion_label");
  if (ic < 0 || pc < 0 || !((vc >= 0 && ac >= 0) || ec >= 0))
    throw Error(ErrorCode::ConfigError,
                path.string() + ": header must be id,path,valence,arousal or id,path,emotion_label");
  const bool by_label = !(vc >= 0 && ac >= 0);
  if (by_label && dictionary == nullptr)
    throw Error(ErrorCode::ConfigError, path.string() + ": emotion_label catalog needs a dictionary file");

  const auto base = path.parent_path();
  Catalog catalog;
  std::set<std::string, std::less<>> seen;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = path.string() + ":" + std::to_string(table.lines[r]);
    if (row.size() != table.header.size()) throw Error(ErrorCode::ConfigError, where + ": wrong field count");
    TaggedItem item;
    item.id = row[static_cast<std::size_t>(ic)];
    item.kind = kind;
    if (item.id.empty()) throw Error(ErrorCode::ConfigError, where + ": empty id");
    if (!seen.insert(item.id).second) throw Error(ErrorCode::DuplicateId, where + ": duplicate id '" + item.id + "'");
    std::filesystem::path payload = row[static_cast<std::size_t>(pc)];
    item.payload_path = (payload.is_relative() ? base / payload : payload).lexically_normal().string();

    double v, a;
    if (by_label) {
      const auto& label = row[static_cast<std::size_t>(ec)];
      auto it = dictionary->find(label);
      if (it == dictionary->end())
        throw Error(ErrorCode::ConfigError, where + ": emotion label '" + label + "' not in dictionary");
      v = it->second.valence;
      a = it->second.arousal;
    } else {
      v = parse_number(row[static_cast<std::size_t>(vc)], where);
      a = parse_number(row[static_cast<std::size_t>(ac)], where);
    }
    try {
      item.va = VaPoint::checked(normalize_va(v, range.min, range.max), normalize_va(a, range.min, range.max));
    } catch (const Error& e) {
      throw Error(e.code(), where + ": " + e.message());
    }
    catalog.push_back(std::move(item));
  }
  return catalog;
}

std::string manifest_to_json(const PairManifest& manifest) {
  json j;
  j["format"] = "emomusic-manifest";
  j["version"] = 1;
  j["seed"] = manifest.seed;
  j["config_hash"] = manifest.config_hash;
  if (manifest.counts) {
    j["counts"] = {{"train", manifest.counts->train}, {"test", manifest.counts->test}, {"val", manifest.counts->val}};
  } else {
    j["counts"] = nullptr;
  }
  json pairs = json::array();
  for (const auto& p : manifest.pairs) {
    json e;
    e["midi_id"] = p.midi_id;
    e["midi_path"] = p.midi_path;
    e["image_id"] = p.image_id;
    e["image_path"] = p.image_path;
    e["squared_distance"] = p.similarity.squared_distance();
    if (p.similarity.is_max()) {
      e["similarity"] = "max";
    } else {
      e["similarity"] = p.similarity.value();
    }
    e["split"] = std::string(to_string(p.split));
    pairs.push_back(std::move(e));
  }
  j["pairs"] = std::move(pairs);
  return j.dump(2) + "\n";
}

PairManifest manifest_from_json(const std::string& text) {
  PairManifest m;
  try {
    const json j = json::parse(text);
    if (j.value("format", "") != "emomusic-manifest")
      throw Error(ErrorCode::ConfigError, "not an emomusic manifest");
    if (j.at("version").get<int>() != 1) throw Error(ErrorCode::ConfigError, "unsupported manifest version");
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config_hash = j.at("config_hash").get<std::string>();
    if (!j.at("counts").is_null()) {
      const auto& c = j.at("counts");
      m.counts = SplitCounts{c.at("train").get<std::size_t>(), c.at("test").get<std::size_t>(),
                             c.at("val").get<std::size_t>()};
    }
    for (const auto& e : j.at("pairs")) {
      Pair p;
      p.midi_id = e.at("midi_id").get<std::string>();
      p.midi_path = e.at("midi_path").get<std::string>();
      p.image_id = e.at("image_id").get<std::string>();
      p.image_path = e.at("image_path").get<std::string>();
      p.similarity = Similarity::from_squared_distance(e.at("squared_distance").get<double>());
      p.split = split_from_string(e.at("split").get<std::string>());
      m.pairs.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void save_manifest(const std::filesystem::path& path, const PairManifest& manifest) {
  util::write_text(path, manifest_to_json(manifest));
}

PairManifest load_manifest(const std::filesystem::path& path) {
  try {
    return manifest_from_json(util::read_text(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.message());
  }
}

}  // namespace emomusic::pairing
