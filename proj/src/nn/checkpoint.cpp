#include "emomusic/nn/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "emomusic/error.hpp"
#include "emomusic/util/io.hpp"

namespace emomusic::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'E', 'M', 'O', 'C', 'K', 'P', 'T', '\0'};

template <class T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorCode::CheckpointCorrupt, "checkpoint is truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const CheckpointBlock* Checkpoint::find(std::string_view name) const {
  for (const auto& b : blocks)
    if (b.name == name) return &b;
  return nullptr;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, sizeof(Real));
  const std::string config = ckpt.config.dump();
  put<std::uint64_t>(out, config.size());
  out.insert(out.end(), config.begin(), config.end());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.blocks.size()));
  for (const auto& b : ckpt.blocks) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(b.name.size()));
    out.insert(out.end(), b.name.begin(), b.name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(b.tensor.rank()));
    for (std::size_t d : b.tensor.shape()) put<std::uint64_t>(out, d);
    for (Real v : b.tensor.values()) put<Real>(out, v);
  }
  put<std::uint64_t>(out, util::fnv1a64(out.data(), out.size()));
  return out;
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 + 8 || std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw Error(ErrorCode::CheckpointCorrupt, "not a checkpoint (bad magic)");
  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body, 8);
  if (stored != util::fnv1a64(bytes.data(), body))
    throw Error(ErrorCode::CheckpointCorrupt, "checksum mismatch (file truncated or modified)");

  Reader r(bytes.first(body));
  r.get_string(8);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw Error(ErrorCode::CheckpointCorrupt, "unsupported checkpoint version " + std::to_string(version));
  const auto real_bytes = r.get<std::uint32_t>();
  if (real_bytes != 4 && real_bytes != 8)
    throw Error(ErrorCode::CheckpointCorrupt, "unsupported value width " + std::to_string(real_bytes));
  Checkpoint ckpt;
  const auto config_len = r.get<std::uint64_t>();
  if (config_len > body) throw Error(ErrorCode::CheckpointCorrupt, "checkpoint is truncated");
  try {
    ckpt.config = nlohmann::json::parse(r.get_string(static_cast<std::size_t>(config_len)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CheckpointCorrupt, std::string("config is not valid JSON: ") + e.what());
  }
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t k = 0; k < count; ++k) {
    CheckpointBlock b;
    b.name = r.get_string(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw Error(ErrorCode::CheckpointCorrupt, "block '" + b.name + "' has rank " + std::to_string(rank));
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(r.get<std::uint64_t>());
      if (d != 0 && n > body / d) throw Error(ErrorCode::CheckpointCorrupt, "block '" + b.name + "' is too large");
      n *= d;
    }
    std::vector<Real> values(n);
    for (auto& v : values) v = real_bytes == 8 ? static_cast<Real>(r.get<double>()) : static_cast<Real>(r.get<float>());
    b.tensor = Tensor(std::move(shape), std::move(values));
    ckpt.blocks.push_back(std::move(b));
  }
  if (r.pos() != body) throw Error(ErrorCode::CheckpointCorrupt, "trailing bytes after the last block");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  util::write_bytes(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = util::read_bytes(path);
  try {
    return deserialize_checkpoint(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.message());
  }
}

std::vector<CheckpointBlock> export_state(const ParameterList& list) {
  std::vector<CheckpointBlock> blocks;
  for (const auto& ref : list.state()) blocks.push_back({ref.name, *ref.tensor});
  return blocks;
}

void import_state(const ParameterList& list, const std::vector<CheckpointBlock>& blocks) {
  for (const auto& ref : list.state()) {
    const CheckpointBlock* found = nullptr;
    for (const auto& b : blocks)
      if (b.name == ref.name) found = &b;
    if (!found) throw Error(ErrorCode::CheckpointCorrupt, "missing parameter block '" + ref.name + "'");
    if (found->tensor.shape() != ref.tensor->shape())
      throw Error(ErrorCode::CheckpointCorrupt, "block '" + ref.name + "' has shape " +
                                                    shape_string(found->tensor.shape()) + ", expected " +
                                                    shape_string(ref.tensor->shape()));
    *ref.tensor = found->tensor;
  }
}

}  // namespace emomusic::nn
