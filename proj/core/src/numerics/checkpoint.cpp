#include "raft/numerics/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>

namespace raft::numerics {

namespace {

constexpr char kMagic[4] = {'R', 'A', 'F', 'T'};

class Writer {
 public:
  void u16(std::uint16_t v) {
    bytes_.push_back(static_cast<std::uint8_t>(v & 0xff));
    bytes_.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}
  bool done() const { return pos_ == b_.size(); }
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw DataError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::uint16_t u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>(b_[pos_] | (b_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void magic() {
    need(4);
    if (std::memcmp(b_.data(), kMagic, 4) != 0) throw DataError("not a checkpoint: bad magic bytes");
    pos_ += 4;
  }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

bool ModelCheckpoint::has_param(const std::string& name) const {
  for (const auto& p : params)
    if (p.name == name) return true;
  return false;
}

const NamedTensor& ModelCheckpoint::param(const std::string& name) const {
  for (const auto& p : params)
    if (p.name == name) return p;
  throw ContractError("checkpoint has no parameter " + name);
}

std::vector<std::uint8_t> ModelCheckpoint::serialize() const {
  Writer w;
  w.raw(kMagic, 4);
  w.u16(version);
  w.str(config);
  for (const auto& p : params) {
    if (shape_size(p.shape) != p.values.size()) throw DimensionError("checkpoint tensor " + p.name + " shape/data mismatch");
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.shape.size()));
    for (auto d : p.shape) w.u32(static_cast<std::uint32_t>(d));
    for (float f : p.values) w.f32(f);
  }
  return w.take();
}

ModelCheckpoint ModelCheckpoint::deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.magic();
  ModelCheckpoint ckpt;
  ckpt.version = r.u16();
  if (ckpt.version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(ckpt.version));
  }
  ckpt.config = r.str();
  while (!r.done()) {
    NamedTensor t;
    t.name = r.str();
    const auto rank = r.u32();
    for (std::uint32_t i = 0; i < rank; ++i) t.shape.push_back(r.u32());
    const auto n = shape_size(t.shape);
    r.need(n * 4);
    t.values.resize(n);
    for (auto& f : t.values) f = r.f32();
    ckpt.params.push_back(std::move(t));
  }
  return ckpt;
}

void ModelCheckpoint::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ModelCheckpoint ModelCheckpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

std::string checkpoint_hash(const ModelCheckpoint& ckpt) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : ckpt.serialize()) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace raft::numerics
