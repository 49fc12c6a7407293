#include "vtt/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_set>

#include <zlib.h>

namespace vtt {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  template <class U>
  void put(U v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(U));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  Reader(const std::uint8_t* p, std::size_t n) : p_(p), n_(n) {}
  template <class U>
  U get() {
    U v;
    std::memcpy(&v, take(sizeof(U)), sizeof(U));
    return v;
  }
  const std::uint8_t* take(std::size_t n) {
    if (n > n_ - pos_) throw IoError("archive truncated at byte " + std::to_string(pos_));
    const auto* at = p_ + pos_;
    pos_ += n;
    return at;
  }
  std::size_t remaining() const { return n_ - pos_; }

 private:
  const std::uint8_t* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void TensorArchive::add(std::string name, Shape shape, std::vector<float> data) {
  if (name.empty() || name.size() > 0xffff) throw ValidationError("archive tensor name length out of range");
  if (shape.size() > 0xff) throw ValidationError("archive tensor rank above 255: " + name);
  if (shape_numel(shape) != data.size()) throw ShapeError("archive tensor " + name + " data does not match its shape");
  if (find(name)) throw ValidationError("duplicate archive tensor " + name);
  entries_.push_back({std::move(name), std::move(shape), std::move(data)});
}

const StoredTensor* TensorArchive::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

const StoredTensor& TensorArchive::get(const std::string& name) const {
  const StoredTensor* e = find(name);
  if (!e) throw IoError("archive has no tensor named " + name);
  return *e;
}

std::vector<std::uint8_t> TensorArchive::serialize() const {
  Writer w;
  w.bytes("VTTC", 4);
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.shape.size()));
    for (int d : e.shape) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    w.bytes(e.data.data(), e.data.size() * sizeof(float));
  }
  w.put<std::uint32_t>(crc32_of(w.out.data(), w.out.size()));
  return std::move(w.out);
}

TensorArchive TensorArchive::deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "VTTC", 4) != 0) throw IoError("not a VTTC archive");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, 4);
  if (crc32_of(bytes.data(), body) != stored) throw IoError("archive checksum mismatch");
  Reader r(bytes.data(), body);
  r.take(4);
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw IoError("unsupported archive version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  TensorArchive a;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint16_t>();
    const auto* name = r.take(len);
    const auto rank = r.get<std::uint8_t>();
    Shape shape(rank);
    for (auto& d : shape) {
      const auto v = r.get<std::uint32_t>();
      if (v > 0x7fffffffu) throw IoError("archive dimension out of range");
      d = static_cast<int>(v);
    }
    const std::size_t n = shape_numel(shape);
    if (n > r.remaining() / sizeof(float)) throw IoError("archive truncated inside tensor data");
    std::vector<float> data(n);
    std::memcpy(data.data(), r.take(n * sizeof(float)), n * sizeof(float));
    a.add(std::string(reinterpret_cast<const char*>(name), len), std::move(shape), std::move(data));
  }
  if (r.remaining() != 0) throw IoError("trailing bytes after the last archive tensor");
  return a;
}

void TensorArchive::save(const std::string& path) const {
  const auto bytes = serialize();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing " + path);
}

TensorArchive TensorArchive::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace vtt
