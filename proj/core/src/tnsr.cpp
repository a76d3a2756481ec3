#include "duostream/tnsr.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <memory>

#include "duostream/errors.hpp"

namespace duostream {

namespace {

constexpr char kMagic[6] = {'T', 'N', 'S', 'R', '1', '\0'};

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void put_u16(std::FILE* f, uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>(v >> 8)};
  std::fwrite(b, 1, 2, f);
}

void put_u32(std::FILE* f, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  std::fwrite(b, 1, 4, f);
}

bool get_bytes(std::FILE* f, void* dst, size_t n) {
  return std::fread(dst, 1, n, f) == n;
}

bool get_u16(std::FILE* f, uint16_t& v) {
  unsigned char b[2];
  if (!get_bytes(f, b, 2)) return false;
  v = static_cast<uint16_t>(b[0] | (b[1] << 8));
  return true;
}

bool get_u32(std::FILE* f, uint32_t& v) {
  unsigned char b[4];
  if (!get_bytes(f, b, 4)) return false;
  v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return true;
}

}  // namespace

void tnsr_write(const std::string& path, const TnsrFile& entries) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw MissingInputError("tnsr_write: cannot open " + path);
  std::fwrite(kMagic, 1, sizeof(kMagic), f.get());
  for (const auto& [name, entry] : entries) {
    if (name.size() > 0xffff)
      throw DimensionError("tnsr_write: entry name too long: " + name);
    if (shape_numel(entry.shape) != static_cast<int64_t>(entry.data.size()))
      throw DimensionError("tnsr_write: shape/payload mismatch for " + name);
    put_u16(f.get(), static_cast<uint16_t>(name.size()));
    std::fwrite(name.data(), 1, name.size(), f.get());
    std::fputc(0, f.get());  // dtype f32
    std::fputc(static_cast<int>(entry.shape.size()), f.get());
    for (int d : entry.shape) put_u32(f.get(), static_cast<uint32_t>(d));
    static_assert(sizeof(float) == 4);
    // float payload as little-endian words
    for (float v : entry.data) {
      uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_u32(f.get(), bits);
    }
  }
  if (std::ferror(f.get())) throw MissingInputError("tnsr_write: write failed: " + path);
}

TnsrFile tnsr_read(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw MissingInputError("tnsr_read: cannot open " + path);
  char magic[6];
  if (!get_bytes(f.get(), magic, 6) || std::memcmp(magic, kMagic, 6) != 0)
    throw MissingInputError("tnsr_read: bad magic in " + path);

  TnsrFile out;
  for (;;) {
    uint16_t name_len;
    if (!get_u16(f.get(), name_len)) break;  // EOF
    std::string name(name_len, '\0');
    if (!get_bytes(f.get(), name.data(), name_len))
      throw MissingInputError("tnsr_read: truncated name in " + path);
    const int dtype = std::fgetc(f.get());
    const int ndim = std::fgetc(f.get());
    if (dtype != 0 || ndim < 0)
      throw MissingInputError("tnsr_read: bad entry header in " + path);
    TnsrEntry entry;
    int64_t count = 1;
    for (int i = 0; i < ndim; ++i) {
      uint32_t ext;
      if (!get_u32(f.get(), ext))
        throw MissingInputError("tnsr_read: truncated extents in " + path);
      entry.shape.push_back(static_cast<int>(ext));
      count *= ext;
    }
    entry.data.resize(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) {
      uint32_t bits;
      if (!get_u32(f.get(), bits))
        throw MissingInputError("tnsr_read: truncated payload in " + path);
      std::memcpy(&entry.data[static_cast<size_t>(i)], &bits, 4);
    }
    out.emplace(std::move(name), std::move(entry));
  }
  return out;
}

TnsrEntry tnsr_from_tensor(const Tensor& t) {
  TnsrEntry e;
  e.shape = t.shape();
  e.data.assign(t.data(), t.data() + t.size());
  return e;
}

Tensor tensor_from_tnsr(const TnsrEntry& e, bool requires_grad) {
  return Tensor::from_data(e.shape, e.data, requires_grad);
}

}  // namespace duostream
