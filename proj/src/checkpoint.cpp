#include "msim/checkpoint.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace msim {

namespace {

constexpr char kMagic[] = "SWCK1\n";
constexpr size_t kMagicLen = 6;

void put_u32(std::string& out, uint32_t v) {
  char b[4];
  b[0] = static_cast<char>(v & 0xff);
  b[1] = static_cast<char>((v >> 8) & 0xff);
  b[2] = static_cast<char>((v >> 16) & 0xff);
  b[3] = static_cast<char>((v >> 24) & 0xff);
  out.append(b, 4);
}

void put_f32(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

std::string serialize(const ParamMap& params) {
  std::string out(kMagic, kMagicLen);
  for (const auto& [name, a] : params) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<uint32_t>(a.shape.size()));
    for (int e : a.shape) put_u32(out, static_cast<uint32_t>(e));
    for (double v : a.data) put_f32(out, static_cast<float>(v));
  }
  return out;
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;
  bool done() const { return pos >= buf.size(); }
  uint32_t u32() {
    if (pos + 4 > buf.size())
      throw std::runtime_error("checkpoint: truncated file");
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i)
      v = (v << 8) | static_cast<unsigned char>(buf[pos + static_cast<size_t>(i)]);
    pos += 4;
    return v;
  }
  std::string bytes(size_t n) {
    if (pos + n > buf.size())
      throw std::runtime_error("checkpoint: truncated file");
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
};

}  // namespace

void save_checkpoint(const std::string& path, const ParamMap& params) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string bytes = serialize(params);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

ParamMap load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  std::string buf = ss.str();
  if (buf.size() < kMagicLen || buf.compare(0, kMagicLen, kMagic) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  Reader r{buf, kMagicLen};
  ParamMap params;
  while (!r.done()) {
    uint32_t name_len = r.u32();
    std::string name = r.bytes(name_len);
    uint32_t rank = r.u32();
    if (rank == 0 || rank > 2)
      throw std::runtime_error("checkpoint: bad rank for " + name);
    std::vector<int> shape;
    size_t count = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      uint32_t e = r.u32();
      shape.push_back(static_cast<int>(e));
      count *= e;
    }
    std::vector<double> data(count);
    for (size_t i = 0; i < count; ++i) data[i] = static_cast<double>(r.f32());
    if (params.count(name))
      throw std::runtime_error("checkpoint: duplicate parameter " + name);
    params.emplace(std::move(name), Array(std::move(shape), std::move(data)));
  }
  return params;
}

std::string checkpoint_digest(const ParamMap& params) {
  std::string bytes = serialize(params);
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(out, 16);
}

}  // namespace msim
