#include "nrmt/checkpoint.hpp"

#include <zlib.h>

#include <cstring>

#include "nrmt/error.hpp"
#include "nrmt/text.hpp"

namespace nrmt {

namespace {

constexpr char kMagic[4] = {'N', 'F', 'C', 'K'};

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xFF);
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xFF);
}

void put_f32(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

class Reader {
 public:
  Reader(const std::string& buf, const std::string& path) : buf_(buf), path_(path) {}

  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(buf_[pos_ + static_cast<size_t>(i)])) << (8 * i);
    pos_ += 4;
    return v;
  }

  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(buf_[pos_ + static_cast<size_t>(i)])) << (8 * i);
    pos_ += 8;
    return v;
  }

  float f32() {
    const uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  std::string bytes(size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  size_t pos() const { return pos_; }
  size_t size() const { return buf_.size(); }

  void need(size_t n) const {
    if (pos_ + n > buf_.size()) {
      throw Error(ErrorKind::data, "truncated checkpoint file: " + path_);
    }
  }

 private:
  const std::string& buf_;
  std::string path_;
  size_t pos_ = 0;
};

}  // namespace

std::string Checkpoint::config_text() const {
  KeyValues kv;
  config.fill(kv);
  kv.set("step", std::to_string(step));
  kv.set("seed", std::to_string(seed));
  return kv.serialize();
}

void Checkpoint::save(const std::string& path) const {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  const std::string text = config_text();
  put_u32(out, static_cast<uint32_t>(text.size()));
  out += text;
  for (const auto& [name, t] : params) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<uint32_t>(t.shape.size()));
    for (int64_t d : t.shape) put_u64(out, static_cast<uint64_t>(d));
    for (double v : t.data) put_f32(out, static_cast<float>(v));
  }
  const uint32_t crc = static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(out.data()), static_cast<uInt>(out.size())));
  put_u32(out, crc);
  write_file(path, out);
}

Checkpoint Checkpoint::load(const std::string& path) {
  const std::string buf = read_file(path);
  if (buf.size() < 12) throw Error(ErrorKind::data, "truncated checkpoint file: " + path);
  const uint32_t stored_crc =
      static_cast<uint32_t>(static_cast<unsigned char>(buf[buf.size() - 4])) |
      static_cast<uint32_t>(static_cast<unsigned char>(buf[buf.size() - 3])) << 8 |
      static_cast<uint32_t>(static_cast<unsigned char>(buf[buf.size() - 2])) << 16 |
      static_cast<uint32_t>(static_cast<unsigned char>(buf[buf.size() - 1])) << 24;
  const uint32_t actual_crc = static_cast<uint32_t>(crc32(
      0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size() - 4)));
  if (stored_crc != actual_crc) {
    throw Error(ErrorKind::data, "checkpoint checksum failure: " + path);
  }

  Reader r(buf, path);
  if (r.bytes(4) != std::string(kMagic, 4)) {
    throw Error(ErrorKind::data, "not a checkpoint file (bad magic): " + path);
  }
  const uint32_t version = r.u32();
  if (version != kVersion) {
    throw Error(ErrorKind::data, "checkpoint version mismatch: have " +
                                     std::to_string(version) + ", expected " +
                                     std::to_string(kVersion));
  }

  Checkpoint ck;
  const uint32_t text_len = r.u32();
  const std::string text = r.bytes(text_len);
  for (const auto& [key, value] : KeyValues::parse(text).items) {
    if (key == "step") ck.step = parse_int64(key, value);
    else if (key == "seed") ck.seed = parse_uint64(key, value);
    else if (!ck.config.try_set(key, value)) {
      throw Error(ErrorKind::data, "unknown checkpoint config key: " + key);
    }
  }

  const size_t end = buf.size() - 4;
  while (r.pos() < end) {
    const uint32_t name_len = r.u32();
    const std::string name = r.bytes(name_len);
    const uint32_t rank = r.u32();
    Shape shape;
    int64_t numel = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      shape.push_back(static_cast<int64_t>(r.u64()));
      numel *= shape.back();
    }
    std::vector<double> data(static_cast<size_t>(numel));
    for (auto& v : data) v = static_cast<double>(r.f32());
    if (ck.params.count(name)) {
      throw Error(ErrorKind::data, "duplicate parameter name in checkpoint: " + name);
    }
    ck.params.emplace(name, Tensor(std::move(shape), std::move(data)));
  }
  if (r.pos() != end) {
    throw Error(ErrorKind::data, "trailing bytes in checkpoint file: " + path);
  }
  return ck;
}

}  // namespace nrmt
