#include "mixalign/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mixalign {

namespace {

constexpr char kMagic[8] = {'M', 'I', 'X', 'A', 'L', 'I', 'G', 'N'};

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get_le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return v;
  }

  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint: truncated file");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

void put_name(std::string& out, const std::string& name) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out += name;
}

}  // namespace

std::string Checkpoint::serialize() const {
  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, version);
  put_le<std::uint64_t>(out, config_hash);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(arrays.size() + texts.size()));
  // One sorted sequence across both maps keeps the byte stream canonical.
  auto a = arrays.begin();
  auto t = texts.begin();
  while (a != arrays.end() || t != texts.end()) {
    const bool take_array = t == texts.end() || (a != arrays.end() && a->first < t->first);
    if (take_array) {
      put_name(out, a->first);
      out.push_back(0);
      put_le<std::uint64_t>(out, a->second.size());
      for (double v : a->second) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
      ++a;
    } else {
      put_name(out, t->first);
      out.push_back(1);
      put_le<std::uint64_t>(out, t->second.size());
      out += t->second;
      ++t;
    }
  }
  return out;
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
  Reader r(bytes);
  if (r.get_bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw CheckpointError("checkpoint: bad magic");
  }
  Checkpoint c;
  c.version = r.get_le<std::uint32_t>();
  if (c.version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(c.version));
  }
  c.config_hash = r.get_le<std::uint64_t>();
  const auto count = r.get_le<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get_le<std::uint32_t>();
    std::string name = r.get_bytes(name_len);
    const auto kind = static_cast<unsigned char>(r.get_bytes(1)[0]);
    const auto length = r.get_le<std::uint64_t>();
    if (kind == 0) {
      if (length > bytes.size() / 8) throw CheckpointError("checkpoint: array length exceeds file size");
      std::vector<double> values(length);
      for (auto& v : values) v = std::bit_cast<double>(r.get_le<std::uint64_t>());
      c.arrays.emplace(std::move(name), std::move(values));
    } else if (kind == 1) {
      if (length > bytes.size()) throw CheckpointError("checkpoint: text length exceeds file size");
      c.texts.emplace(std::move(name), r.get_bytes(length));
    } else {
      throw CheckpointError("checkpoint: unknown entry kind " + std::to_string(kind));
    }
  }
  if (!r.done()) throw CheckpointError("checkpoint: trailing bytes");
  return c;
}

void Checkpoint::save(const std::string& path) const {
  const std::string bytes = serialize();
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("checkpoint: cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("checkpoint: write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw CheckpointError("checkpoint: cannot rename to " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

const std::vector<double>& Checkpoint::array(const std::string& name) const {
  const auto it = arrays.find(name);
  if (it == arrays.end()) throw CheckpointError("checkpoint: missing array " + name);
  return it->second;
}

const std::string& Checkpoint::text(const std::string& name) const {
  const auto it = texts.find(name);
  if (it == texts.end()) throw CheckpointError("checkpoint: missing entry " + name);
  return it->second;
}

}  // namespace mixalign
