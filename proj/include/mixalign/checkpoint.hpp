#pragma once

// Versioned binary container for training state.
//
// Layout (all integers little-endian):
//   magic    "MIXALIGN"                 8 bytes
//   version  u32
//   hash     u64                        config hash, for mismatch warnings
//   count    u32                        number of entries
//   entries, sorted by name:
//     name_len u32, name bytes
//     kind     u8                       0 = f64 array, 1 = text
//     length   u64                      element count (f64) or byte count (text)
//     payload                           little-endian IEEE-754 doubles or raw bytes

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace mixalign {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::uint64_t config_hash = 0;
  std::map<std::string, std::vector<double>> arrays;
  std::map<std::string, std::string> texts;

  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes);

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  const std::vector<double>& array(const std::string& name) const;
  const std::string& text(const std::string& name) const;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mixalign
