#pragma once

#include <cstdint>
#include <string>

#include "nrmt/transformer.hpp"

namespace nrmt {

// Binary model file: magic "NFCK", u32 version, length-prefixed UTF-8 config
// text, per-parameter records (length-prefixed name, u32 rank, u64 dims,
// little-endian IEEE-754 32-bit values), trailing CRC32 over everything
// before it. Loading then saving is byte-identical.
struct Checkpoint {
  static constexpr uint32_t kVersion = 1;

  ModelConfig config;
  ParamMap params;
  int64_t step = 0;
  uint64_t seed = 0;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  // The config text block as stored on disk (step and seed included).
  std::string config_text() const;
};

}  // namespace nrmt
