#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace nrmt {

// token <-> id bijection with fixed reserved specials at ids 0..5.
// Reserved tokens are never produced by segmentation or BPE merges; adding a
// colliding token is an error.
class Vocabulary {
 public:
  static constexpr int64_t kPad = 0;
  static constexpr int64_t kBos = 1;
  static constexpr int64_t kEos = 2;
  static constexpr int64_t kUnk = 3;
  static constexpr int64_t kRep = 4;
  static constexpr int64_t kSep = 5;
  static constexpr int64_t kNumReserved = 6;

  static const std::vector<std::string>& reserved_tokens();

  Vocabulary();

  int64_t add(const std::string& token);
  bool contains(const std::string& token) const;
  // id of `token`, or kUnk when absent.
  int64_t id_or_unk(const std::string& token) const;
  // id of `token`; throws when absent.
  int64_t id(const std::string& token) const;
  const std::string& token(int64_t id) const;
  int64_t size() const { return static_cast<int64_t>(tokens_.size()); }

  std::vector<int64_t> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<int64_t>& ids) const;

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  // Builds a vocabulary from counted tokens: order by frequency (descending),
  // ties broken lexicographically, truncated to top_k when top_k > 0.
  static Vocabulary from_counts(const std::unordered_map<std::string, int64_t>& counts,
                                int64_t top_k = 0);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int64_t> ids_;
};

}  // namespace nrmt
