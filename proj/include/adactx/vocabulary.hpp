#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "adactx/variant.hpp"

namespace adactx {

// Bijective token <-> id map. Ids 0..5 are always
// <pad> <bos> <eos> <sep> <mask> <unk>.
class Vocabulary {
 public:
  Vocabulary();
  // Reserved block is prepended; duplicates and reserved names are ignored.
  explicit Vocabulary(std::span<const std::string> tokens);

  std::int32_t add(std::string_view token);
  // Unknown tokens map to <unk>.
  std::int32_t id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(std::int32_t id) const;
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  TokenIds encode(std::string_view sentence) const;
  std::string decode(std::span<const std::int32_t> ids) const;

  // One token per line; the reserved block is implied, not written.
  void write(const std::filesystem::path& path) const;
  static Vocabulary read(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

std::vector<std::string> split_whitespace(std::string_view s);

}  // namespace adactx
