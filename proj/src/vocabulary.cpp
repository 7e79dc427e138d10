#include "adactx/vocabulary.hpp"

#include <fstream>

#include "adactx/error.hpp"

namespace adactx {

namespace {
constexpr const char* kReserved[] = {"<pad>", "<bos>", "<eos>", "<sep>", "<mask>", "<unk>"};
}

Vocabulary::Vocabulary() {
  for (const char* r : kReserved) add(r);
}

Vocabulary::Vocabulary(std::span<const std::string> tokens) : Vocabulary() {
  for (const auto& t : tokens) add(t);
}

std::int32_t Vocabulary::add(std::string_view token) {
  if (token.empty()) throw Error(ErrorKind::Vocab, "empty token");
  auto it = index_.find(std::string(token));
  if (it != index_.end()) return it->second;
  const auto id = static_cast<std::int32_t>(tokens_.size());
  tokens_.emplace_back(token);
  index_.emplace(tokens_.back(), id);
  return id;
}

std::int32_t Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? tok::kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.contains(std::string(token));
}

const std::string& Vocabulary::token(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw Error(ErrorKind::Vocab, "id " + std::to_string(id) + " outside vocabulary");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

TokenIds Vocabulary::encode(std::string_view sentence) const {
  TokenIds ids;
  for (const auto& t : split_whitespace(sentence)) ids.push_back(id(t));
  return ids;
}

std::string Vocabulary::decode(std::span<const std::int32_t> ids) const {
  std::string out;
  for (auto id : ids) {
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

void Vocabulary::write(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path.string());
  for (std::size_t i = tok::kReservedCount; i < tokens_.size(); ++i) os << tokens_[i] << '\n';
  if (!os) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

Vocabulary Vocabulary::read(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::Io, "cannot read " + path.string());
  Vocabulary v;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto parts = split_whitespace(line);
    if (parts.size() != 1)
      throw Error(ErrorKind::Parse, path.string() + ":" + std::to_string(lineno) +
                                        ": expected one token per line");
    if (v.contains(parts[0]))
      throw Error(ErrorKind::Parse, path.string() + ":" + std::to_string(lineno) +
                                        ": duplicate token " + parts[0]);
    v.add(parts[0]);
  }
  return v;
}

}  // namespace adactx
