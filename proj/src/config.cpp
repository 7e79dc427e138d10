#include "adactx/config.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <fstream>

#include "adactx/error.hpp"

namespace adactx {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

Error bad_value(std::string_view key, const std::string& v, const char* want) {
  return Error(ErrorKind::Config,
               "invalid value '" + v + "' for " + std::string(key) + " (expected " + want + ")");
}

}  // namespace

std::string flag_name(std::string_view key) {
  std::string f = "--" + std::string(key);
  std::replace(f.begin(), f.end(), '_', '-');
  return f;
}

ResolvedConfig::ResolvedConfig(std::vector<ConfigKey> keys) : keys_(std::move(keys)) {
  for (const auto& k : keys_) values_[k.name] = {k.default_value, "default"};
}

bool ResolvedConfig::declared(std::string_view key) const { return values_.count(key) > 0; }

void ResolvedConfig::set(std::string_view key, std::string value, std::string_view source) {
  auto it = values_.find(key);
  if (it == values_.end()) throw Error(ErrorKind::Config, "unknown key: " + std::string(key));
  it->second = {std::move(value), std::string(source)};
}

void ResolvedConfig::apply_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::Io, "cannot read config " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string t = trim(std::string_view(line).substr(0, hash));
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::Config,
                  path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(std::string_view(t).substr(0, eq));
    std::replace(key.begin(), key.end(), '-', '_');
    if (!declared(key))
      throw Error(ErrorKind::Config,
                  path.string() + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    set(key, trim(std::string_view(t).substr(eq + 1)), "file");
  }
}

void ResolvedConfig::apply_env(std::string_view prefix) {
  for (const auto& k : keys_) {
    std::string var(prefix);
    for (char c : k.name) var.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (const char* v = std::getenv(var.c_str())) set(k.name, v, "env");
  }
}

const ResolvedConfig::Entry& ResolvedConfig::entry(std::string_view key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw Error(ErrorKind::Config, "unknown key: " + std::string(key));
  return it->second;
}

const std::string& ResolvedConfig::str(std::string_view key) const { return entry(key).value; }

long long ResolvedConfig::integer(std::string_view key) const {
  const std::string& v = str(key);
  char* end = nullptr;
  errno = 0;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0' || errno != 0) throw bad_value(key, v, "an integer");
  return x;
}

std::uint64_t ResolvedConfig::u64(std::string_view key) const {
  const std::string& v = str(key);
  char* end = nullptr;
  errno = 0;
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || v[0] == '-' || *end != '\0' || errno != 0)
    throw bad_value(key, v, "a non-negative integer");
  return x;
}

double ResolvedConfig::real(std::string_view key) const {
  const std::string& v = str(key);
  char* end = nullptr;
  errno = 0;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || errno != 0) throw bad_value(key, v, "a number");
  return x;
}

bool ResolvedConfig::boolean(std::string_view key) const {
  const std::string& v = str(key);
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off" || v.empty()) return false;
  throw bad_value(key, v, "a boolean");
}

std::vector<double> ResolvedConfig::reals(std::string_view key) const {
  std::vector<double> out;
  std::string v = str(key);
  std::size_t pos = 0;
  while (pos <= v.size()) {
    const auto comma = std::min(v.find(',', pos), v.size());
    const std::string item = trim(std::string_view(v).substr(pos, comma - pos));
    char* end = nullptr;
    const double x = std::strtod(item.c_str(), &end);
    if (item.empty() || *end != '\0') throw bad_value(key, v, "comma separated numbers");
    out.push_back(x);
    pos = comma + 1;
  }
  return out;
}

std::vector<std::uint64_t> ResolvedConfig::u64s(std::string_view key) const {
  std::vector<std::uint64_t> out;
  for (double x : reals(key)) {
    if (x < 0 || x != static_cast<double>(static_cast<std::uint64_t>(x)))
      throw bad_value(key, str(key), "comma separated non-negative integers");
    out.push_back(static_cast<std::uint64_t>(x));
  }
  return out;
}

std::string ResolvedConfig::echo() const {
  std::string out;
  for (const auto& k : keys_) {
    const Entry& e = entry(k.name);
    out += k.name + " = " + e.value + "  # " + e.source + "\n";
  }
  return out;
}

}  // namespace adactx
