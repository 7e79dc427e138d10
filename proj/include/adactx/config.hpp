#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

// Flat key/value settings with layered sources:
// default < --config file < environment (ADACTX_<KEY>) < command-line flag.
namespace adactx {

struct ConfigKey {
  std::string name;  // snake_case; the flag is --name with '_' -> '-'
  std::string default_value;
  std::string help;
  bool is_switch = false;  // boolean flag without argument
};

class ResolvedConfig {
 public:
  explicit ResolvedConfig(std::vector<ConfigKey> keys);

  // `key = value` lines; '#' starts a comment. Unknown keys are errors.
  void apply_file(const std::filesystem::path& path);
  void apply_env(std::string_view prefix = "ADACTX_");
  void set(std::string_view key, std::string value, std::string_view source);

  const std::vector<ConfigKey>& keys() const noexcept { return keys_; }
  bool declared(std::string_view key) const;
  const std::string& str(std::string_view key) const;
  bool empty(std::string_view key) const { return str(key).empty(); }
  long long integer(std::string_view key) const;
  std::uint64_t u64(std::string_view key) const;
  double real(std::string_view key) const;
  bool boolean(std::string_view key) const;
  std::vector<double> reals(std::string_view key) const;  // comma separated
  std::vector<std::uint64_t> u64s(std::string_view key) const;

  // `key = value` lines in declaration order; parseable by apply_file.
  std::string echo() const;

 private:
  struct Entry {
    std::string value;
    std::string source;
  };
  const Entry& entry(std::string_view key) const;

  std::vector<ConfigKey> keys_;
  std::map<std::string, Entry, std::less<>> values_;
};

std::string flag_name(std::string_view key);

}  // namespace adactx
