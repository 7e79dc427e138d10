#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "adactx/model.hpp"
#include "adactx/vocabulary.hpp"

namespace adactx {

inline constexpr const char* kCheckpointMagic = "ADACTX-CHECKPOINT";
inline constexpr int kCheckpointVersion = 1;

// Text header (magic, version, model config and metadata as key/value lines,
// vocabulary), then named tensors: u32 name length, name bytes, u64 rows,
// u64 cols, rows*cols little-endian f64.
struct Checkpoint {
  ModelParams params;
  Vocabulary vocab;
  std::map<std::string, std::string> meta;
  // Tensors that are not model parameters (optimizer moments).
  std::vector<std::pair<std::string, Matrix>> extra;
};

std::vector<std::pair<std::string, std::string>> config_to_kv(const ModelConfig& cfg);
ModelConfig config_from_kv(const std::map<std::string, std::string>& kv);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace adactx
