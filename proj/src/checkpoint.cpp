#include "adactx/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "adactx/error.hpp"

namespace adactx {

namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <typename T>
void write_le(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!is) throw Error(ErrorKind::Parse, "truncated checkpoint tensor data");
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

void write_tensor(std::ostream& os, const std::string& name, const Matrix& m) {
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_le<std::uint64_t>(os, m.rows());
  write_le<std::uint64_t>(os, m.cols());
  for (double v : m.flat()) write_le<double>(os, v);
}

int to_int(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw Error(ErrorKind::Parse, "checkpoint missing " + key);
  try {
    return std::stoi(it->second);
  } catch (const std::exception&) {
    throw Error(ErrorKind::Parse, "bad integer for " + key);
  }
}

}  // namespace

std::vector<std::pair<std::string, std::string>> config_to_kv(const ModelConfig& c) {
  return {
      {"d_model", std::to_string(c.d_model)},
      {"n_heads", std::to_string(c.n_heads)},
      {"ffn_dim", std::to_string(c.ffn_dim)},
      {"enc_layers", std::to_string(c.enc_layers)},
      {"dec_layers", std::to_string(c.dec_layers)},
      {"vocab_size", std::to_string(c.vocab_size)},
      {"max_positions", std::to_string(c.max_positions)},
      {"variant", std::string(to_string(c.variant))},
      {"n_options", std::to_string(c.n_options)},
      {"dropout", fmt_double(c.dropout)},
      {"use_segments", c.use_segments ? "1" : "0"},
      {"adaptive_depth", c.adaptive_depth ? "1" : "0"},
  };
}

ModelConfig config_from_kv(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  c.d_model = to_int(kv, "d_model");
  c.n_heads = to_int(kv, "n_heads");
  c.ffn_dim = to_int(kv, "ffn_dim");
  c.enc_layers = to_int(kv, "enc_layers");
  c.dec_layers = to_int(kv, "dec_layers");
  c.vocab_size = to_int(kv, "vocab_size");
  c.max_positions = to_int(kv, "max_positions");
  auto v = kv.find("variant");
  if (v == kv.end() || !parse_variant(v->second))
    throw Error(ErrorKind::Parse, "checkpoint has no valid variant");
  c.variant = *parse_variant(v->second);
  c.n_options = to_int(kv, "n_options");
  auto d = kv.find("dropout");
  c.dropout = d == kv.end() ? 0.0 : std::stod(d->second);
  c.use_segments = to_int(kv, "use_segments") != 0;
  c.adaptive_depth = to_int(kv, "adaptive_depth") != 0;
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path.string());
  os << kCheckpointMagic << '\n' << "format_version " << kCheckpointVersion << '\n';
  for (const auto& [k, v] : config_to_kv(ckpt.params.config())) os << "model." << k << ' ' << v << '\n';
  for (const auto& [k, v] : ckpt.meta) {
    if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos)
      throw Error(ErrorKind::Config, "metadata key/value not representable: " + k);
    os << "meta." << k << ' ' << v << '\n';
  }
  const auto& toks = ckpt.vocab.tokens();
  os << "vocab " << toks.size() - tok::kReservedCount << '\n';
  for (std::size_t i = tok::kReservedCount; i < toks.size(); ++i) os << toks[i] << '\n';
  os << "tensors " << ckpt.params.count() + ckpt.extra.size() << '\n' << "end_header\n";
  for (std::size_t i = 0; i < ckpt.params.count(); ++i)
    write_tensor(os, ckpt.params.name(i), ckpt.params.value(i));
  for (const auto& [name, m] : ckpt.extra) write_tensor(os, name, m);
  if (!os) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::string line;
  std::getline(is, line);
  if (line != kCheckpointMagic) throw Error(ErrorKind::Parse, path.string() + ": not a checkpoint");
  std::map<std::string, std::string> model_kv;
  Checkpoint ck;
  std::size_t n_tensors = 0;
  bool version_seen = false;
  while (std::getline(is, line)) {
    if (line == "end_header") break;
    const auto sp = line.find(' ');
    const std::string key = line.substr(0, sp);
    const std::string val = sp == std::string::npos ? "" : line.substr(sp + 1);
    if (key == "format_version") {
      if (std::stoi(val) != kCheckpointVersion)
        throw Error(ErrorKind::Parse, "unsupported checkpoint version " + val);
      version_seen = true;
    } else if (key.starts_with("model.")) {
      model_kv[key.substr(6)] = val;
    } else if (key.starts_with("meta.")) {
      ck.meta[key.substr(5)] = val;
    } else if (key == "vocab") {
      const std::size_t n = std::stoul(val);
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::getline(is, line)) throw Error(ErrorKind::Parse, "truncated vocabulary");
        ck.vocab.add(line);
      }
    } else if (key == "tensors") {
      n_tensors = std::stoul(val);
    } else {
      throw Error(ErrorKind::Parse, "unknown checkpoint header key " + key);
    }
  }
  if (!version_seen) throw Error(ErrorKind::Parse, "checkpoint header lacks format_version");
  ck.params = ModelParams::zeros(config_from_kv(model_kv));
  std::vector<bool> seen(ck.params.count(), false);
  for (std::size_t t = 0; t < n_tensors; ++t) {
    const auto len = read_le<std::uint32_t>(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    const auto rows = read_le<std::uint64_t>(is);
    const auto cols = read_le<std::uint64_t>(is);
    Matrix m(rows, cols);
    for (double& v : m.flat()) v = read_le<double>(is);
    if (auto idx = ck.params.find(name)) {
      if (!ck.params.value(*idx).same_shape(m))
        throw Error(ErrorKind::Parse, "shape mismatch for tensor " + name);
      ck.params.value(*idx) = std::move(m);
      seen[*idx] = true;
    } else {
      ck.extra.emplace_back(std::move(name), std::move(m));
    }
  }
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (!seen[i]) throw Error(ErrorKind::Parse, "checkpoint lacks tensor " + ck.params.name(i));
  return ck;
}

}  // namespace adactx
