#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>
#include <vector>

#include "adactx/model.hpp"
#include "adactx/rng.hpp"
#include "adactx/tensor.hpp"

namespace adactx::testing {

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (double& x : m.flat()) x = scale * normal(rng);
  return m;
}

inline ModelConfig tiny_config(VariantKind kind = VariantKind::Concatenate, int vocab = 41) {
  ModelConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.ffn_dim = 16;
  c.enc_layers = 2;
  c.dec_layers = 3;
  c.vocab_size = vocab;
  c.max_positions = 48;
  c.variant = kind;
  c.n_options = ModelConfig::options_for(kind);
  return c;
}

// Upper 1% point of the chi-square distribution with 3 degrees of freedom.
inline constexpr double kChiSquare3Df01 = 11.344866730144373;

// Pearson statistic of observed counts against expected probabilities.
inline double chi_square(const std::vector<double>& counts, const std::vector<double>& probs) {
  double n = 0.0;
  for (double c : counts) n += c;
  double stat = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double e = n * probs[i];
    stat += (counts[i] - e) * (counts[i] - e) / e;
  }
  return stat;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("adactx_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace adactx::testing
