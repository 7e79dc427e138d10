#pragma once

#include <span>
#include <vector>

#include "adactx/autograd.hpp"
#include "adactx/model.hpp"
#include "adactx/rng.hpp"

// Context-option predictor: pooled encoder state -> option probabilities,
// Gumbel-softmax loss weights for training, hard argmax at inference.
namespace adactx {

struct PredictorHead {
  Matrix w;  // d_model x N
  Matrix b;  // 1 x N
  double tau = 1.0;

  std::size_t options() const noexcept { return w.cols(); }
  void validate() const;
};

// Copies the predictor weights out of a parameter set.
PredictorHead predictor_head(const ModelParams& params, double tau = 1.0);

struct OptionDistribution {
  std::vector<double> pi;
  std::vector<double> lambda;
  std::vector<double> gumbel_noise;
};

// Mean of the non-pad hidden rows. Throws EmptyInput if every row is pad.
std::vector<double> pool(const EncoderOutput& enc);

std::vector<double> option_logits(std::span<const double> pooled, const PredictorHead& head);
// Max-shifted softmax; throws Numeric on non-finite logits.
std::vector<double> softmax(std::span<const double> logits);
std::vector<double> option_probs(std::span<const double> pooled, const PredictorHead& head);

// g_i = -log(-log(u_i)) with u_i strictly inside (0, 1).
std::vector<double> sample_gumbel(Rng& rng, std::size_t n);
// lambda_i = softmax_i((log pi + g) / tau) for a given noise vector.
std::vector<double> gumbel_weights(std::span<const double> pi, std::span<const double> noise,
                                   double tau);
// Draws fresh noise from rng.
OptionDistribution gumbel_weights(std::span<const double> pi, double tau, Rng& rng);

// Lowest index among maximal entries.
int argmax(std::span<const double> values);
// Hard inference-time choice: argmax of the logits (no noise, no temperature).
int select_option(std::span<const double> pooled, const PredictorHead& head);

namespace ag {
// Tape forms used by training.
Var pool(Tape& t, Var hidden, std::span<const std::uint8_t> keep);
Var gumbel_weights(Tape& t, Var log_pi, std::span<const double> noise, double tau);
}  // namespace ag

}  // namespace adactx
