#pragma once

#include <span>
#include <string>
#include <vector>

#include "adactx/autograd.hpp"

// Training objectives. The tape forms are the implementation; the value forms
// evaluate them on a gradient-free tape.
namespace adactx {

// Floor applied to probabilities before any log.
inline constexpr double kProbFloor = 1e-8;

struct LossWeights {
  double beta1 = 0.5;  // diversity
  double beta2 = 0.2;  // uniformity
  double beta3 = 0.5;  // masked source tokens
  void validate() const;
};

struct LossBreakdown {
  std::vector<double> per_option_nll;
  std::vector<double> lambda;
  double l_mt = 0.0;
  double l_div = 0.0;
  double l_uni = 0.0;
  double l_mask = 0.0;
  double total = 0.0;
};

namespace ag {

// Mean token NLL over positions with mask[r] set.
Var nll(Tape& t, Var logits, std::span<const std::int32_t> targets,
        std::span<const std::uint8_t> mask);
// sum_i lambda_i * L_i; both 1 x N.
Var weighted_mt_loss(Tape& t, Var per_option_nll, Var lambda);
// KL(U || E[pi]) = -(1/N) sum log E[pi_i] - log N with E over the rows of pis.
Var diversity_loss(Tape& t, Var pis);
// -E[KL(U || pi)] over the rows of pis.
Var uniformity_loss(Tape& t, Var pis);
// Mean cross-entropy of mask-head logits at the given rows; 0 when empty.
Var mask_loss(Tape& t, Var mask_logits, std::span<const std::size_t> positions,
              std::span<const std::int32_t> original_ids);

struct LossParts {
  Var l_mt, l_div, l_uni, l_mask;
};
// L_mt + b1 L_div + b2 L_uni + b3 L_mask. Throws Numeric naming the first
// non-finite component.
Var total_loss(Tape& t, const LossParts& parts, const LossWeights& w);

}  // namespace ag

double nll(const Matrix& logits, std::span<const std::int32_t> targets,
           std::span<const std::uint8_t> mask);
double weighted_mt_loss(std::span<const double> per_option_nll, std::span<const double> lambda);
double diversity_loss(std::span<const std::vector<double>> batch_pis);
double uniformity_loss(std::span<const std::vector<double>> batch_pis);
// hidden: encoder output rows; head_w: d x V; head_b: 1 x V.
double mask_loss(const Matrix& hidden, std::span<const std::size_t> positions,
                 std::span<const std::int32_t> original_ids, const Matrix& head_w,
                 const Matrix& head_b);
// Fills l_mt..l_mask from the arguments and computes total.
LossBreakdown total_loss(double l_mt, double l_div, double l_uni, double l_mask,
                         const LossWeights& w);

}  // namespace adactx
