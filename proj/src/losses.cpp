#include "adactx/losses.hpp"

#include <cmath>

#include "adactx/error.hpp"

namespace adactx {

void LossWeights::validate() const {
  for (double b : {beta1, beta2, beta3})
    if (!std::isfinite(b) || b < 0.0)
      throw Error(ErrorKind::Config, "loss weights must be finite and non-negative");
}

namespace ag {

Var nll(Tape& t, Var logits, std::span<const std::int32_t> targets,
        std::span<const std::uint8_t> mask) {
  return cross_entropy(t, logits, targets, mask);
}

Var weighted_mt_loss(Tape& t, Var per_option_nll, Var lambda) {
  const Matrix& a = t.value(per_option_nll);
  const Matrix& b = t.value(lambda);
  if (a.size() != b.size()) throw Error(ErrorKind::Shape, "per-option losses vs lambda length");
  return dot(t, per_option_nll, lambda);
}

Var diversity_loss(Tape& t, Var pis) {
  const Matrix& p = t.value(pis);
  if (p.rows() == 0) throw Error(ErrorKind::EmptyInput, "diversity loss of an empty batch");
  const double n = static_cast<double>(p.cols());
  Var expected = mean_rows(t, pis);
  Var s = sum(t, log_clamped(t, expected, kProbFloor));
  return add_scalar(t, scale(t, s, -1.0 / n), -std::log(n));
}

Var uniformity_loss(Tape& t, Var pis) {
  const Matrix& p = t.value(pis);
  if (p.rows() == 0) throw Error(ErrorKind::EmptyInput, "uniformity loss of an empty batch");
  const double n = static_cast<double>(p.cols());
  const double b = static_cast<double>(p.rows());
  // -E[-(1/N) sum log pi - log N] = (1/(B N)) sum log pi + log N
  Var s = sum(t, log_clamped(t, pis, kProbFloor));
  return add_scalar(t, scale(t, s, 1.0 / (b * n)), std::log(n));
}

Var mask_loss(Tape& t, Var mask_logits, std::span<const std::size_t> positions,
              std::span<const std::int32_t> original_ids) {
  if (positions.size() != original_ids.size())
    throw Error(ErrorKind::Shape, "mask positions vs ids length");
  if (positions.empty()) return t.constant(Matrix(1, 1, 0.0));
  const Matrix& lv = t.value(mask_logits);
  std::vector<std::int32_t> targets(lv.rows(), 0);
  std::vector<std::uint8_t> keep(lv.rows(), 0);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (positions[i] >= lv.rows()) throw Error(ErrorKind::Shape, "mask position out of range");
    if (original_ids[i] < 0 || static_cast<std::size_t>(original_ids[i]) >= lv.cols())
      throw Error(ErrorKind::Vocab, "masked id outside vocabulary");
    targets[positions[i]] = original_ids[i];
    keep[positions[i]] = 1;
  }
  return cross_entropy(t, mask_logits, targets, keep);
}

Var total_loss(Tape& t, const LossParts& parts, const LossWeights& w) {
  w.validate();
  const std::pair<const char*, Var> named[] = {
      {"l_mt", parts.l_mt}, {"l_div", parts.l_div}, {"l_uni", parts.l_uni}, {"l_mask", parts.l_mask}};
  for (const auto& [name, v] : named)
    if (!std::isfinite(t.value(v)[0]))
      throw Error(ErrorKind::Numeric, std::string("non-finite loss component ") + name);
  Var total = parts.l_mt;
  total = add(t, total, scale(t, parts.l_div, w.beta1));
  total = add(t, total, scale(t, parts.l_uni, w.beta2));
  total = add(t, total, scale(t, parts.l_mask, w.beta3));
  return total;
}

}  // namespace ag

namespace {

Matrix stack(std::span<const std::vector<double>> rows) {
  if (rows.empty()) throw Error(ErrorKind::EmptyInput, "empty batch");
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) throw Error(ErrorKind::Shape, "ragged batch of pi vectors");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

Matrix row_of(std::span<const double> v) {
  Matrix m(1, v.size());
  std::copy(v.begin(), v.end(), m.data());
  return m;
}

}  // namespace

double nll(const Matrix& logits, std::span<const std::int32_t> targets,
           std::span<const std::uint8_t> mask) {
  ag::Tape t(false);
  return t.value(ag::nll(t, t.constant(logits), targets, mask))[0];
}

double weighted_mt_loss(std::span<const double> per_option_nll, std::span<const double> lambda) {
  if (per_option_nll.size() != lambda.size())
    throw Error(ErrorKind::Shape, "per-option losses vs lambda length");
  ag::Tape t(false);
  return t.value(ag::weighted_mt_loss(t, t.constant(row_of(per_option_nll)),
                                      t.constant(row_of(lambda))))[0];
}

double diversity_loss(std::span<const std::vector<double>> batch_pis) {
  ag::Tape t(false);
  return t.value(ag::diversity_loss(t, t.constant(stack(batch_pis))))[0];
}

double uniformity_loss(std::span<const std::vector<double>> batch_pis) {
  ag::Tape t(false);
  return t.value(ag::uniformity_loss(t, t.constant(stack(batch_pis))))[0];
}

double mask_loss(const Matrix& hidden, std::span<const std::size_t> positions,
                 std::span<const std::int32_t> original_ids, const Matrix& head_w,
                 const Matrix& head_b) {
  ag::Tape t(false);
  ag::Var logits = ag::affine(t, t.constant(hidden), t.constant(head_w), t.constant(head_b));
  return t.value(ag::mask_loss(t, logits, positions, original_ids))[0];
}

LossBreakdown total_loss(double l_mt, double l_div, double l_uni, double l_mask,
                         const LossWeights& w) {
  ag::Tape t(false);
  ag::LossParts parts{t.constant(Matrix(1, 1, l_mt)), t.constant(Matrix(1, 1, l_div)),
                      t.constant(Matrix(1, 1, l_uni)), t.constant(Matrix(1, 1, l_mask))};
  LossBreakdown b;
  b.l_mt = l_mt;
  b.l_div = l_div;
  b.l_uni = l_uni;
  b.l_mask = l_mask;
  b.total = t.value(ag::total_loss(t, parts, w))[0];
  return b;
}

}  // namespace adactx
