#include "adactx/predictor.hpp"

#include <algorithm>
#include <cmath>

#include "adactx/error.hpp"

namespace adactx {

void PredictorHead::validate() const {
  if (w.cols() == 0 || b.rows() != 1 || b.cols() != w.cols())
    throw Error(ErrorKind::Shape, "predictor head shapes disagree");
  if (!(tau > 0.0)) throw Error(ErrorKind::Config, "temperature must be positive");
}

PredictorHead predictor_head(const ModelParams& params, double tau) {
  const Layout& L = params.layout();
  PredictorHead h{params.value(static_cast<std::size_t>(L.pred_w)),
                  params.value(static_cast<std::size_t>(L.pred_b)), tau};
  h.validate();
  return h;
}

namespace ag {

Var pool(Tape& t, Var hidden, std::span<const std::uint8_t> keep) {
  return mean_rows_masked(t, hidden, keep);
}

Var gumbel_weights(Tape& t, Var log_pi, std::span<const double> noise, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorKind::Config, "temperature must be positive");
  const Matrix& lp = t.value(log_pi);
  if (lp.rows() != 1 || lp.cols() != noise.size())
    throw Error(ErrorKind::Shape, "gumbel noise length");
  Matrix g(1, noise.size());
  std::copy(noise.begin(), noise.end(), g.data());
  Var z = scale(t, add(t, log_pi, t.constant(std::move(g))), 1.0 / tau);
  return softmax_rows(t, z);
}

}  // namespace ag

std::vector<double> pool(const EncoderOutput& enc) {
  std::vector<std::uint8_t> keep(enc.pad_mask.size());
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = enc.pad_mask[i] ? 0 : 1;
  ag::Tape t(false);
  ag::Var h = ag::pool(t, t.constant(enc.hidden), keep);
  const Matrix& v = t.value(h);
  return {v.data(), v.data() + v.size()};
}

std::vector<double> option_logits(std::span<const double> pooled, const PredictorHead& head) {
  head.validate();
  if (pooled.size() != head.w.rows()) throw Error(ErrorKind::Shape, "pooled size != d_model");
  std::vector<double> z(head.b.data(), head.b.data() + head.b.size());
  for (std::size_t k = 0; k < pooled.size(); ++k)
    for (std::size_t j = 0; j < z.size(); ++j) z[j] += pooled[k] * head.w(k, j);
  return z;
}

std::vector<double> softmax(std::span<const double> logits) {
  for (double z : logits)
    if (!std::isfinite(z)) throw Error(ErrorKind::Numeric, "non-finite option logit");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.begin(), logits.end());
  double s = 0.0;
  for (double& x : p) {
    x = std::exp(x - mx);
    s += x;
  }
  for (double& x : p) x /= s;
  return p;
}

std::vector<double> option_probs(std::span<const double> pooled, const PredictorHead& head) {
  return softmax(option_logits(pooled, head));
}

std::vector<double> sample_gumbel(Rng& rng, std::size_t n) {
  std::vector<double> g(n);
  for (double& x : g) x = -std::log(-std::log(uniform_open(rng)));
  return g;
}

std::vector<double> gumbel_weights(std::span<const double> pi, std::span<const double> noise,
                                   double tau) {
  if (pi.size() != noise.size()) throw Error(ErrorKind::Shape, "pi/noise length mismatch");
  Matrix lp(1, pi.size());
  for (std::size_t i = 0; i < pi.size(); ++i) {
    if (!(pi[i] > 0.0)) throw Error(ErrorKind::Numeric, "probability must be positive");
    lp[i] = std::log(pi[i]);
  }
  ag::Tape t(false);
  ag::Var lam = ag::gumbel_weights(t, t.constant(std::move(lp)), noise, tau);
  const Matrix& v = t.value(lam);
  return {v.data(), v.data() + v.size()};
}

OptionDistribution gumbel_weights(std::span<const double> pi, double tau, Rng& rng) {
  OptionDistribution d;
  d.pi.assign(pi.begin(), pi.end());
  d.gumbel_noise = sample_gumbel(rng, pi.size());
  d.lambda = gumbel_weights(pi, d.gumbel_noise, tau);
  return d;
}

int argmax(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorKind::EmptyInput, "argmax of nothing");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return static_cast<int>(best);
}

int select_option(std::span<const double> pooled, const PredictorHead& head) {
  const auto z = option_logits(pooled, head);
  for (double v : z)
    if (!std::isfinite(v)) throw Error(ErrorKind::Numeric, "non-finite option logit");
  return argmax(z);
}

}  // namespace adactx
