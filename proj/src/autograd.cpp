#include "adactx/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "adactx/error.hpp"
#include "adactx/kernels.hpp"

namespace adactx::ag {

// ---- tape -----------------------------------------------------------------

Var Tape::constant(Matrix value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::parameter(const Matrix& value, Matrix* grad_sink) {
  Node n;
  n.borrowed = &value;
  n.sink = grad_enabled_ ? grad_sink : nullptr;
  n.needs_grad = n.sink != nullptr;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

const Matrix& Tape::value(Var v) const {
  const Node& n = nodes_[v.id];
  return n.borrowed != nullptr ? *n.borrowed : n.owned;
}

Matrix& Tape::grad(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.empty()) {
    const Matrix& val = n.borrowed != nullptr ? *n.borrowed : n.owned;
    n.grad.resize(val.rows(), val.cols());
  }
  return n.grad;
}

Var Tape::push(Matrix value, std::initializer_list<Var> parents, BackwardFn back) {
  return push(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
              std::move(back));
}

Var Tape::push(Matrix value, std::span<const Var> parents, BackwardFn back) {
  Node n;
  n.owned = std::move(value);
  if (grad_enabled_) {
    n.needs_grad = std::any_of(parents.begin(), parents.end(),
                               [&](Var p) { return nodes_[p.id].needs_grad; });
    if (n.needs_grad) n.back = std::move(back);
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

void Tape::backward(Var loss, double seed) {
  const Matrix& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) throw Error(ErrorKind::Shape, "backward needs a scalar");
  if (!grad_enabled_) throw Error(ErrorKind::Config, "backward on a tape without gradients");
  grad(loss)(0, 0) += seed;
  backward_from_seeded();
}

void Tape::backward_from_seeded() {
  if (!grad_enabled_) throw Error(ErrorKind::Config, "backward on a tape without gradients");
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.sink != nullptr) {
      double* s = n.sink->data();
      const double* g = n.grad.data();
      for (std::size_t j = 0; j < n.sink->size(); ++j) s[j] += g[j];
    }
    if (n.back) n.back(*this, Var{static_cast<std::int32_t>(i)});
  }
}

namespace {

void require_same(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) throw Error(ErrorKind::Shape, std::string(op) + ": shape mismatch");
}

void add_into(Matrix& dst, const Matrix& src, double s = 1.0) {
  double* d = dst.data();
  const double* x = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s * x[i];
}

Matrix scalar_matrix(double v) { return Matrix(1, 1, v); }

}  // namespace

// ---- elementwise / structural ----------------------------------------------

Var add(Tape& t, Var a, Var b) {
  require_same(t.value(a), t.value(b), "add");
  Matrix out = t.value(a);
  add_into(out, t.value(b));
  return t.push(std::move(out), {a, b}, [a, b](Tape& tp, Var o) {
    if (tp.needs_grad(a)) add_into(tp.grad(a), tp.grad(o));
    if (tp.needs_grad(b)) add_into(tp.grad(b), tp.grad(o));
  });
}

Var sub(Tape& t, Var a, Var b) {
  require_same(t.value(a), t.value(b), "sub");
  Matrix out = t.value(a);
  add_into(out, t.value(b), -1.0);
  return t.push(std::move(out), {a, b}, [a, b](Tape& tp, Var o) {
    if (tp.needs_grad(a)) add_into(tp.grad(a), tp.grad(o));
    if (tp.needs_grad(b)) add_into(tp.grad(b), tp.grad(o), -1.0);
  });
}

Var add_row(Tape& t, Var a, Var row) {
  const Matrix& av = t.value(a);
  const Matrix& rv = t.value(row);
  if (rv.rows() != 1 || rv.cols() != av.cols()) throw Error(ErrorKind::Shape, "add_row");
  Matrix out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    kernels::active().axpy(1.0, rv.data(), out.row(r).data(), out.cols());
  return t.push(std::move(out), {a, row}, [a, row](Tape& tp, Var o) {
    const Matrix& g = tp.grad(o);
    if (tp.needs_grad(a)) add_into(tp.grad(a), g);
    if (tp.needs_grad(row)) {
      Matrix& gr = tp.grad(row);
      for (std::size_t r = 0; r < g.rows(); ++r)
        kernels::active().axpy(1.0, g.row(r).data(), gr.data(), g.cols());
    }
  });
}

Var scale(Tape& t, Var a, double s) {
  Matrix out = t.value(a);
  for (double& x : out.flat()) x *= s;
  return t.push(std::move(out), {a}, [a, s](Tape& tp, Var o) { add_into(tp.grad(a), tp.grad(o), s); });
}

Var add_scalar(Tape& t, Var a, double s) {
  Matrix out = t.value(a);
  for (double& x : out.flat()) x += s;
  return t.push(std::move(out), {a}, [a](Tape& tp, Var o) { add_into(tp.grad(a), tp.grad(o)); });
}

Var mul_scalar(Tape& t, Var a, Var s) {
  const Matrix& sv = t.value(s);
  if (sv.size() != 1) throw Error(ErrorKind::Shape, "mul_scalar needs a 1 x 1 factor");
  const double f = sv[0];
  Matrix out = t.value(a);
  for (double& x : out.flat()) x *= f;
  return t.push(std::move(out), {a, s}, [a, s](Tape& tp, Var o) {
    const Matrix& g = tp.grad(o);
    if (tp.needs_grad(a)) add_into(tp.grad(a), g, tp.value(s)[0]);
    if (tp.needs_grad(s)) {
      const Matrix& av = tp.value(a);
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * av[i];
      tp.grad(s)[0] += acc;
    }
  });
}

Var mul(Tape& t, Var a, Var b) {
  require_same(t.value(a), t.value(b), "mul");
  Matrix out = t.value(a);
  const Matrix& bv = t.value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return t.push(std::move(out), {a, b}, [a, b](Tape& tp, Var o) {
    const Matrix& g = tp.grad(o);
    if (tp.needs_grad(a)) {
      Matrix& ga = tp.grad(a);
      const Matrix& bv2 = tp.value(b);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
    }
    if (tp.needs_grad(b)) {
      Matrix& gb = tp.grad(b);
      const Matrix& av = tp.value(a);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var element(Tape& t, Var a, std::size_t r, std::size_t c) {
  const Matrix& av = t.value(a);
  if (r >= av.rows() || c >= av.cols()) throw Error(ErrorKind::Shape, "element out of range");
  return t.push(scalar_matrix(av(r, c)), {a},
                [a, r, c](Tape& tp, Var o) { tp.grad(a)(r, c) += tp.grad(o)[0]; });
}

Var concat_cols(Tape& t, std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorKind::Shape, "concat_cols of nothing");
  const std::size_t rows = t.value(parts[0]).rows();
  std::size_t cols = 0;
  for (Var p : parts) {
    if (t.value(p).rows() != rows) throw Error(ErrorKind::Shape, "concat_cols row mismatch");
    cols += t.value(p).cols();
  }
  Matrix out(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    const Matrix& pv = t.value(p);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(pv.row(r).begin(), pv.row(r).end(), out.row(r).begin() + off);
    off += pv.cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return t.push(std::move(out), parts, [ps](Tape& tp, Var o) {
    const Matrix& g = tp.grad(o);
    std::size_t off2 = 0;
    for (Var p : ps) {
      const std::size_t pc = tp.value(p).cols();
      if (tp.needs_grad(p)) {
        Matrix& gp = tp.grad(p);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < pc; ++c) gp(r, c) += g(r, off2 + c);
      }
      off2 += pc;
    }
  });
}

Var concat_rows(Tape& t, std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorKind::Shape, "concat_rows of nothing");
  const std::size_t cols = t.value(parts[0]).cols();
  std::size_t rows = 0;
  for (Var p : parts) {
    if (t.value(p).cols() != cols) throw Error(ErrorKind::Shape, "concat_rows col mismatch");
    rows += t.value(p).rows();
  }
  Matrix out(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    const Matrix& pv = t.value(p);
    std::copy(pv.flat().begin(), pv.flat().end(), out.data() + off * cols);
    off += pv.rows();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return t.push(std::move(out), parts, [ps](Tape& tp, Var o) {
    const Matrix& g = tp.grad(o);
    std::size_t off2 = 0;
    for (Var p : ps) {
      const std::size_t n = tp.value(p).size();
      if (tp.needs_grad(p)) {
        Matrix& gp = tp.grad(p);
        for (std::size_t i = 0; i < n; ++i) gp[i] += g[off2 + i];
      }
      off2 += n;
    }
  });
}

Var slice_rows(Tape& t, Var a, std::size_t begin, std::size_t end) {
  const Matrix& av = t.value(a);
  if (begin > end || end > av.rows()) throw Error(ErrorKind::Shape, "slice_rows out of range");
  Matrix out(end - begin, av.cols());
  std::copy(av.data() + begin * av.cols(), av.data() + end * av.cols(), out.data());
  return t.push(std::move(out), {a}, [a, begin](Tape& tp, Var o) {
    const Matrix& g = tp.grad(o);
    Matrix& ga = tp.grad(a);
    const std::size_t off = begin * ga.cols();
    for (std::size_t i = 0; i < g.size(); ++i) ga[off + i] += g[i];
  });
}

Var gather_rows(Tape& t, Var table, std::span<const std::int32_t> ids, double s) {
  const Matrix& tv = t.value(table);
  Matrix out(ids.size(), tv.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const auto id = ids[r];
    if (id < 0 || static_cast<std::size_t>(id) >= tv.rows())
      throw Error(ErrorKind::Vocab, "id " + std::to_string(id) + " outside table of " +
                                        std::to_string(tv.rows()));
    for (std::size_t c = 0; c < tv.cols(); ++c) out(r, c) = s * tv(id, c);
  }
  std::vector<std::int32_t> idv(ids.begin(), ids.end());
  return t.push(std::move(out), {table}, [table, idv, s](Tape& tp, Var o) {
    const Matrix& g = tp.grad(o);
    Matrix& gt = tp.grad(table);
    for (std::size_t r = 0; r < idv.size(); ++r)
      kernels::active().axpy(s, g.row(r).data(), gt.row(idv[r]).data(), g.cols());
  });
}

Var sum(Tape& t, Var a) {
  double s = 0.0;
  for (double x : t.value(a).flat()) s += x;
  return t.push(scalar_matrix(s), {a}, [a](Tape& tp, Var o) {
    const double g = tp.grad(o)[0];
    for (double& x : tp.grad(a).flat()) x += g;
  });
}

Var mean(Tape& t, Var a) {
  const double n = static_cast<double>(t.value(a).size());
  return scale(t, sum(t, a), 1.0 / n);
}

Var mean_rows(Tape& t, Var a) {
  const std::size_t rows = t.value(a).rows();
  std::vector<std::uint8_t> keep(rows, 1);
  return mean_rows_masked(t, a, keep);
}

Var mean_rows_masked(Tape& t, Var a, std::span<const std::uint8_t> keep) {
  const Matrix& av = t.value(a);
  if (keep.size() != av.rows()) throw Error(ErrorKind::Shape, "mean_rows mask length");
  std::size_t count = 0;
  Matrix out(1, av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    if (!keep[r]) continue;
    ++count;
    for (std::size_t c = 0; c < av.cols(); ++c) out(0, c) += av(r, c);
  }
  if (count == 0) throw Error(ErrorKind::EmptyInput, "mean over zero rows");
  const double inv = 1.0 / static_cast<double>(count);
  for (double& x : out.flat()) x *= inv;
  std::vector<std::uint8_t> kv(keep.begin(), keep.end());
  return t.push(std::move(out), {a}, [a, kv, inv](Tape& tp, Var o) {
    const Matrix& g = tp.grad(o);
    Matrix& ga = tp.grad(a);
    for (std::size_t r = 0; r < ga.rows(); ++r)
      if (kv[r])
        for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += inv * g(0, c);
  });
}

Var dot(Tape& t, Var a, Var b) {
  require_same(t.value(a), t.value(b), "dot");
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  return t.push(scalar_matrix(s), {a, b}, [a, b](Tape& tp, Var o) {
    const double g = tp.grad(o)[0];
    if (tp.needs_grad(a)) add_into(tp.grad(a), tp.value(b), g);
    if (tp.needs_grad(b)) add_into(tp.grad(b), tp.value(a), g);
  });
}

Var log_clamped(Tape& t, Var a, double floor) {
  Matrix out = t.value(a);
  for (double& x : out.flat()) x = std::log(std::max(x, floor));
  return t.push(std::move(out), {a}, [a, floor](Tape& tp, Var o) {
    const Matrix& g = tp.grad(o);
    const Matrix& av = tp.value(a);
    Matrix& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (av[i] > floor) ga[i] += g[i] / av[i];
  });
}

// ---- neural ops -------------------------------------------------------------

namespace {

// dA += dC * B^T ; dB += A^T * dC for C = A * B
void matmul_backward(Tape& tp, Var a, Var b, Var o) {
  const Matrix& g = tp.grad(o);
  const Matrix& av = tp.value(a);
  const Matrix& bv = tp.value(b);
  const auto& k = kernels::active();
  const std::size_t m = av.rows(), inner = av.cols(), n = bv.cols();
  if (tp.needs_grad(a))
    k.gemm_nt(m, inner, n, g.data(), n, bv.data(), n, tp.grad(a).data(), inner, true);
  if (tp.needs_grad(b))
    k.gemm_tn(inner, n, m, av.data(), inner, g.data(), n, tp.grad(b).data(), n, true);
}

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  Matrix out;
  adactx::matmul(t.value(a), t.value(b), out);
  return t.push(std::move(out), {a, b}, [a, b](Tape& tp, Var o) { matmul_backward(tp, a, b, o); });
}

Var affine(Tape& t, Var x, Var w, Var b) {
  const Matrix& bv = t.value(b);
  Matrix out;
  adactx::matmul(t.value(x), t.value(w), out);
  if (bv.rows() != 1 || bv.cols() != out.cols()) throw Error(ErrorKind::Shape, "affine bias");
  for (std::size_t r = 0; r < out.rows(); ++r)
    kernels::active().axpy(1.0, bv.data(), out.row(r).data(), out.cols());
  return t.push(std::move(out), {x, w, b}, [x, w, b](Tape& tp, Var o) {
    matmul_backward(tp, x, w, o);
    if (tp.needs_grad(b)) {
      const Matrix& g = tp.grad(o);
      Matrix& gb = tp.grad(b);
      for (std::size_t r = 0; r < g.rows(); ++r)
        kernels::active().axpy(1.0, g.row(r).data(), gb.data(), g.cols());
    }
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(Tape& t, Var a) {
  Matrix out = t.value(a);
  for (double& x : out.flat()) {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    x = 0.5 * x * (1.0 + std::tanh(u));
  }
  return t.push(std::move(out), {a}, [a](Tape& tp, Var o) {
    const Matrix& g = tp.grad(o);
    const Matrix& av = tp.value(a);
    Matrix& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = av[i];
      const double u = kGeluC * (x + kGeluA * x * x * x);
      const double th = std::tanh(u);
      const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
      ga[i] += g[i] * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du);
    }
  });
}

Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps) {
  const Matrix& xv = t.value(x);
  const Matrix& gv = t.value(gain);
  const Matrix& bv = t.value(bias);
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (gv.size() != cols || bv.size() != cols) throw Error(ErrorKind::Shape, "layer_norm params");
  Matrix out(rows, cols);
  Matrix xhat(rows, cols);
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += xv(r, c);
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = xv(r, c) - mu;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < cols; ++c) {
      const double h = (xv(r, c) - mu) * is;
      xhat(r, c) = h;
      out(r, c) = gv[c] * h + bv[c];
    }
  }
  return t.push(std::move(out), {x, gain, bias},
                [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tp,
                                                                                      Var o) {
                  const Matrix& g = tp.grad(o);
                  const Matrix& gv2 = tp.value(gain);
                  const std::size_t rows2 = g.rows(), cols2 = g.cols();
                  if (tp.needs_grad(gain) || tp.needs_grad(bias)) {
                    Matrix& gg = tp.grad(gain);
                    Matrix& gb = tp.grad(bias);
                    for (std::size_t r = 0; r < rows2; ++r)
                      for (std::size_t c = 0; c < cols2; ++c) {
                        gg[c] += g(r, c) * xhat(r, c);
                        gb[c] += g(r, c);
                      }
                  }
                  if (tp.needs_grad(x)) {
                    Matrix& gx = tp.grad(x);
                    const double n = static_cast<double>(cols2);
                    for (std::size_t r = 0; r < rows2; ++r) {
                      double mean_d = 0.0, mean_dx = 0.0;
                      for (std::size_t c = 0; c < cols2; ++c) {
                        const double d = g(r, c) * gv2[c];
                        mean_d += d;
                        mean_dx += d * xhat(r, c);
                      }
                      mean_d /= n;
                      mean_dx /= n;
                      for (std::size_t c = 0; c < cols2; ++c) {
                        const double d = g(r, c) * gv2[c];
                        gx(r, c) += inv_std[r] * (d - mean_d - xhat(r, c) * mean_dx);
                      }
                    }
                  }
                });
}

namespace {

void softmax_row_inplace(std::span<double> row) {
  const double mx = *std::max_element(row.begin(), row.end());
  double s = 0.0;
  for (double& x : row) {
    x = std::exp(x - mx);
    s += x;
  }
  for (double& x : row) x /= s;
}

}  // namespace

Var softmax_rows(Tape& t, Var a) {
  Matrix out = t.value(a);
  for (std::size_t r = 0; r < out.rows(); ++r) softmax_row_inplace(out.row(r));
  return t.push(std::move(out), {a}, [a](Tape& tp, Var o) {
    const Matrix& g = tp.grad(o);
    const Matrix& p = tp.value(o);
    Matrix& ga = tp.grad(a);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) s += g(r, c) * p(r, c);
      for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) += p(r, c) * (g(r, c) - s);
    }
  });
}

Var log_softmax_rows(Tape& t, Var a) {
  Matrix out = t.value(a);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double x : row) s += std::exp(x - mx);
    const double lse = mx + std::log(s);
    for (double& x : row) x -= lse;
  }
  return t.push(std::move(out), {a}, [a](Tape& tp, Var o) {
    const Matrix& g = tp.grad(o);
    const Matrix& lp = tp.value(o);
    Matrix& ga = tp.grad(a);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) s += g(r, c);
      for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) += g(r, c) - std::exp(lp(r, c)) * s;
    }
  });
}

Var dropout(Tape& t, Var a, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return a;
  if (p >= 1.0) throw Error(ErrorKind::Config, "dropout probability must be < 1");
  Matrix mask(t.value(a).rows(), t.value(a).cols());
  const double keep_scale = 1.0 / (1.0 - p);
  for (double& m : mask.flat()) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    m = u < p ? 0.0 : keep_scale;
  }
  Matrix out = t.value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return t.push(std::move(out), {a}, [a, mask = std::move(mask)](Tape& tp, Var o) {
    const Matrix& g = tp.grad(o);
    Matrix& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
  });
}

Var attention(Tape& t, Var q, Var k, Var v, std::size_t heads,
              std::span<const std::uint8_t> key_keep, bool causal) {
  const Matrix& qv = t.value(q);
  const Matrix& kv = t.value(k);
  const Matrix& vv = t.value(v);
  const std::size_t sq = qv.rows(), sk = kv.rows(), d = qv.cols();
  if (kv.cols() != d || vv.cols() != d || vv.rows() != sk || heads == 0 || d % heads != 0)
    throw Error(ErrorKind::Shape, "attention operand shapes");
  if (key_keep.size() != sk) throw Error(ErrorKind::Shape, "attention key mask length");
  const std::size_t dh = d / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto& kt = kernels::active();

  // probs[h] is sq x sk
  std::vector<Matrix> probs(heads, Matrix(sq, sk));
  Matrix out(sq, d);
  for (std::size_t h = 0; h < heads; ++h) {
    Matrix& p = probs[h];
    kt.gemm_nt(sq, sk, dh, qv.data() + h * dh, d, kv.data() + h * dh, d, p.data(), sk, false);
    for (std::size_t i = 0; i < sq; ++i) {
      auto row = p.row(i);
      const std::size_t limit = causal ? std::min(sk, i + 1) : sk;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < limit; ++j)
        if (key_keep[j]) mx = std::max(mx, row[j] * sc);
      if (!std::isfinite(mx)) throw Error(ErrorKind::EmptyInput, "attention row has no keys");
      double s = 0.0;
      for (std::size_t j = 0; j < sk; ++j) {
        if (j < limit && key_keep[j]) {
          row[j] = std::exp(row[j] * sc - mx);
          s += row[j];
        } else {
          row[j] = 0.0;
        }
      }
      const double inv = 1.0 / s;
      for (double& x : row) x *= inv;
    }
    kt.gemm_nn(sq, dh, sk, p.data(), sk, vv.data() + h * dh, d, out.data() + h * dh, d, false);
  }

  return t.push(std::move(out), {q, k, v},
                [q, k, v, heads, dh, sc, probs = std::move(probs)](Tape& tp, Var o) {
                  const Matrix& g = tp.grad(o);
                  const Matrix& qv2 = tp.value(q);
                  const Matrix& kv2 = tp.value(k);
                  const Matrix& vv2 = tp.value(v);
                  const std::size_t sq2 = qv2.rows(), sk2 = kv2.rows(), d2 = qv2.cols();
                  const auto& kk = kernels::active();
                  Matrix* gq = tp.needs_grad(q) ? &tp.grad(q) : nullptr;
                  Matrix* gk = tp.needs_grad(k) ? &tp.grad(k) : nullptr;
                  Matrix* gv = tp.needs_grad(v) ? &tp.grad(v) : nullptr;
                  Matrix dp(sq2, sk2);
                  for (std::size_t h = 0; h < heads; ++h) {
                    const Matrix& p = probs[h];
                    if (gv != nullptr)
                      kk.gemm_tn(sk2, dh, sq2, p.data(), sk2, g.data() + h * dh, d2,
                                 gv->data() + h * dh, d2, true);
                    if (gq == nullptr && gk == nullptr) continue;
                    kk.gemm_nt(sq2, sk2, dh, g.data() + h * dh, d2, vv2.data() + h * dh, d2,
                               dp.data(), sk2, false);
                    for (std::size_t i = 0; i < sq2; ++i) {
                      auto prow = p.row(i);
                      auto drow = dp.row(i);
                      double s = 0.0;
                      for (std::size_t j = 0; j < sk2; ++j) s += prow[j] * drow[j];
                      for (std::size_t j = 0; j < sk2; ++j) drow[j] = prow[j] * (drow[j] - s) * sc;
                    }
                    if (gq != nullptr)
                      kk.gemm_nn(sq2, dh, sk2, dp.data(), sk2, kv2.data() + h * dh, d2,
                                 gq->data() + h * dh, d2, true);
                    if (gk != nullptr)
                      kk.gemm_tn(sk2, dh, sq2, dp.data(), sk2, qv2.data() + h * dh, d2,
                                 gk->data() + h * dh, d2, true);
                  }
                });
}

Var cross_entropy(Tape& t, Var logits, std::span<const std::int32_t> targets,
                  std::span<const std::uint8_t> keep) {
  const Matrix& lv = t.value(logits);
  if (targets.size() != lv.rows() || keep.size() != lv.rows())
    throw Error(ErrorKind::Shape, "cross_entropy targets/mask length");
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < lv.rows(); ++r)
    if (keep[r]) rows.push_back(r);
  if (rows.empty()) throw Error(ErrorKind::EmptyInput, "no scored positions");
  const std::size_t v = lv.cols();
  Matrix probs(rows.size(), v);
  std::vector<std::int32_t> tg(rows.size());
  double total = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    const auto tid = targets[r];
    if (tid < 0 || static_cast<std::size_t>(tid) >= v)
      throw Error(ErrorKind::Vocab, "target id " + std::to_string(tid) + " outside vocabulary");
    tg[i] = tid;
    auto src = lv.row(r);
    auto pr = probs.row(i);
    std::copy(src.begin(), src.end(), pr.begin());
    const double mx = *std::max_element(pr.begin(), pr.end());
    double s = 0.0;
    for (double& x : pr) {
      x = std::exp(x - mx);
      s += x;
    }
    total += mx + std::log(s) - src[tid];
    for (double& x : pr) x /= s;
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  return t.push(scalar_matrix(total * inv), {logits},
                [logits, rows = std::move(rows), tg = std::move(tg), probs = std::move(probs),
                 inv](Tape& tp, Var o) {
                  const double g = tp.grad(o)[0] * inv;
                  Matrix& gl = tp.grad(logits);
                  for (std::size_t i = 0; i < rows.size(); ++i) {
                    auto gr = gl.row(rows[i]);
                    auto pr = probs.row(i);
                    for (std::size_t c = 0; c < gr.size(); ++c) gr[c] += g * pr[c];
                    gr[tg[i]] -= g;
                  }
                });
}

}  // namespace adactx::ag
