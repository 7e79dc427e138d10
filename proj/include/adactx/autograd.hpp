#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "adactx/tensor.hpp"

// Reverse-mode automatic differentiation over dense matrices.
//
// A Tape records every intermediate produced by the ops below in creation
// order; backward() walks it in reverse. Parameters enter as borrowed leaves
// whose gradients are accumulated into caller-owned sink matrices. A tape
// built with grad disabled records values only.
namespace adactx::ag {

struct Var {
  std::int32_t id = -1;
  bool valid() const noexcept { return id >= 0; }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, Var out)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var constant(Matrix value);
  // `value` must outlive the tape. A null sink makes the leaf constant.
  Var parameter(const Matrix& value, Matrix* grad_sink);

  const Matrix& value(Var v) const;
  // Gradient buffer of v, allocated (zeroed) on first access.
  Matrix& grad(Var v);
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  // Records an op result. `back` runs during backward() if any parent needs grad.
  Var push(Matrix value, std::initializer_list<Var> parents, BackwardFn back);
  Var push(Matrix value, std::span<const Var> parents, BackwardFn back);

  // Seeds d(loss)/d(loss) = seed (loss must be 1 x 1) and back-propagates.
  void backward(Var loss, double seed = 1.0);
  // Back-propagates from gradients already deposited with grad().
  void backward_from_seeded();

 private:
  struct Node {
    Matrix owned;
    const Matrix* borrowed = nullptr;
    Matrix grad;
    Matrix* sink = nullptr;
    BackwardFn back;
    bool needs_grad = false;
  };

  bool grad_enabled_;
  std::vector<Node> nodes_;
};

// ---- elementwise / structural -------------------------------------------
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
// a + row broadcast over rows (row is 1 x cols(a))
Var add_row(Tape& t, Var a, Var row);
Var scale(Tape& t, Var a, double s);
Var add_scalar(Tape& t, Var a, double s);
// a * s where s is a 1 x 1 Var
Var mul_scalar(Tape& t, Var a, Var s);
Var mul(Tape& t, Var a, Var b);
// Single element of a as a 1 x 1 Var.
Var element(Tape& t, Var a, std::size_t r, std::size_t c);
Var concat_cols(Tape& t, std::span<const Var> scalars_or_rows);
Var concat_rows(Tape& t, std::span<const Var> rows);
Var slice_rows(Tape& t, Var a, std::size_t begin, std::size_t end);
Var gather_rows(Tape& t, Var table, std::span<const std::int32_t> ids, double scale = 1.0);
Var sum(Tape& t, Var a);
Var mean(Tape& t, Var a);
// 1 x cols mean over all rows
Var mean_rows(Tape& t, Var a);
// 1 x cols mean over rows where keep[r] is true; throws EmptyInput if none.
Var mean_rows_masked(Tape& t, Var a, std::span<const std::uint8_t> keep);
// sum(a .* b) as 1 x 1
Var dot(Tape& t, Var a, Var b);
// log(max(a, floor)); gradient is zero where the floor is active.
Var log_clamped(Tape& t, Var a, double floor);

// ---- neural ops -----------------------------------------------------------
Var matmul(Tape& t, Var a, Var b);
// x * w + b (b is 1 x out)
Var affine(Tape& t, Var x, Var w, Var b);
Var gelu(Tape& t, Var a);
Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps = 1e-5);
Var softmax_rows(Tape& t, Var a);
Var log_softmax_rows(Tape& t, Var a);
// Inverted dropout with an explicit generator; identity when p == 0.
Var dropout(Tape& t, Var a, double p, std::mt19937_64& rng);

// Fused multi-head scaled dot-product attention on already projected Q/K/V.
// key_keep[j] == 0 removes key j; causal additionally hides keys j > i.
Var attention(Tape& t, Var q, Var k, Var v, std::size_t heads,
              std::span<const std::uint8_t> key_keep, bool causal);

// Mean over rows r with keep[r] of -log softmax(logits[r])[targets[r]].
// Throws EmptyInput when no row is kept.
Var cross_entropy(Tape& t, Var logits, std::span<const std::int32_t> targets,
                  std::span<const std::uint8_t> keep);

}  // namespace adactx::ag
