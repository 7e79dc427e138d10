#include "adactx/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "adactx/error.hpp"
#include "adactx/kernels.hpp"

namespace adactx {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InputTooLong:
      return "input too long";
    case ErrorKind::Vocab:
      return "vocabulary error";
    case ErrorKind::Option:
      return "option error";
    case ErrorKind::Config:
      return "configuration error";
    case ErrorKind::Numeric:
      return "numeric error";
    case ErrorKind::EmptyInput:
      return "empty input";
    case ErrorKind::Parse:
      return "parse error";
    case ErrorKind::Decode:
      return "decode error";
    case ErrorKind::Shape:
      return "shape error";
    case ErrorKind::Io:
      return "i/o error";
  }
  return "error";
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) throw Error(ErrorKind::Shape, "matrix data size mismatch");
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Matrix::resize(std::size_t rows, std::size_t cols, double fill) {
  rows_ = rows;
  cols_ = cols;
  data_.assign(rows * cols, fill);
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void matmul(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  if (a.cols() != b.rows()) throw Error(ErrorKind::Shape, "matmul inner dimension mismatch");
  if (!accumulate || !(c.rows() == a.rows() && c.cols() == b.cols()))
    c.resize(a.rows(), b.cols());
  kernels::active().gemm_nn(a.rows(), b.cols(), a.cols(), a.data(), a.cols(), b.data(), b.cols(),
                            c.data(), c.cols(), accumulate);
}

}  // namespace adactx
