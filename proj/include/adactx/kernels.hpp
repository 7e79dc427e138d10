#pragma once

#include <cstddef>
#include <optional>
#include <string_view>

// Dense inner-loop kernels. Every entry has a portable scalar reference; an
// AVX2+FMA variant is compiled separately and picked at runtime when the CPU
// supports it. Results agree to rounding, not bitwise.
namespace adactx::kernels {

enum class Isa { Scalar, Avx2 };

std::string_view to_string(Isa isa);
std::optional<Isa> parse_isa(std::string_view name);

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // C[m x n] (+)= A[m x k] * B[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate);
  // C[m x n] (+)= A[m x k] * B[n x k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate);
  // C[m x n] (+)= A[k x m]^T * B[k x n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate);
};

const KernelTable& scalar_table();
// nullptr when the AVX2 translation unit was not built.
const KernelTable* avx2_table();

bool cpu_supports(Isa isa);

// Table used by the library. Chosen on first use: ADACTX_SIMD=scalar|avx2
// overrides, otherwise the widest supported ISA.
const KernelTable& active();

// Forces a table (tests, benchmarks). Throws if the ISA is unavailable.
void select(Isa isa);

}  // namespace adactx::kernels
