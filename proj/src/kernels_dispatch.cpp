#include <atomic>
#include <cstdlib>
#include <string>

#include "adactx/error.hpp"
#include "adactx/kernels.hpp"

namespace adactx::kernels {

#ifndef ADACTX_WITH_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif

std::string_view to_string(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
  }
  return "unknown";
}

std::optional<Isa> parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::Scalar;
  if (name == "avx2") return Isa::Avx2;
  return std::nullopt;
}

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return true;
    case Isa::Avx2:
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
      return avx2_table() != nullptr && __builtin_cpu_supports("avx2") &&
             __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

namespace {

const KernelTable* table_for(Isa isa) {
  if (!cpu_supports(isa)) return nullptr;
  return isa == Isa::Avx2 ? avx2_table() : &scalar_table();
}

const KernelTable* initial_table() {
  if (const char* env = std::getenv("ADACTX_SIMD")) {
    if (auto isa = parse_isa(env)) {
      if (const KernelTable* t = table_for(*isa)) return t;
    }
  }
  if (const KernelTable* t = table_for(Isa::Avx2)) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

void select(Isa isa) {
  const KernelTable* t = table_for(isa);
  if (t == nullptr)
    throw Error(ErrorKind::Config, "kernel ISA not available: " + std::string(to_string(isa)));
  current().store(t, std::memory_order_release);
}

}  // namespace adactx::kernels
