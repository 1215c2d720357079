#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Numeric inner-loop kernels with runtime CPU dispatch.
//
// Each kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant. The active backend is chosen once at startup from CPUID
// and can be overridden with the VOCABFORGE_SIMD environment variable
// ("scalar", "avx2" or "auto") or with force_backend().
//
// Reductions accumulate in double regardless of element type. Scalar and
// SIMD backends still differ in summation order, so equivalence tests
// compare them with a small relative tolerance rather than bit-exactly.

namespace vocabforge::kernels {

struct Backend {
  const char* name;
  double (*dot_f32)(const float* a, const float* b, std::size_t n);
  double (*dot_f64_f32)(const double* a, const float* b, std::size_t n);
  double (*dot_f64)(const double* a, const double* b, std::size_t n);
  double (*sumsq_f32)(const float* a, std::size_t n);
  double (*sumsq_f64)(const double* a, std::size_t n);
  double (*sqdist_f64)(const double* a, const double* b, std::size_t n);
  void (*axpy_f64_f32)(double* y, double alpha, const float* x, std::size_t n);
  void (*scale_f32)(float* x, float alpha, std::size_t n);
};

const Backend& scalar_backend();

// Provided by kernels_avx2.cpp (x86-64) or kernels_generic.cpp (stub).
bool avx2_supported();
const Backend& avx2_backend();

const Backend& active();
bool force_backend(std::string_view name);

inline double dot(std::span<const float> a, std::span<const float> b) {
  return active().dot_f32(a.data(), b.data(), a.size());
}
inline double dot(std::span<const double> a, std::span<const float> b) {
  return active().dot_f64_f32(a.data(), b.data(), a.size());
}
inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot_f64(a.data(), b.data(), a.size());
}
inline double sumsq(std::span<const float> a) { return active().sumsq_f32(a.data(), a.size()); }
inline double sumsq(std::span<const double> a) { return active().sumsq_f64(a.data(), a.size()); }
inline double sqdist(std::span<const double> a, std::span<const double> b) {
  return active().sqdist_f64(a.data(), b.data(), a.size());
}
// y += alpha * x
inline void axpy(std::span<double> y, double alpha, std::span<const float> x) {
  active().axpy_f64_f32(y.data(), alpha, x.data(), y.size());
}
inline void scale(std::span<float> x, float alpha) { active().scale_f32(x.data(), alpha, x.size()); }

}  // namespace vocabforge::kernels
