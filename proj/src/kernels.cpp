#include "vocabforge/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace vocabforge::kernels {

namespace {

double sc_dot_f32(const float* a, const float* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

double sc_dot_f64_f32(const double* a, const float* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * static_cast<double>(b[i]);
  return acc;
}

double sc_dot_f64(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sc_sumsq_f32(const float* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * static_cast<double>(a[i]);
  return acc;
}

double sc_sumsq_f64(const double* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * a[i];
  return acc;
}

double sc_sqdist_f64(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

void sc_axpy_f64_f32(double* y, double alpha, const float* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * static_cast<double>(x[i]);
}

void sc_scale_f32(float* x, float alpha, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

constexpr Backend kScalar = {
    "scalar",    sc_dot_f32,   sc_dot_f64_f32,  sc_dot_f64,
    sc_sumsq_f32, sc_sumsq_f64, sc_sqdist_f64,  sc_axpy_f64_f32,
    sc_scale_f32,
};

const Backend* select_default() {
  const char* env = std::getenv("VOCABFORGE_SIMD");
  if (env != nullptr) {
    const std::string_view v(env);
    if (v == "scalar") return &kScalar;
    if (v == "avx2" && avx2_supported()) return &avx2_backend();
    // "auto" or anything unrecognized falls through to detection
  }
  if (avx2_supported()) return &avx2_backend();
  return &kScalar;
}

std::atomic<const Backend*>& active_slot() {
  static std::atomic<const Backend*> slot{select_default()};
  return slot;
}

}  // namespace

const Backend& scalar_backend() { return kScalar; }

const Backend& active() { return *active_slot().load(std::memory_order_relaxed); }

bool force_backend(std::string_view name) {
  if (name == "scalar") {
    active_slot().store(&kScalar, std::memory_order_relaxed);
    return true;
  }
  if (name == "avx2") {
    if (!avx2_supported()) return false;
    active_slot().store(&avx2_backend(), std::memory_order_relaxed);
    return true;
  }
  if (name == "auto") {
    active_slot().store(avx2_supported() ? &avx2_backend() : &kScalar, std::memory_order_relaxed);
    return true;
  }
  return false;
}

}  // namespace vocabforge::kernels
