#include "vocabforge/kernels.hpp"

// Non-x86 builds: no AVX2 backend, dispatch stays on the scalar kernels.
// A NEON variant would slot in here the same way kernels_avx2.cpp does.

namespace vocabforge::kernels {

bool avx2_supported() { return false; }

const Backend& avx2_backend() { return scalar_backend(); }

}  // namespace vocabforge::kernels
