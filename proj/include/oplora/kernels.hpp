// Copyright (C) 2026 OPLoRA contributors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace oplora::kernels {

/// Available kernel backends. Scalar is the reference implementation; SIMD
/// backends must produce bitwise-identical results (see contract below).
enum class Backend {
    kScalar,
    kAvx2,
    kNeon,
};

const char* backend_name(Backend backend);

/// Backends usable on this machine (always contains kScalar).
std::vector<Backend> supported_backends();

/// Currently selected backend. The first query resolves the default: the
/// OPLORA_BACKEND environment variable ("scalar", "avx2", "neon") if set,
/// otherwise the widest supported SIMD backend.
Backend active_backend();

/// Selects a backend explicitly; throws ParameterError if unsupported here.
void set_backend(Backend backend);

// Kernel contract: every backend evaluates the same floating-point
// expression tree as the scalar reference.
//   - element-wise kernels (add/sub/scale/axpy) round per element;
//   - gemm accumulates each output element over p in index order as
//     c += a*b with separate multiply and add (no FMA contraction);
//   - dot uses a fixed 4-way striped accumulation: lane l sums indices
//     congruent to l mod 4, lanes combine as (l0+l1)+(l2+l3), then the
//     remainder tail is added sequentially.
// Equivalence across backends is therefore bitwise, and the test suite
// checks it with memcmp.

/// dst[i] = a[i] + b[i]
void add(double* dst, const double* a, const double* b, std::size_t n);

/// dst[i] = a[i] - b[i]
void sub(double* dst, const double* a, const double* b, std::size_t n);

/// dst[i] = s * a[i]
void scale(double* dst, const double* a, double s, std::size_t n);

/// dst[i] += alpha * x[i]
void axpy(double* dst, double alpha, const double* x, std::size_t n);

/// 4-way striped dot product of x and y.
double dot(const double* x, const double* y, std::size_t n);

/// C (m x n, row-major) = A (m x k) * B (k x n); overwrites C.
void gemm(double* c, const double* a, const double* b,
          std::size_t m, std::size_t k, std::size_t n);

} // namespace oplora::kernels
