// Copyright (C) 2026 OPLoRA contributors
// SPDX-License-Identifier: Apache-2.0
//
// NEON kernels (aarch64). Two float64x2_t registers emulate the 4-lane
// stripe layout of the reference dot product; vmulq/vaddq stay unfused to
// match the scalar reference bitwise.

#include "kernels_internal.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

namespace oplora::kernels::detail {
namespace {

void add_neon(double* dst, const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(dst + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    }
    for (; i < n; ++i) dst[i] = a[i] + b[i];
}

void sub_neon(double* dst, const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(dst + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    }
    for (; i < n; ++i) dst[i] = a[i] - b[i];
}

void scale_neon(double* dst, const double* a, double s, std::size_t n) {
    const float64x2_t sv = vdupq_n_f64(s);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(dst + i, vmulq_f64(sv, vld1q_f64(a + i)));
    }
    for (; i < n; ++i) dst[i] = s * a[i];
}

void axpy_neon(double* dst, double alpha, const double* x, std::size_t n) {
    const float64x2_t av = vdupq_n_f64(alpha);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t prod = vmulq_f64(av, vld1q_f64(x + i));
        vst1q_f64(dst + i, vaddq_f64(vld1q_f64(dst + i), prod));
    }
    for (; i < n; ++i) dst[i] += alpha * x[i];
}

double dot_neon(const double* x, const double* y, std::size_t n) {
    float64x2_t acc01 = vdupq_n_f64(0.0); // stripes 0, 1
    float64x2_t acc23 = vdupq_n_f64(0.0); // stripes 2, 3
    const std::size_t main = n - (n % 4);
    for (std::size_t i = 0; i < main; i += 4) {
        acc01 = vaddq_f64(acc01, vmulq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
        acc23 = vaddq_f64(acc23, vmulq_f64(vld1q_f64(x + i + 2), vld1q_f64(y + i + 2)));
    }
    const double s01 = vgetq_lane_f64(acc01, 0) + vgetq_lane_f64(acc01, 1);
    const double s23 = vgetq_lane_f64(acc23, 0) + vgetq_lane_f64(acc23, 1);
    double sum = s01 + s23;
    for (std::size_t i = main; i < n; ++i) sum += x[i] * y[i];
    return sum;
}

void gemm_neon(double* c, const double* a, const double* b,
               std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m * n; ++i) c[i] = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            const float64x2_t av = vdupq_n_f64(aip);
            const double* brow = b + p * n;
            std::size_t j = 0;
            for (; j + 2 <= n; j += 2) {
                const float64x2_t prod = vmulq_f64(av, vld1q_f64(brow + j));
                vst1q_f64(crow + j, vaddq_f64(vld1q_f64(crow + j), prod));
            }
            for (; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

} // namespace

const KernelTable& neon_table() {
    static const KernelTable table{
        add_neon, sub_neon, scale_neon, axpy_neon, dot_neon, gemm_neon,
    };
    return table;
}

} // namespace oplora::kernels::detail

#endif // aarch64
