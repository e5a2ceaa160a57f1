// Copyright (C) 2026 OPLoRA contributors
// SPDX-License-Identifier: Apache-2.0
//
// Reference kernels. These define the exact floating-point semantics the
// SIMD backends must reproduce bit for bit.

#include "kernels_internal.hpp"

namespace oplora::kernels::detail {
namespace {

void add_scalar(double* dst, const double* a, const double* b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] + b[i];
}

void sub_scalar(double* dst, const double* a, const double* b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] - b[i];
}

void scale_scalar(double* dst, const double* a, double s, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = s * a[i];
}

void axpy_scalar(double* dst, double alpha, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] += alpha * x[i];
}

double dot_scalar(const double* x, const double* y, std::size_t n) {
    // 4-way striped accumulation; see the contract in kernels.hpp.
    double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
    const std::size_t main = n - (n % 4);
    for (std::size_t i = 0; i < main; i += 4) {
        acc0 += x[i] * y[i];
        acc1 += x[i + 1] * y[i + 1];
        acc2 += x[i + 2] * y[i + 2];
        acc3 += x[i + 3] * y[i + 3];
    }
    double sum = (acc0 + acc1) + (acc2 + acc3);
    for (std::size_t i = main; i < n; ++i) sum += x[i] * y[i];
    return sum;
}

void gemm_scalar(double* c, const double* a, const double* b,
                 std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m * n; ++i) c[i] = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += aip * brow[j];
            }
        }
    }
}

} // namespace

const KernelTable& scalar_table() {
    static const KernelTable table{
        add_scalar, sub_scalar, scale_scalar, axpy_scalar, dot_scalar, gemm_scalar,
    };
    return table;
}

} // namespace oplora::kernels::detail
