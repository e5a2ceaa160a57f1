// Copyright (C) 2026 OPLoRA contributors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>

namespace oplora::kernels::detail {

struct KernelTable {
    void (*add)(double*, const double*, const double*, std::size_t);
    void (*sub)(double*, const double*, const double*, std::size_t);
    void (*scale)(double*, const double*, double, std::size_t);
    void (*axpy)(double*, double, const double*, std::size_t);
    double (*dot)(const double*, const double*, std::size_t);
    void (*gemm)(double*, const double*, const double*,
                 std::size_t, std::size_t, std::size_t);
};

const KernelTable& scalar_table();

#if defined(__x86_64__) || defined(__i386__)
const KernelTable& avx2_table();
#endif

#if defined(__aarch64__)
const KernelTable& neon_table();
#endif

} // namespace oplora::kernels::detail
