// Copyright (C) 2026 OPLoRA contributors
// SPDX-License-Identifier: Apache-2.0
//

#include "oplora/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "kernels_internal.hpp"
#include "oplora/error.hpp"

namespace oplora::kernels {
namespace {

using detail::KernelTable;

bool backend_supported(Backend backend) {
    switch (backend) {
    case Backend::kScalar:
        return true;
    case Backend::kAvx2:
#if defined(__x86_64__) || defined(__i386__)
        return __builtin_cpu_supports("avx2") != 0;
#else
        return false;
#endif
    case Backend::kNeon:
#if defined(__aarch64__)
        return true;
#else
        return false;
#endif
    }
    return false;
}

const KernelTable& table_for(Backend backend) {
    switch (backend) {
#if defined(__x86_64__) || defined(__i386__)
    case Backend::kAvx2:
        return detail::avx2_table();
#endif
#if defined(__aarch64__)
    case Backend::kNeon:
        return detail::neon_table();
#endif
    default:
        return detail::scalar_table();
    }
}

Backend default_backend() {
    if (const char* env = std::getenv("OPLORA_BACKEND")) {
        if (std::strcmp(env, "scalar") == 0 && backend_supported(Backend::kScalar)) {
            return Backend::kScalar;
        }
        if (std::strcmp(env, "avx2") == 0 && backend_supported(Backend::kAvx2)) {
            return Backend::kAvx2;
        }
        if (std::strcmp(env, "neon") == 0 && backend_supported(Backend::kNeon)) {
            return Backend::kNeon;
        }
        // Unknown or unsupported request in the environment falls through to
        // auto-detection rather than failing process startup.
    }
    if (backend_supported(Backend::kAvx2)) return Backend::kAvx2;
    if (backend_supported(Backend::kNeon)) return Backend::kNeon;
    return Backend::kScalar;
}

struct Dispatch {
    std::atomic<const KernelTable*> table;
    std::atomic<Backend> backend;

    Dispatch() {
        const Backend chosen = default_backend();
        backend.store(chosen, std::memory_order_relaxed);
        table.store(&table_for(chosen), std::memory_order_relaxed);
    }
};

Dispatch& dispatch() {
    static Dispatch instance;
    return instance;
}

const KernelTable& active_table() {
    return *dispatch().table.load(std::memory_order_acquire);
}

} // namespace

const char* backend_name(Backend backend) {
    switch (backend) {
    case Backend::kScalar: return "scalar";
    case Backend::kAvx2: return "avx2";
    case Backend::kNeon: return "neon";
    }
    return "unknown";
}

std::vector<Backend> supported_backends() {
    std::vector<Backend> out{Backend::kScalar};
    if (backend_supported(Backend::kAvx2)) out.push_back(Backend::kAvx2);
    if (backend_supported(Backend::kNeon)) out.push_back(Backend::kNeon);
    return out;
}

Backend active_backend() {
    return dispatch().backend.load(std::memory_order_acquire);
}

void set_backend(Backend backend) {
    if (!backend_supported(backend)) {
        throw ParameterError(std::string("kernel backend not supported on this machine: ") +
                             backend_name(backend));
    }
    dispatch().backend.store(backend, std::memory_order_release);
    dispatch().table.store(&table_for(backend), std::memory_order_release);
}

void add(double* dst, const double* a, const double* b, std::size_t n) {
    active_table().add(dst, a, b, n);
}

void sub(double* dst, const double* a, const double* b, std::size_t n) {
    active_table().sub(dst, a, b, n);
}

void scale(double* dst, const double* a, double s, std::size_t n) {
    active_table().scale(dst, a, s, n);
}

void axpy(double* dst, double alpha, const double* x, std::size_t n) {
    active_table().axpy(dst, alpha, x, n);
}

double dot(const double* x, const double* y, std::size_t n) {
    return active_table().dot(x, y, n);
}

void gemm(double* c, const double* a, const double* b,
          std::size_t m, std::size_t k, std::size_t n) {
    active_table().gemm(c, a, b, m, k, n);
}

} // namespace oplora::kernels
