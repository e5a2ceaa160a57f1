// Copyright (C) 2026 OPLoRA contributors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oplora/matrix.hpp"

namespace oplora {

struct QrResult {
    Matrix q; // rows x cols, orthonormal columns
    Matrix r; // cols x cols, upper triangular, nonnegative diagonal
};

/// Householder QR of a tall matrix (rows >= cols). Signs are normalized so
/// that diag(R) >= 0, which makes the factorization of a full-rank input
/// unique and keeps trivial cases (identity) exact.
QrResult qr_decompose(const Matrix& m);

/// Singular value factorization m = u * diag(sigma) * v^T.
/// u: rows x p, v: cols x p with orthonormal columns; sigma nonincreasing,
/// p = number of retained triples. `split` marks the dominant prefix a
/// caller has designated (0 = none).
struct SvdFactorization {
    Matrix u;
    std::vector<double> sigma;
    Matrix v;
    std::size_t split = 0;
};

enum class SvdMode { kExact, kRandomized };

const char* svd_mode_name(SvdMode mode);
SvdMode parse_svd_mode(const std::string& name); // throws ParameterError

inline constexpr std::size_t kDefaultSvdSizeCap = 4096ULL * 4096ULL;

/// Full SVD via one-sided Jacobi applied on the smaller-dimension Gram side.
/// Left singular vectors are sign-normalized (largest-magnitude entry
/// nonnegative, first such index on ties) with v adjusted to match.
/// Throws SizeCapError when rows*cols exceeds size_cap, DataError on
/// non-finite input.
SvdFactorization svd_exact(const Matrix& m, std::size_t size_cap = kDefaultSvdSizeCap);

struct RandomizedSvdOptions {
    int oversample = 8;
    int power_iters = 2;
    std::uint64_t seed = 0;
};

/// Truncated SVD via a Gaussian range finder with power iteration
/// (re-orthonormalized between passes), then an exact SVD of the projected
/// small matrix. Returns exactly k triples; the oversampled directions are
/// dropped after truncation. Approximation quality tracks sigma_{k+1}
/// (Eckart-Young yardstick): with power_iters = 2 the leading subspace is
/// accurate when the spectrum decays past index k, and only then.
SvdFactorization svd_randomized(const Matrix& m, std::size_t k,
                                const RandomizedSvdOptions& opts = {});

/// Two passes of modified Gram-Schmidt over the columns, in place. Columns
/// that vanish are replaced by a deterministic orthonormal completion.
void reorthonormalize_columns(Matrix& m);

} // namespace oplora
