// Copyright (C) 2026 OPLoRA contributors
// SPDX-License-Identifier: Apache-2.0
//

#include "oplora/densela.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oplora/error.hpp"
#include "oplora/kernels.hpp"
#include "oplora/rng.hpp"

namespace oplora {
namespace {

constexpr double kJacobiTol = 1e-15;
constexpr int kJacobiMaxSweeps = 60;

double sign_or_one(double x) {
    return x < 0.0 ? -1.0 : 1.0;
}

/// Orthonormalizes the rows of `m` in place with two MGS passes. Rows whose
/// residual collapses (below `null_threshold` after projection) are replaced
/// by the first standard basis vectors that keep the set orthonormal; the
/// completion is deterministic.
void orthonormalize_rows(Matrix& m, double null_threshold = 1e-10) {
    const std::size_t count = m.rows();
    const std::size_t dim = m.cols();
    std::vector<std::size_t> null_rows;
    for (std::size_t j = 0; j < count; ++j) {
        double* rj = m.row(j);
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t i = 0; i < j; ++i) {
                const double* ri = m.row(i);
                const double proj = kernels::dot(ri, rj, dim);
                kernels::axpy(rj, -proj, ri, dim);
            }
        }
        const double norm = std::sqrt(kernels::dot(rj, rj, dim));
        if (norm > null_threshold) {
            kernels::scale(rj, rj, 1.0 / norm, dim);
        } else {
            std::fill(rj, rj + dim, 0.0);
            null_rows.push_back(j);
        }
    }
    // Complete any null rows from the standard basis.
    std::size_t candidate = 0;
    std::vector<double> work(dim);
    for (std::size_t j : null_rows) {
        for (; candidate < dim; ++candidate) {
            std::fill(work.begin(), work.end(), 0.0);
            work[candidate] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t i = 0; i < count; ++i) {
                    if (i == j) continue;
                    const double* ri = m.row(i);
                    const double proj = kernels::dot(ri, work.data(), dim);
                    kernels::axpy(work.data(), -proj, ri, dim);
                }
            }
            const double norm = std::sqrt(kernels::dot(work.data(), work.data(), dim));
            if (norm > 0.5) {
                kernels::scale(m.row(j), work.data(), 1.0 / norm, dim);
                ++candidate;
                break;
            }
        }
    }
}

/// Largest-magnitude entry of each column of u made nonnegative; v mirrored.
void apply_sign_convention(Matrix& u, Matrix& v) {
    for (std::size_t j = 0; j < u.cols(); ++j) {
        double best = -1.0;
        std::size_t best_i = 0;
        for (std::size_t i = 0; i < u.rows(); ++i) {
            const double mag = std::abs(u(i, j));
            if (mag > best) {
                best = mag;
                best_i = i;
            }
        }
        if (u(best_i, j) < 0.0) {
            for (std::size_t i = 0; i < u.rows(); ++i) u(i, j) = -u(i, j);
            for (std::size_t i = 0; i < v.rows(); ++i) v(i, j) = -v(i, j);
        }
    }
}

} // namespace

const char* svd_mode_name(SvdMode mode) {
    return mode == SvdMode::kExact ? "exact" : "randomized";
}

SvdMode parse_svd_mode(const std::string& name) {
    if (name == "exact") return SvdMode::kExact;
    if (name == "randomized") return SvdMode::kRandomized;
    throw ParameterError("unknown SVD mode: " + name);
}

QrResult qr_decompose(const Matrix& m) {
    const std::size_t rows = m.rows();
    const std::size_t cols = m.cols();
    if (rows < cols) {
        throw DimensionError("qr_decompose: need rows >= cols, got " +
                             std::to_string(rows) + "x" + std::to_string(cols));
    }
    if (!m.all_finite()) {
        throw DataError("qr_decompose: input has non-finite entries");
    }

    Matrix work = m;                         // becomes R in the top block
    Matrix vs(cols, rows);                   // reflector j stored in row j
    std::vector<double> betas(cols, 0.0);

    for (std::size_t j = 0; j < cols; ++j) {
        double normx_sq = 0.0;
        for (std::size_t i = j; i < rows; ++i) normx_sq += work(i, j) * work(i, j);
        const double normx = std::sqrt(normx_sq);
        if (normx == 0.0) continue;          // column already zero below diag

        const double alpha = -sign_or_one(work(j, j)) * normx;
        double* v = vs.row(j);
        for (std::size_t i = j; i < rows; ++i) v[i] = work(i, j);
        v[j] -= alpha;
        double vnorm_sq = 0.0;
        for (std::size_t i = j; i < rows; ++i) vnorm_sq += v[i] * v[i];
        if (vnorm_sq == 0.0) continue;
        betas[j] = 2.0 / vnorm_sq;

        // Apply the reflector to the trailing block.
        for (std::size_t col = j; col < cols; ++col) {
            double proj = 0.0;
            for (std::size_t i = j; i < rows; ++i) proj += v[i] * work(i, col);
            proj *= betas[j];
            for (std::size_t i = j; i < rows; ++i) work(i, col) -= proj * v[i];
        }
        work(j, j) = alpha;                  // exact value, clears rounding residue
        for (std::size_t i = j + 1; i < rows; ++i) work(i, j) = 0.0;
    }

    // Accumulate Q = H_0 ... H_{n-1} applied to the first n identity columns.
    Matrix q(rows, cols);
    for (std::size_t j = 0; j < cols; ++j) q(j, j) = 1.0;
    for (std::size_t j = cols; j-- > 0;) {
        if (betas[j] == 0.0) continue;
        const double* v = vs.row(j);
        for (std::size_t col = 0; col < cols; ++col) {
            double proj = 0.0;
            for (std::size_t i = j; i < rows; ++i) proj += v[i] * q(i, col);
            proj *= betas[j];
            for (std::size_t i = j; i < rows; ++i) q(i, col) -= proj * v[i];
        }
    }

    Matrix r(cols, cols);
    for (std::size_t i = 0; i < cols; ++i) {
        for (std::size_t j = i; j < cols; ++j) r(i, j) = work(i, j);
    }
    // Normalize to a nonnegative diagonal.
    for (std::size_t j = 0; j < cols; ++j) {
        if (r(j, j) < 0.0) {
            for (std::size_t col = j; col < cols; ++col) r(j, col) = -r(j, col);
            for (std::size_t i = 0; i < rows; ++i) q(i, j) = -q(i, j);
        }
    }
    return {std::move(q), std::move(r)};
}

SvdFactorization svd_exact(const Matrix& m, std::size_t size_cap) {
    if (!m.all_finite()) {
        throw DataError("svd_exact: input has non-finite entries");
    }
    if (m.rows() * m.cols() > size_cap) {
        throw SizeCapError("svd_exact: " + std::to_string(m.rows()) + "x" +
                           std::to_string(m.cols()) + " exceeds size cap " +
                           std::to_string(size_cap) + "; use svd_randomized");
    }

    const bool tall = m.rows() >= m.cols();
    const std::size_t p = std::min(m.rows(), m.cols());
    const std::size_t dim = std::max(m.rows(), m.cols());

    // Rows of `w` are the columns of the tall orientation of m; one-sided
    // Jacobi orthogonalizes them, implicitly diagonalizing the p x p Gram
    // matrix of the smaller side.
    Matrix w = tall ? m.transposed() : m;
    Matrix vt = Matrix::identity(p); // row j accumulates right singular vector j

    for (int sweep = 0; sweep < kJacobiMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t a = 0; a + 1 < p; ++a) {
            for (std::size_t b = a + 1; b < p; ++b) {
                double* wa = w.row(a);
                double* wb = w.row(b);
                const double alpha = kernels::dot(wa, wa, dim);
                const double beta = kernels::dot(wb, wb, dim);
                const double gamma = kernels::dot(wa, wb, dim);
                if (gamma == 0.0 || alpha == 0.0 || beta == 0.0) continue;
                if (std::abs(gamma) <= kJacobiTol * std::sqrt(alpha * beta)) continue;

                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = sign_or_one(zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < dim; ++i) {
                    const double x = wa[i];
                    const double y = wb[i];
                    wa[i] = c * x - s * y;
                    wb[i] = s * x + c * y;
                }
                double* va = vt.row(a);
                double* vb = vt.row(b);
                for (std::size_t i = 0; i < p; ++i) {
                    const double x = va[i];
                    const double y = vb[i];
                    va[i] = c * x - s * y;
                    vb[i] = s * x + c * y;
                }
                rotated = true;
            }
        }
        if (!rotated) break;
    }

    std::vector<double> sigma(p);
    for (std::size_t j = 0; j < p; ++j) {
        sigma[j] = std::sqrt(kernels::dot(w.row(j), w.row(j), dim));
    }

    // Sort triples by sigma, descending; stable so ties keep Jacobi order.
    std::vector<std::size_t> order(p);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&sigma](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });

    Matrix ut(p, dim); // row j = left singular vector j of the tall orientation
    Matrix vt_sorted(p, p);
    std::vector<double> sigma_sorted(p);
    double sigma_max = 0.0;
    for (std::size_t j = 0; j < p; ++j) sigma_max = std::max(sigma_max, sigma[j]);
    const double null_threshold = sigma_max * 1e-13 * static_cast<double>(std::max<std::size_t>(p, 1));

    std::vector<std::size_t> null_rows;
    for (std::size_t j = 0; j < p; ++j) {
        const std::size_t src = order[j];
        sigma_sorted[j] = sigma[src];
        std::copy(vt.row(src), vt.row(src) + p, vt_sorted.row(j));
        if (sigma[src] > null_threshold && sigma[src] > 0.0) {
            kernels::scale(ut.row(j), w.row(src), 1.0 / sigma[src], dim);
        } else {
            null_rows.push_back(j); // direction numerically undefined; complete below
        }
    }

    // Deterministic completion of undefined left directions from the
    // standard basis. Rows not yet completed are all-zero, so projecting
    // against every other row is safe.
    if (!null_rows.empty()) {
        std::size_t candidate = 0;
        std::vector<double> work(dim);
        for (std::size_t j : null_rows) {
            for (; candidate < dim; ++candidate) {
                std::fill(work.begin(), work.end(), 0.0);
                work[candidate] = 1.0;
                for (int pass = 0; pass < 2; ++pass) {
                    for (std::size_t i = 0; i < p; ++i) {
                        if (i == j) continue;
                        const double proj = kernels::dot(ut.row(i), work.data(), dim);
                        kernels::axpy(work.data(), -proj, ut.row(i), dim);
                    }
                }
                const double norm = std::sqrt(kernels::dot(work.data(), work.data(), dim));
                if (norm > 0.5) {
                    kernels::scale(ut.row(j), work.data(), 1.0 / norm, dim);
                    ++candidate;
                    break;
                }
            }
        }
    }

    SvdFactorization f;
    f.sigma = std::move(sigma_sorted);
    if (tall) {
        f.u = ut.transposed();        // rows x p
        f.v = vt_sorted.transposed(); // cols x p
    } else {
        f.u = vt_sorted.transposed(); // rows x p
        f.v = ut.transposed();        // cols x p
    }
    apply_sign_convention(f.u, f.v);
    return f;
}

void reorthonormalize_columns(Matrix& m) {
    Matrix t = m.transposed();
    orthonormalize_rows(t);
    m = t.transposed();
}

SvdFactorization svd_randomized(const Matrix& m, std::size_t k,
                                const RandomizedSvdOptions& opts) {
    const std::size_t p = std::min(m.rows(), m.cols());
    if (k < 1 || k > p) {
        throw RankError("svd_randomized: k = " + std::to_string(k) +
                        " outside [1, " + std::to_string(p) + "]");
    }
    if (opts.oversample < 0 || opts.power_iters < 0) {
        throw ParameterError("svd_randomized: oversample and power_iters must be >= 0");
    }
    if (!m.all_finite()) {
        throw DataError("svd_randomized: input has non-finite entries");
    }

    const std::size_t l = std::min(k + static_cast<std::size_t>(opts.oversample), p);

    Xoshiro256pp rng(opts.seed);
    Matrix omega(m.cols(), l);
    fill_gaussian(omega, rng);

    Matrix q = qr_decompose(m * omega).q; // rows x l
    for (int iter = 0; iter < opts.power_iters; ++iter) {
        Matrix z = qr_decompose(transpose_multiply(m, q)).q; // cols x l
        q = qr_decompose(m * z).q;
    }

    const Matrix small = transpose_multiply(q, m); // l x cols
    SvdFactorization inner = svd_exact(small);

    Matrix u_full = q * inner.u; // rows x min(l, cols) = rows x l

    SvdFactorization f;
    f.u = take_columns(u_full, 0, k);
    f.v = take_columns(inner.v, 0, k);
    f.sigma.assign(inner.sigma.begin(), inner.sigma.begin() + static_cast<std::ptrdiff_t>(k));
    f.split = k;
    reorthonormalize_columns(f.u);
    reorthonormalize_columns(f.v);
    apply_sign_convention(f.u, f.v);
    return f;
}

} // namespace oplora
