// Copyright (C) 2026 OPLoRA contributors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "oplora/densela.hpp"
#include "oplora/matrix.hpp"

namespace oplora {

/// Per-layer interference summary across a k-sweep.
struct AlignmentReport {
    std::string layer_name;
    std::vector<std::size_t> k_values;
    std::vector<double> rho;        // aligned with k_values, each in [0, 1]
    std::vector<bool> degenerate;   // sigma_k ~ sigma_{k+1} at that cut
    double update_norm = 0.0;       // ||delta||_F
    double preservation_residual = 0.0; // at the largest swept k
};

/// Fraction of the update's squared Frobenius energy inside the dominant
/// left subspace: ||U_k^T delta||_F^2 / ||delta||_F^2. Throws
/// UndefinedMetricError when ||delta||_F = 0.
double rho_k(const Matrix& w0, const Matrix& delta, std::size_t k,
             SvdMode mode = SvdMode::kExact, const RandomizedSvdOptions& opts = {},
             std::size_t size_cap = kDefaultSvdSizeCap);

/// Double-sided variant ||U_k^T delta V_k||_F^2 / ||delta||_F^2. Extension
/// beyond the single-sided definition above; useful when the update is
/// constrained on both sides.
double rho_k_bilateral(const Matrix& w0, const Matrix& delta, std::size_t k,
                       SvdMode mode = SvdMode::kExact, const RandomizedSvdOptions& opts = {},
                       std::size_t size_cap = kDefaultSvdSizeCap);

inline const std::vector<std::size_t>& default_k_sweep() {
    static const std::vector<std::size_t> sweep{8, 16, 32, 64, 128};
    return sweep;
}

/// Drops sweep entries with k >= min(d_out, d_in); preserves order.
std::vector<std::size_t> clip_k_sweep(const std::vector<std::size_t>& k_values,
                                      std::size_t d_out, std::size_t d_in);

/// One exact SVD of w0, then rho at every requested k (prefix sums over
/// per-direction energies, so the result is monotone in k by construction).
AlignmentReport rho_sweep(const Matrix& w0, const Matrix& delta,
                          std::vector<std::size_t> k_values = default_k_sweep(),
                          const std::string& layer_name = "layer",
                          std::size_t size_cap = kDefaultSvdSizeCap);

/// max_i<=k ||w' v_i - sigma_i u_i||_2 / sigma_1, combined with
/// ||U_k^T w' V_k - Sigma_k||_F / sigma_1 (the larger is returned).
double preservation_check(const Matrix& w0, const Matrix& w_prime, std::size_t k,
                          std::size_t size_cap = kDefaultSvdSizeCap);

/// CSV columns: layer,k,rho,update_norm,preservation_residual,degenerate_flag.
void write_report_csv(const AlignmentReport& report, const std::filesystem::path& path);
std::string report_csv(const AlignmentReport& report);

void write_report_json(const AlignmentReport& report, const std::filesystem::path& path);
std::string report_json(const AlignmentReport& report);

} // namespace oplora
