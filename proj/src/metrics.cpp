// Copyright (C) 2026 OPLoRA contributors
// SPDX-License-Identifier: Apache-2.0
//

#include "oplora/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "oplora/error.hpp"
#include "oplora/format.hpp"
#include "oplora/kernels.hpp"

namespace oplora {
namespace {

constexpr double kDegenerateGap = 1e-8; // relative to sigma_1

void check_rho_inputs(const Matrix& w0, const Matrix& delta, std::size_t k) {
    if (!w0.same_shape(delta)) {
        throw DimensionError("rho_k: w0 and delta shapes differ");
    }
    const std::size_t p = std::min(w0.rows(), w0.cols());
    if (k < 1 || k >= p) {
        throw RankError("rho_k: k = " + std::to_string(k) + " outside [1, " +
                        std::to_string(p) + ")");
    }
}

double delta_energy_or_throw(const Matrix& delta) {
    const double energy = kernels::dot(delta.data(), delta.data(), delta.size());
    if (energy == 0.0) {
        throw UndefinedMetricError("rho_k undefined: ||delta||_F = 0");
    }
    return energy;
}

Matrix top_basis(const Matrix& w0, std::size_t k, SvdMode mode,
                 const RandomizedSvdOptions& opts, std::size_t size_cap, bool left) {
    if (mode == SvdMode::kExact) {
        const SvdFactorization f = svd_exact(w0, size_cap);
        return take_columns(left ? f.u : f.v, 0, k);
    }
    const SvdFactorization f = svd_randomized(w0, k, opts);
    return left ? f.u : f.v;
}

} // namespace

double rho_k(const Matrix& w0, const Matrix& delta, std::size_t k,
             SvdMode mode, const RandomizedSvdOptions& opts, std::size_t size_cap) {
    check_rho_inputs(w0, delta, k);
    const double energy = delta_energy_or_throw(delta);
    const Matrix u_k = top_basis(w0, k, mode, opts, size_cap, /*left=*/true);
    const Matrix coeff = transpose_multiply(u_k, delta); // k x d_in
    const double captured = kernels::dot(coeff.data(), coeff.data(), coeff.size());
    return captured / energy;
}

double rho_k_bilateral(const Matrix& w0, const Matrix& delta, std::size_t k,
                       SvdMode mode, const RandomizedSvdOptions& opts,
                       std::size_t size_cap) {
    check_rho_inputs(w0, delta, k);
    const double energy = delta_energy_or_throw(delta);
    Matrix u_k, v_k;
    if (mode == SvdMode::kExact) {
        const SvdFactorization f = svd_exact(w0, size_cap);
        u_k = take_columns(f.u, 0, k);
        v_k = take_columns(f.v, 0, k);
    } else {
        SvdFactorization f = svd_randomized(w0, k, opts);
        u_k = std::move(f.u);
        v_k = std::move(f.v);
    }
    const Matrix core = transpose_multiply(u_k, delta) * v_k; // k x k
    const double captured = kernels::dot(core.data(), core.data(), core.size());
    return captured / energy;
}

std::vector<std::size_t> clip_k_sweep(const std::vector<std::size_t>& k_values,
                                      std::size_t d_out, std::size_t d_in) {
    const std::size_t p = std::min(d_out, d_in);
    std::vector<std::size_t> out;
    for (std::size_t k : k_values) {
        if (k >= 1 && k < p) out.push_back(k);
    }
    return out;
}

AlignmentReport rho_sweep(const Matrix& w0, const Matrix& delta,
                          std::vector<std::size_t> k_values,
                          const std::string& layer_name, std::size_t size_cap) {
    if (!w0.same_shape(delta)) {
        throw DimensionError("rho_sweep: w0 and delta shapes differ");
    }
    const double energy = delta_energy_or_throw(delta);
    k_values = clip_k_sweep(k_values, w0.rows(), w0.cols());
    if (k_values.empty()) {
        throw RankError("rho_sweep: no k value is valid for these dimensions");
    }

    const SvdFactorization f = svd_exact(w0, size_cap);
    const std::size_t kmax = *std::max_element(k_values.begin(), k_values.end());

    // Energy per dominant direction, then prefix sums; monotone in k.
    const Matrix u_top = take_columns(f.u, 0, kmax);
    const Matrix coeff = transpose_multiply(u_top, delta); // kmax x d_in
    std::vector<double> prefix(kmax + 1, 0.0);
    for (std::size_t i = 0; i < kmax; ++i) {
        prefix[i + 1] = prefix[i] + kernels::dot(coeff.row(i), coeff.row(i), coeff.cols());
    }

    AlignmentReport report;
    report.layer_name = layer_name;
    report.k_values = k_values;
    report.update_norm = std::sqrt(energy);
    const double sigma1 = f.sigma.empty() ? 0.0 : f.sigma[0];
    for (std::size_t k : k_values) {
        report.rho.push_back(prefix[k] / energy);
        const bool tie = sigma1 > 0.0 &&
                         (f.sigma[k - 1] - f.sigma[k]) < kDegenerateGap * sigma1;
        report.degenerate.push_back(sigma1 == 0.0 ? true : tie);
    }
    report.preservation_residual = preservation_check(w0, w0 + delta, kmax, size_cap);
    return report;
}

double preservation_check(const Matrix& w0, const Matrix& w_prime, std::size_t k,
                          std::size_t size_cap) {
    if (!w0.same_shape(w_prime)) {
        throw DimensionError("preservation_check: shapes differ");
    }
    const std::size_t p = std::min(w0.rows(), w0.cols());
    if (k < 1 || k >= p) {
        throw RankError("preservation_check: k = " + std::to_string(k) +
                        " outside [1, " + std::to_string(p) + ")");
    }
    const SvdFactorization f = svd_exact(w0, size_cap);
    const double sigma1 = f.sigma[0];
    if (sigma1 == 0.0) {
        throw UndefinedMetricError("preservation_check undefined: w0 is zero");
    }
    const Matrix u_k = take_columns(f.u, 0, k);
    const Matrix v_k = take_columns(f.v, 0, k);

    // max_i ||w' v_i - sigma_i u_i||_2
    const Matrix wv = w_prime * v_k; // d_out x k
    double worst = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < w0.rows(); ++i) {
            const double diff = wv(i, j) - f.sigma[j] * u_k(i, j);
            acc += diff * diff;
        }
        worst = std::max(worst, std::sqrt(acc));
    }

    // ||U_k^T w' V_k - Sigma_k||_F
    Matrix core = transpose_multiply(u_k, wv); // k x k
    for (std::size_t j = 0; j < k; ++j) core(j, j) -= f.sigma[j];
    worst = std::max(worst, core.frobenius_norm());
    return worst / sigma1;
}

std::string report_csv(const AlignmentReport& report) {
    std::ostringstream os;
    os << "layer,k,rho,update_norm,preservation_residual,degenerate_flag\n";
    for (std::size_t i = 0; i < report.k_values.size(); ++i) {
        os << report.layer_name << ',' << report.k_values[i] << ','
           << format_double(report.rho[i]) << ',' << format_double(report.update_norm)
           << ',' << format_double(report.preservation_residual) << ','
           << (report.degenerate[i] ? 1 : 0) << '\n';
    }
    return os.str();
}

void write_report_csv(const AlignmentReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << report_csv(report);
}

std::string report_json(const AlignmentReport& report) {
    nlohmann::json j{
        {"layer", report.layer_name},
        {"k_values", report.k_values},
        {"rho", report.rho},
        {"degenerate", report.degenerate},
        {"update_norm", report.update_norm},
        {"preservation_residual", report.preservation_residual},
    };
    return j.dump(2) + "\n";
}

void write_report_json(const AlignmentReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << report_json(report);
}

} // namespace oplora
