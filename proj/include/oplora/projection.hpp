// Copyright (C) 2026 OPLoRA contributors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <filesystem>

#include "oplora/densela.hpp"
#include "oplora/matrix.hpp"

namespace oplora {

/// Factored pair of complement projectors P_L = I - U_k U_k^T and
/// P_R = I - V_k V_k^T. Only the bases are stored; the dense projectors are
/// never materialized outside test oracles. Immutable after construction.
struct ProjectorPair {
    Matrix u_k; // d_out x k, orthonormal columns
    Matrix v_k; // d_in x k, orthonormal columns
    SvdMode mode = SvdMode::kExact;
    int oversample = 0;                   // provenance (randomized mode)
    int power_iters = 0;                  // provenance (randomized mode)
    std::uint64_t seed = 0;               // provenance (randomized mode)
    std::uint64_t source_fingerprint = 0; // fingerprint of the W0 the bases came from

    std::size_t k() const { return u_k.cols(); }
    std::size_t d_out() const { return u_k.rows(); }
    std::size_t d_in() const { return v_k.rows(); }
};

/// Top-k singular bases of w0, exact or randomized per mode. When the
/// spectrum is degenerate at the cut (sigma_k ~ sigma_{k+1}) the preserved
/// subspace is whichever basis the SVD returned.
ProjectorPair build_projectors(const Matrix& w0, std::size_t k, SvdMode mode,
                               const RandomizedSvdOptions& opts = {},
                               std::size_t size_cap = kDefaultSvdSizeCap);

/// m - basis * (basis^T * m): complement projection applied from the left.
Matrix complement_left(const Matrix& basis, const Matrix& m);

/// m - (m * basis) * basis^T: complement projection applied from the right.
Matrix complement_right(const Matrix& m, const Matrix& basis);

/// P_L * m for m with d_out rows.
Matrix apply_left(const ProjectorPair& p, const Matrix& m);

/// m * P_R for m with d_in columns.
Matrix apply_right(const ProjectorPair& p, const Matrix& m);

/// Q_k * m = U_k (U_k^T m), the energy inside the dominant subspace.
Matrix project_onto_topk(const ProjectorPair& p, const Matrix& m);

/// Writes u_k.oplr, v_k.oplr and projector.json into dir.
void save_projectors(const ProjectorPair& p, const std::filesystem::path& dir);

ProjectorPair load_projectors(const std::filesystem::path& dir);

} // namespace oplora
