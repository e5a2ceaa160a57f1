// Copyright (C) 2026 OPLoRA contributors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "oplora/densela.hpp"
#include "oplora/matrix.hpp"
#include "oplora/projection.hpp"

namespace oplora {

enum class Method { kLora, kPissa, kMilora, kOplora };

const char* method_name(Method method);
Method parse_method(const std::string& name); // throws ParameterError

struct AdapterConfig {
    std::size_t r = 8;       // adapter rank
    double alpha = 16.0;     // forward applies exactly alpha / r
    std::size_t k = 0;       // projection rank (oplora only)
    Method method = Method::kLora;
    std::uint64_t seed = 0;  // seeds the Kaiming-uniform init of A
    SvdMode projector_mode = SvdMode::kExact;
    RandomizedSvdOptions randomized; // used when projector_mode == kRandomized

    double scale() const { return alpha / static_cast<double>(r); }
};

/// Adapter over a frozen weight. `w0` is the original weight; for pissa and
/// milora the forward path uses `residual_w0` instead (the re-based frozen
/// weight), never both. oplora carries projectors and no residual.
struct AdapterState {
    Matrix w0;
    Matrix a; // r x d_in, trainable
    Matrix b; // d_out x r, trainable
    std::optional<ProjectorPair> projectors;
    std::optional<Matrix> residual_w0;
    AdapterConfig config;
    std::uint64_t w0_fingerprint = 0;

    std::size_t d_out() const { return w0.rows(); }
    std::size_t d_in() const { return w0.cols(); }

    /// The weight actually multiplied in the forward pass.
    const Matrix& frozen_weight() const { return residual_w0 ? *residual_w0 : w0; }
};

/// Builds the initial adapter state:
///   lora   — A ~ Kaiming-uniform on [-sqrt(6/d_in), +sqrt(6/d_in)], B = 0;
///   oplora — same, plus projectors of w0 at rank k;
///   pissa  — B, A carry the top-r singular component, frozen weight re-based;
///   milora — same construction from the bottom-r component.
AdapterState init_adapter(const Matrix& w0, const AdapterConfig& config,
                          std::size_t size_cap = kDefaultSvdSizeCap);

/// h = W_frozen x + (alpha/r) * Delta(x); for oplora the update path is
/// P_L B A P_R x, evaluated factored.
Matrix forward(const AdapterState& state, const Matrix& x);

/// Dense update matrix including the alpha/r scale.
Matrix effective_update(const AdapterState& state);

struct AdapterGrads {
    Matrix a; // r x d_in
    Matrix b; // d_out x r
};

/// Analytic gradients of the trainables for upstream = dL/dh, summed over
/// the batch. The frozen weight receives no gradient.
AdapterGrads grad(const AdapterState& state, const Matrix& x, const Matrix& upstream);

/// W_frozen + effective_update.
Matrix merge(const AdapterState& state);

/// Directory layout: w0.oplr, a.oplr, b.oplr, optional residual.oplr,
/// projector files, adapter.json.
void save_checkpoint(const AdapterState& state, const std::filesystem::path& dir);

AdapterState load_checkpoint(const std::filesystem::path& dir);

} // namespace oplora
