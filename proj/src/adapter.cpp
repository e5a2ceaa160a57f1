// Copyright (C) 2026 OPLoRA contributors
// SPDX-License-Identifier: Apache-2.0
//

#include "oplora/adapter.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "oplora/error.hpp"
#include "oplora/rng.hpp"

namespace oplora {
namespace {

void validate_config(const Matrix& w0, const AdapterConfig& config) {
    const std::size_t p = std::min(w0.rows(), w0.cols());
    if (config.r == 0 || config.r > p) {
        throw RankError("adapter rank r = " + std::to_string(config.r) +
                        " outside [1, " + std::to_string(p) + "]");
    }
    if (!(config.alpha > 0.0)) {
        throw ParameterError("adapter alpha must be positive");
    }
    if (config.method == Method::kOplora) {
        if (config.k == 0) {
            throw ParameterError("oplora requires a positive projection rank k");
        }
        if (config.k >= p) {
            throw RankError("oplora projection rank k = " + std::to_string(config.k) +
                            " must be < min(d_out, d_in) = " + std::to_string(p));
        }
    }
}

void check_fingerprint(const AdapterState& state) {
    if (state.config.method == Method::kOplora) {
        if (!state.projectors) {
            throw FingerprintError("oplora state has no projectors");
        }
        if (state.projectors->source_fingerprint != state.w0_fingerprint) {
            throw FingerprintError("projectors were built from a different frozen weight");
        }
    }
}

/// b = U_r sqrt(S_r) c, a = c sqrt(S_r) V_r^T with c = sqrt(r/alpha), so that
/// (alpha/r) b a reproduces the selected singular component exactly.
void assign_svd_init(AdapterState& state, const SvdFactorization& f, std::size_t first) {
    const std::size_t r = state.config.r;
    const double c = std::sqrt(static_cast<double>(r) / state.config.alpha);
    const Matrix u_r = take_columns(f.u, first, r);
    const Matrix v_r = take_columns(f.v, first, r);

    state.b = Matrix(state.d_out(), r);
    state.a = Matrix(r, state.d_in());
    for (std::size_t j = 0; j < r; ++j) {
        const double root = std::sqrt(f.sigma[first + j]);
        for (std::size_t i = 0; i < state.d_out(); ++i) {
            state.b(i, j) = u_r(i, j) * root * c;
        }
        for (std::size_t i = 0; i < state.d_in(); ++i) {
            state.a(j, i) = v_r(i, j) * root * c;
        }
    }

    // Re-base the frozen weight so the net layer still equals w0 at init.
    std::vector<double> sel(f.sigma.begin() + static_cast<std::ptrdiff_t>(first),
                            f.sigma.begin() + static_cast<std::ptrdiff_t>(first + r));
    const Matrix component = u_r * Matrix::diagonal(r, r, sel) * v_r.transposed();
    state.residual_w0 = state.w0 - component;
}

std::string fingerprint_hex(std::uint64_t fp) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << fp;
    return os.str();
}

} // namespace

const char* method_name(Method method) {
    switch (method) {
    case Method::kLora: return "lora";
    case Method::kPissa: return "pissa";
    case Method::kMilora: return "milora";
    case Method::kOplora: return "oplora";
    }
    return "unknown";
}

Method parse_method(const std::string& name) {
    if (name == "lora") return Method::kLora;
    if (name == "pissa") return Method::kPissa;
    if (name == "milora") return Method::kMilora;
    if (name == "oplora") return Method::kOplora;
    throw ParameterError("unknown adapter method: " + name);
}

AdapterState init_adapter(const Matrix& w0, const AdapterConfig& config, std::size_t size_cap) {
    if (!w0.all_finite()) {
        throw DataError("init_adapter: w0 has non-finite entries");
    }
    validate_config(w0, config);

    AdapterState state;
    state.w0 = w0;
    state.config = config;
    state.w0_fingerprint = fingerprint(w0);

    switch (config.method) {
    case Method::kLora:
    case Method::kOplora: {
        state.a = Matrix(config.r, w0.cols());
        Xoshiro256pp rng(config.seed);
        const double bound = std::sqrt(6.0 / static_cast<double>(w0.cols()));
        fill_uniform(state.a, rng, -bound, bound);
        state.b = Matrix(w0.rows(), config.r); // zero: update vanishes at init
        if (config.method == Method::kOplora) {
            state.projectors = build_projectors(w0, config.k, config.projector_mode,
                                                config.randomized, size_cap);
        }
        break;
    }
    case Method::kPissa: {
        const SvdFactorization f = svd_exact(w0, size_cap);
        assign_svd_init(state, f, 0);
        break;
    }
    case Method::kMilora: {
        const SvdFactorization f = svd_exact(w0, size_cap);
        assign_svd_init(state, f, f.sigma.size() - config.r);
        break;
    }
    }
    return state;
}

Matrix forward(const AdapterState& state, const Matrix& x) {
    if (x.rows() != state.d_in()) {
        throw DimensionError("forward: x has " + std::to_string(x.rows()) +
                             " rows, adapter expects " + std::to_string(state.d_in()));
    }
    if (!x.all_finite()) {
        throw DataError("forward: x has non-finite entries");
    }
    check_fingerprint(state);

    Matrix out = state.frozen_weight() * x;
    Matrix inner = (state.config.method == Method::kOplora)
                       ? complement_left(state.projectors->v_k, x) // P_R x
                       : x;
    Matrix update = state.b * (state.a * inner);
    if (state.config.method == Method::kOplora) {
        update = apply_left(*state.projectors, update); // P_L (B A P_R x)
    }
    out.add_scaled(state.config.scale(), update);
    return out;
}

Matrix effective_update(const AdapterState& state) {
    check_fingerprint(state);
    Matrix left = state.b;  // d_out x r
    Matrix right = state.a; // r x d_in
    if (state.config.method == Method::kOplora) {
        left = apply_left(*state.projectors, left);    // P_L B
        right = apply_right(*state.projectors, right); // A P_R
    }
    Matrix update = left * right;
    update *= state.config.scale();
    return update;
}

AdapterGrads grad(const AdapterState& state, const Matrix& x, const Matrix& upstream) {
    if (x.rows() != state.d_in() || upstream.rows() != state.d_out() ||
        x.cols() != upstream.cols()) {
        throw DimensionError("grad: x/upstream shapes inconsistent with adapter");
    }
    check_fingerprint(state);

    const bool projected = state.config.method == Method::kOplora;
    const Matrix xp = projected ? complement_left(state.projectors->v_k, x) : x;
    const Matrix g = projected ? complement_left(state.projectors->u_k, upstream) : upstream;
    const double scale = state.config.scale();

    AdapterGrads grads;
    const Matrix ax = state.a * xp;                           // r x batch
    grads.b = multiply_transpose(g, ax);                      // d_out x r
    grads.b *= scale;
    grads.a = multiply_transpose(transpose_multiply(state.b, g), xp); // r x d_in
    grads.a *= scale;
    return grads;
}

Matrix merge(const AdapterState& state) {
    return state.frozen_weight() + effective_update(state);
}

void save_checkpoint(const AdapterState& state, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    save_matrix(state.w0, dir / "w0.oplr");
    save_matrix(state.a, dir / "a.oplr");
    save_matrix(state.b, dir / "b.oplr");
    if (state.residual_w0) {
        save_matrix(*state.residual_w0, dir / "residual.oplr");
    }
    if (state.projectors) {
        save_projectors(*state.projectors, dir);
    }
    nlohmann::json meta{
        {"method", method_name(state.config.method)},
        {"r", state.config.r},
        {"alpha", state.config.alpha},
        {"k", state.config.k},
        {"seed", state.config.seed},
        {"fingerprint", fingerprint_hex(state.w0_fingerprint)},
    };
    std::ofstream out(dir / "adapter.json");
    if (!out) {
        throw IoError("cannot write " + (dir / "adapter.json").string());
    }
    out << meta.dump(2) << '\n';
}

AdapterState load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream in(dir / "adapter.json");
    if (!in) {
        throw IoError("cannot read " + (dir / "adapter.json").string());
    }
    AdapterState state;
    try {
        nlohmann::json meta;
        in >> meta;
        state.config.method = parse_method(meta.at("method").get<std::string>());
        state.config.r = meta.at("r").get<std::size_t>();
        state.config.alpha = meta.at("alpha").get<double>();
        state.config.k = meta.at("k").get<std::size_t>();
        state.config.seed = meta.at("seed").get<std::uint64_t>();
        const std::uint64_t stored_fp =
            std::stoull(meta.at("fingerprint").get<std::string>(), nullptr, 16);
        state.w0 = load_matrix(dir / "w0.oplr");
        state.a = load_matrix(dir / "a.oplr");
        state.b = load_matrix(dir / "b.oplr");
        state.w0_fingerprint = fingerprint(state.w0);
        if (stored_fp != state.w0_fingerprint) {
            throw FingerprintError("checkpoint fingerprint does not match w0.oplr");
        }
        if (std::filesystem::exists(dir / "residual.oplr")) {
            state.residual_w0 = load_matrix(dir / "residual.oplr");
        }
        if (std::filesystem::exists(dir / "projector.json")) {
            state.projectors = load_projectors(dir);
            state.config.projector_mode = state.projectors->mode;
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed adapter.json: " + std::string(e.what()));
    }
    check_fingerprint(state);
    return state;
}

} // namespace oplora
