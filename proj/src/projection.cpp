// Copyright (C) 2026 OPLoRA contributors
// SPDX-License-Identifier: Apache-2.0
//

#include "oplora/projection.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "oplora/error.hpp"

namespace oplora {
namespace {

std::string fingerprint_hex(std::uint64_t fp) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << fp;
    return os.str();
}

std::uint64_t parse_fingerprint_hex(const std::string& hex) {
    return std::stoull(hex, nullptr, 16);
}

} // namespace

ProjectorPair build_projectors(const Matrix& w0, std::size_t k, SvdMode mode,
                               const RandomizedSvdOptions& opts, std::size_t size_cap) {
    if (k == 0) {
        throw ParameterError("build_projectors: k must be positive");
    }
    const std::size_t p = std::min(w0.rows(), w0.cols());
    if (k >= p) {
        throw RankError("build_projectors: k = " + std::to_string(k) +
                        " must be < min(d_out, d_in) = " + std::to_string(p));
    }

    ProjectorPair pair;
    pair.mode = mode;
    pair.source_fingerprint = fingerprint(w0);
    if (mode == SvdMode::kExact) {
        SvdFactorization f = svd_exact(w0, size_cap);
        pair.u_k = take_columns(f.u, 0, k);
        pair.v_k = take_columns(f.v, 0, k);
    } else {
        SvdFactorization f = svd_randomized(w0, k, opts);
        pair.u_k = std::move(f.u);
        pair.v_k = std::move(f.v);
        pair.oversample = opts.oversample;
        pair.power_iters = opts.power_iters;
        pair.seed = opts.seed;
    }
    return pair;
}

Matrix complement_left(const Matrix& basis, const Matrix& m) {
    if (basis.rows() != m.rows()) {
        throw DimensionError("complement_left: basis has " + std::to_string(basis.rows()) +
                             " rows, operand has " + std::to_string(m.rows()));
    }
    const Matrix coeff = transpose_multiply(basis, m); // k x cols
    Matrix out = m;
    out -= basis * coeff;
    return out;
}

Matrix complement_right(const Matrix& m, const Matrix& basis) {
    if (basis.rows() != m.cols()) {
        throw DimensionError("complement_right: basis has " + std::to_string(basis.rows()) +
                             " rows, operand has " + std::to_string(m.cols()) + " columns");
    }
    const Matrix coeff = m * basis; // rows x k
    Matrix out = m;
    out -= multiply_transpose(coeff, basis);
    return out;
}

Matrix apply_left(const ProjectorPair& p, const Matrix& m) {
    return complement_left(p.u_k, m);
}

Matrix apply_right(const ProjectorPair& p, const Matrix& m) {
    return complement_right(m, p.v_k);
}

Matrix project_onto_topk(const ProjectorPair& p, const Matrix& m) {
    if (p.u_k.rows() != m.rows()) {
        throw DimensionError("project_onto_topk: operand must have d_out rows");
    }
    return p.u_k * transpose_multiply(p.u_k, m);
}

void save_projectors(const ProjectorPair& p, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    save_matrix(p.u_k, dir / "u_k.oplr");
    save_matrix(p.v_k, dir / "v_k.oplr");
    nlohmann::json meta{
        {"k", p.k()},
        {"mode", svd_mode_name(p.mode)},
        {"oversample", p.oversample},
        {"power_iters", p.power_iters},
        {"seed", p.seed},
        {"fingerprint", fingerprint_hex(p.source_fingerprint)},
    };
    std::ofstream out(dir / "projector.json");
    if (!out) {
        throw IoError("cannot write " + (dir / "projector.json").string());
    }
    out << meta.dump(2) << '\n';
}

ProjectorPair load_projectors(const std::filesystem::path& dir) {
    ProjectorPair p;
    p.u_k = load_matrix(dir / "u_k.oplr");
    p.v_k = load_matrix(dir / "v_k.oplr");
    std::ifstream in(dir / "projector.json");
    if (!in) {
        throw IoError("cannot read " + (dir / "projector.json").string());
    }
    nlohmann::json meta;
    try {
        in >> meta;
        p.mode = parse_svd_mode(meta.at("mode").get<std::string>());
        p.oversample = meta.at("oversample").get<int>();
        p.power_iters = meta.at("power_iters").get<int>();
        p.seed = meta.at("seed").get<std::uint64_t>();
        p.source_fingerprint = parse_fingerprint_hex(meta.at("fingerprint").get<std::string>());
        if (meta.at("k").get<std::size_t>() != p.u_k.cols()) {
            throw FormatError("projector.json k does not match u_k.oplr");
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed projector.json: " + std::string(e.what()));
    }
    if (p.u_k.cols() != p.v_k.cols()) {
        throw FormatError("projector bases disagree on k");
    }
    return p;
}

} // namespace oplora
