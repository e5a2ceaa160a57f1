// Copyright (C) 2026 OPLoRA contributors
// SPDX-License-Identifier: Apache-2.0
//

#include "oplora/matrix.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <utility>

#include "oplora/error.hpp"
#include "oplora/kernels.hpp"
#include "oplora/rng.hpp"

namespace oplora {
namespace {

constexpr char kMagic[8] = {'O', 'P', 'L', 'O', 'R', 'A', '1', '\0'};

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": shapes " +
                             std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                             " and " + std::to_string(b.rows()) + "x" +
                             std::to_string(b.cols()) + " differ");
    }
}

void encode_u64_le(std::uint64_t value, unsigned char out[8]) {
    for (int i = 0; i < 8; ++i) out[i] = static_cast<unsigned char>(value >> (8 * i));
}

std::uint64_t decode_u64_le(const unsigned char in[8]) {
    std::uint64_t value = 0;
    for (int i = 0; i < 8; ++i) value |= static_cast<std::uint64_t>(in[i]) << (8 * i);
    return value;
}

} // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {
    if (rows == 0 || cols == 0) {
        throw DimensionError("matrix dimensions must be positive");
    }
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows == 0 || cols == 0) {
        throw DimensionError("matrix dimensions must be positive");
    }
    if (data_.size() != rows * cols) {
        throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                             " does not equal rows*cols = " + std::to_string(rows * cols));
    }
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values)
    : Matrix(rows, cols, std::vector<double>(values)) {}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diagonal(std::size_t rows, std::size_t cols, std::span<const double> diag) {
    Matrix m(rows, cols);
    const std::size_t p = std::min(rows, cols);
    if (diag.size() != p) {
        throw DimensionError("diagonal length must equal min(rows, cols)");
    }
    for (std::size_t i = 0; i < p; ++i) m(i, i) = diag[i];
    return m;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i) {
        for (std::size_t j = 0; j < cols_; ++j) {
            t(j, i) = (*this)(i, j);
        }
    }
    return t;
}

double Matrix::frobenius_norm() const {
    return std::sqrt(kernels::dot(data(), data(), size()));
}

double Matrix::max_abs() const {
    double best = 0.0;
    for (double v : data_) best = std::max(best, std::abs(v));
    return best;
}

bool Matrix::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Matrix& Matrix::operator+=(const Matrix& other) {
    require_same_shape(*this, other, "add");
    kernels::add(data(), data(), other.data(), size());
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
    require_same_shape(*this, other, "sub");
    kernels::sub(data(), data(), other.data(), size());
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    kernels::scale(data(), data(), s, size());
    return *this;
}

Matrix& Matrix::add_scaled(double alpha, const Matrix& x) {
    require_same_shape(*this, x, "add_scaled");
    kernels::axpy(data(), alpha, x.data(), size());
    return *this;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    Matrix out(a.rows(), a.cols());
    kernels::add(out.data(), a.data(), b.data(), a.size());
    return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "sub");
    Matrix out(a.rows(), a.cols());
    kernels::sub(out.data(), a.data(), b.data(), a.size());
    return out;
}

Matrix operator*(double s, const Matrix& a) {
    Matrix out(a.rows(), a.cols());
    kernels::scale(out.data(), a.data(), s, a.size());
    return out;
}

Matrix operator*(const Matrix& a, double s) {
    return s * a;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: inner dimensions " + std::to_string(a.cols()) +
                             " and " + std::to_string(b.rows()) + " differ");
    }
    Matrix out(a.rows(), b.cols());
    kernels::gemm(out.data(), a.data(), b.data(), a.rows(), a.cols(), b.cols());
    return out;
}

Matrix transpose_multiply(const Matrix& a, const Matrix& b) {
    return a.transposed() * b;
}

Matrix multiply_transpose(const Matrix& a, const Matrix& b) {
    return a * b.transposed();
}

Matrix take_columns(const Matrix& m, std::size_t first, std::size_t count) {
    if (first + count > m.cols()) {
        throw DimensionError("take_columns: range exceeds column count");
    }
    Matrix out(m.rows(), count);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        std::memcpy(out.row(i), m.row(i) + first, count * sizeof(double));
    }
    return out;
}

void fill_gaussian(Matrix& m, Xoshiro256pp& rng) {
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.gaussian();
}

void fill_uniform(Matrix& m, Xoshiro256pp& rng, double lo, double hi) {
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
}

Matrix load_matrix(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open matrix file: " + path.string());
    }
    char magic[8];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, 8) != 0) {
        throw FormatError("not an OPLR1 file: " + path.string());
    }
    unsigned char dims[16];
    if (!in.read(reinterpret_cast<char*>(dims), sizeof(dims))) {
        throw FormatError("truncated OPLR1 header: " + path.string());
    }
    const std::uint64_t rows = decode_u64_le(dims);
    const std::uint64_t cols = decode_u64_le(dims + 8);
    if (rows == 0 || cols == 0 || rows > (1ULL << 32) || cols > (1ULL << 32)) {
        throw FormatError("invalid OPLR1 dimensions in " + path.string());
    }
    std::vector<double> data(static_cast<std::size_t>(rows * cols));
    static_assert(sizeof(double) == 8);
    for (auto& value : data) {
        unsigned char raw[8];
        if (!in.read(reinterpret_cast<char*>(raw), sizeof(raw))) {
            throw FormatError("truncated OPLR1 payload: " + path.string());
        }
        value = std::bit_cast<double>(decode_u64_le(raw));
    }
    Matrix m(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols), std::move(data));
    if (!m.all_finite()) {
        throw DataError("OPLR1 payload contains non-finite entries: " + path.string());
    }
    return m;
}

void save_matrix(const Matrix& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot create matrix file: " + path.string());
    }
    out.write(kMagic, sizeof(kMagic));
    unsigned char buf[8];
    encode_u64_le(m.rows(), buf);
    out.write(reinterpret_cast<const char*>(buf), sizeof(buf));
    encode_u64_le(m.cols(), buf);
    out.write(reinterpret_cast<const char*>(buf), sizeof(buf));
    for (std::size_t i = 0; i < m.size(); ++i) {
        encode_u64_le(std::bit_cast<std::uint64_t>(m.data()[i]), buf);
        out.write(reinterpret_cast<const char*>(buf), sizeof(buf));
    }
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

std::uint64_t fingerprint(const Matrix& m) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    const auto mix = [&hash](const unsigned char* bytes, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            hash ^= bytes[i];
            hash *= 0x100000001b3ULL;
        }
    };
    unsigned char buf[8];
    encode_u64_le(m.rows(), buf);
    mix(buf, 8);
    encode_u64_le(m.cols(), buf);
    mix(buf, 8);
    for (std::size_t i = 0; i < m.size(); ++i) {
        encode_u64_le(std::bit_cast<std::uint64_t>(m.data()[i]), buf);
        mix(buf, 8);
    }
    return hash;
}

} // namespace oplora
