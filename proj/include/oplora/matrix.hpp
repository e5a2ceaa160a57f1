// Copyright (C) 2026 OPLoRA contributors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <span>
#include <vector>

namespace oplora {

class Xoshiro256pp;

/// Dense real matrix, row-major, 64-bit entries. Value semantics; all
/// arithmetic routes through the kernels layer.
class Matrix {
public:
    Matrix() = default;

    /// rows x cols, zero-filled.
    Matrix(std::size_t rows, std::size_t cols);

    /// Takes ownership of row-major data; size must equal rows*cols.
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    /// Row-major literal, e.g. Matrix(2, 2, {1.0, 2.0, 3.0, 4.0}).
    Matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);

    static Matrix identity(std::size_t n);

    /// rows x cols matrix with diag[i] on the diagonal, zero elsewhere.
    static Matrix diagonal(std::size_t rows, std::size_t cols,
                           std::span<const double> diag);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    /// Pointer to row i (cols() contiguous entries).
    double* row(std::size_t i) { return data_.data() + i * cols_; }
    const double* row(std::size_t i) const { return data_.data() + i * cols_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    Matrix transposed() const;

    double frobenius_norm() const;
    double max_abs() const;
    bool all_finite() const;

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double s);

    /// this += alpha * x
    Matrix& add_scaled(double alpha, const Matrix& x);

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);
Matrix operator*(const Matrix& a, double s);

/// Matrix product a * b.
Matrix operator*(const Matrix& a, const Matrix& b);

/// a^T * b without forming a^T at the call site.
Matrix transpose_multiply(const Matrix& a, const Matrix& b);

/// a * b^T without forming b^T at the call site.
Matrix multiply_transpose(const Matrix& a, const Matrix& b);

/// Columns [first, first+count) of m as a rows x count matrix.
Matrix take_columns(const Matrix& m, std::size_t first, std::size_t count);

/// Samples every entry from N(0, 1) in row-major order.
void fill_gaussian(Matrix& m, Xoshiro256pp& rng);

/// Samples every entry from U(lo, hi) in row-major order.
void fill_uniform(Matrix& m, Xoshiro256pp& rng, double lo, double hi);

// OPLR1 container: 8-byte magic "OPLORA1\0", rows (u64 LE), cols (u64 LE),
// rows*cols f64 LE row-major.

/// Reads an OPLR1 file. Throws FormatError on bad magic/truncation,
/// DataError on non-finite entries, IoError when unreadable.
Matrix load_matrix(const std::filesystem::path& path);

/// Writes an OPLR1 file. Throws IoError on failure.
void save_matrix(const Matrix& m, const std::filesystem::path& path);

/// FNV-1a 64-bit hash over the OPLR1 payload bytes (rows, cols, data,
/// little-endian). Identifies the frozen weight a projector or adapter
/// was derived from.
std::uint64_t fingerprint(const Matrix& m);

} // namespace oplora
