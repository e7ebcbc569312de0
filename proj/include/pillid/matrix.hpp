#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "pillid/errors.hpp"
#include "pillid/rng.hpp"

namespace pillid {

// Dense row-major matrix of 64-bit reals.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data; // rows*cols entries, row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
    }
};

inline bool all_finite(const Matrix& m) {
    return std::all_of(m.data.begin(), m.data.end(),
                       [](double v) { return std::isfinite(v); });
}

inline void require_finite(const Matrix& m, const char* what) {
    if (!all_finite(m))
        throw DegenerateInputError(std::string(what) + ": non-finite entries");
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j)
            t.at(j, i) = a.at(i, j);
    return t;
}

// C = A * B
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows)
        throw DegenerateInputError("matmul: inner dimensions disagree");
    Matrix c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.data.data() + i * a.cols;
        double* crow = c.data.data() + i * b.cols;
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = b.data.data() + k * b.cols;
            for (std::size_t j = 0; j < b.cols; ++j)
                crow[j] += aik * brow[j];
        }
    }
    return c;
}

// C = A * B^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols)
        throw DegenerateInputError("matmul_nt: inner dimensions disagree");
    Matrix c(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.data.data() + i * a.cols;
        for (std::size_t j = 0; j < b.rows; ++j) {
            const double* brow = b.data.data() + j * b.cols;
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
            c.at(i, j) = s;
        }
    }
    return c;
}

// C = A^T * B
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows)
        throw DegenerateInputError("matmul_tn: inner dimensions disagree");
    Matrix c(a.cols, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.data.data() + i * a.cols;
        const double* brow = b.data.data() + i * b.cols;
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            double* crow = c.data.data() + k * b.cols;
            for (std::size_t j = 0; j < b.cols; ++j)
                crow[j] += aik * brow[j];
        }
    }
    return c;
}

inline double frobenius_norm(const Matrix& m) {
    double s = 0.0;
    for (double v : m.data) s += v * v;
    return std::sqrt(s);
}

inline Matrix subtract(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b))
        throw DegenerateInputError("subtract: shape mismatch");
    Matrix c = a;
    for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] -= b.data[i];
    return c;
}

// i.i.d. normal entries with stddev sqrt(2 / cols); fan is the vector dimension.
inline Matrix kaiming_normal_init(std::size_t rows, std::size_t cols, RngState& rng) {
    if (rows == 0 || cols == 0)
        throw DegenerateInputError("kaiming_normal_init: empty shape");
    Matrix m(rows, cols);
    const double stddev = std::sqrt(2.0 / static_cast<double>(cols));
    for (double& v : m.data) v = stddev * rng.normal();
    return m;
}

// --- binary persistence -----------------------------------------------------
//
// Layout: 8-byte magic, rows and cols as 64-bit little-endian unsigned, then
// row-major 64-bit little-endian IEEE-754 payload.

inline constexpr std::array<char, 8> kMatrixMagic = {'P', 'I', 'D', 'M', 'A', 'T', '0', '1'};

namespace detail {

inline void put_u64_le(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 8);
}

inline std::uint64_t get_u64_le(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline void put_f64_le(std::ostream& os, double d) {
    put_u64_le(os, std::bit_cast<std::uint64_t>(d));
}

inline double get_f64_le(std::istream& is) {
    return std::bit_cast<double>(get_u64_le(is));
}

} // namespace detail

inline void write_matrix(std::ostream& os, const Matrix& m) {
    os.write(kMatrixMagic.data(), kMatrixMagic.size());
    detail::put_u64_le(os, m.rows);
    detail::put_u64_le(os, m.cols);
    for (double v : m.data) detail::put_f64_le(os, v);
}

inline Matrix read_matrix(std::istream& is) {
    std::array<char, 8> magic{};
    is.read(magic.data(), magic.size());
    if (!is || magic != kMatrixMagic)
        throw CorruptArtifactError("matrix: bad magic");
    const std::uint64_t rows = detail::get_u64_le(is);
    const std::uint64_t cols = detail::get_u64_le(is);
    if (!is)
        throw CorruptArtifactError("matrix: truncated header");
    if (rows > (1u << 24) || cols > (1u << 24))
        throw CorruptArtifactError("matrix: implausible dimensions");
    Matrix m(rows, cols);
    for (double& v : m.data) v = detail::get_f64_le(is);
    if (!is)
        throw CorruptArtifactError("matrix: truncated payload");
    return m;
}

inline void save_matrix(const std::string& path, const Matrix& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    write_matrix(os, m);
    if (!os) throw IoError("write failed: " + path);
}

inline Matrix load_matrix(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    return read_matrix(is);
}

} // namespace pillid
