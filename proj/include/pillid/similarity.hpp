#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "pillid/errors.hpp"
#include "pillid/matrix.hpp"

namespace pillid {

// Upper-triangular, diagonal-excluded cosine similarities of n row vectors.
// Entry (i, j) with i < j lives at index i*(2n-i-1)/2 + (j-i-1).
struct SimilarityMatrix {
    std::size_t n = 0;
    std::vector<double> pairs;

    static std::size_t pair_count(std::size_t n) { return n * (n - 1) / 2; }

    std::size_t index_of(std::size_t i, std::size_t j) const {
        return i * (2 * n - i - 1) / 2 + (j - i - 1);
    }

    double at(std::size_t i, std::size_t j) const {
        if (i == j) return 1.0;
        return i < j ? pairs[index_of(i, j)] : pairs[index_of(j, i)];
    }
};

inline double row_norm(const Matrix& m, std::size_t i) {
    double s = 0.0;
    for (double v : m.row(i)) s += v * v;
    return std::sqrt(s);
}

inline SimilarityMatrix cosine_similarity_matrix(const Matrix& m) {
    if (m.rows < 2)
        throw DegenerateInputError("cosine_similarity_matrix: need at least 2 rows");
    require_finite(m, "cosine_similarity_matrix");
    std::vector<double> norms(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) {
        norms[i] = row_norm(m, i);
        if (norms[i] == 0.0)
            throw DegenerateInputError("cosine_similarity_matrix: zero-norm row");
    }
    SimilarityMatrix s;
    s.n = m.rows;
    s.pairs.reserve(SimilarityMatrix::pair_count(m.rows));
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = i + 1; j < m.rows; ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < m.cols; ++k) dot += m.at(i, k) * m.at(j, k);
            s.pairs.push_back(dot / (norms[i] * norms[j]));
        }
    }
    return s;
}

} // namespace pillid
