#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "pillid/errors.hpp"

namespace pillid {

// Unit-length embedding with an optional class label (-1 when unknown).
struct EmbeddingVector {
    std::vector<double> values;
    int label = -1;

    std::size_t dim() const { return values.size(); }
};

inline double l2_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

// Strict normalization: a zero vector is an error, never a NaN.
inline EmbeddingVector normalized_embedding(std::span<const double> raw, int label = -1) {
    const double norm = l2_norm(raw);
    if (norm == 0.0 || !std::isfinite(norm))
        throw DegenerateInputError("normalized_embedding: zero or non-finite norm");
    EmbeddingVector e;
    e.values.resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) e.values[i] = raw[i] / norm;
    e.label = label;
    return e;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw DegenerateInputError("cosine: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0)
        throw DegenerateInputError("cosine: zero-norm operand");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

} // namespace pillid
