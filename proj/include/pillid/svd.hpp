#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "pillid/errors.hpp"
#include "pillid/matrix.hpp"

namespace pillid {

// Thin SVD A = U * diag(sigma) * V^T computed with one-sided Jacobi rotations.
// Suited to the small dense matrices this project deals with; accuracy of the
// small singular values is what the pseudoinverse rank cutoff relies on.
struct SvdResult {
    Matrix u;                  // m x n (columns with sigma == 0 are zero)
    std::vector<double> sigma; // n, unordered
    Matrix v;                  // n x n
};

inline SvdResult jacobi_svd(const Matrix& a) {
    require_finite(a, "jacobi_svd");
    const std::size_t m = a.rows, n = a.cols;
    if (m == 0 || n == 0 || m < n)
        throw DegenerateInputError("jacobi_svd: need rows >= cols >= 1");

    Matrix w = a;                 // columns orthogonalized in place
    Matrix v = Matrix::identity(n);
    const double tol = 1e-14;
    const int max_sweeps = 100;

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    const double wp = w.at(i, p), wq = w.at(i, q);
                    alpha += wp * wp;
                    beta += wq * wq;
                    gamma += wp * wq;
                }
                if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta))
                    continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double wp = w.at(i, p), wq = w.at(i, q);
                    w.at(i, p) = c * wp - s * wq;
                    w.at(i, q) = s * wp + c * wq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = v.at(i, p), vq = v.at(i, q);
                    v.at(i, p) = c * vp - s * vq;
                    v.at(i, q) = s * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }

    SvdResult r;
    r.sigma.resize(n);
    r.u = Matrix(m, n);
    r.v = std::move(v);
    for (std::size_t j = 0; j < n; ++j) {
        double norm = 0.0;
        for (std::size_t i = 0; i < m; ++i) norm += w.at(i, j) * w.at(i, j);
        norm = std::sqrt(norm);
        r.sigma[j] = norm;
        if (norm > 0.0)
            for (std::size_t i = 0; i < m; ++i) r.u.at(i, j) = w.at(i, j) / norm;
    }
    return r;
}

// Moore-Penrose pseudoinverse. Singular values at or below sigma_max * 1e-12
// are treated as zero.
inline Matrix pseudoinverse(const Matrix& a) {
    require_finite(a, "pseudoinverse");
    if (a.rows == 0 || a.cols == 0)
        throw DegenerateInputError("pseudoinverse: empty matrix");
    if (a.rows < a.cols)
        return transpose(pseudoinverse(transpose(a)));

    const SvdResult svd = jacobi_svd(a);
    double sigma_max = 0.0;
    for (double s : svd.sigma) sigma_max = std::max(sigma_max, s);
    const double cutoff = sigma_max * 1e-12;

    // A+ = V * diag(1/sigma) * U^T
    const std::size_t n = a.cols, m = a.rows;
    Matrix pinv(n, m);
    for (std::size_t j = 0; j < n; ++j) {
        if (svd.sigma[j] <= cutoff) continue;
        const double inv = 1.0 / svd.sigma[j];
        for (std::size_t i = 0; i < n; ++i) {
            const double vij = svd.v.at(i, j) * inv;
            if (vij == 0.0) continue;
            for (std::size_t k = 0; k < m; ++k)
                pinv.at(i, k) += vij * svd.u.at(k, j);
        }
    }
    return pinv;
}

} // namespace pillid
