#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "pillid/matrix.hpp"
#include "pillid/rng.hpp"
#include "pillid/svd.hpp"

using namespace pillid;

namespace {

// Frobenius residuals of the four Moore-Penrose conditions.
double mp_residual(const Matrix& a, const Matrix& p) {
    const Matrix apa = matmul(matmul(a, p), a);
    const Matrix pap = matmul(matmul(p, a), p);
    const Matrix ap = matmul(a, p);
    const Matrix pa = matmul(p, a);
    double r = frobenius_norm(subtract(apa, a));
    r = std::max(r, frobenius_norm(subtract(pap, p)));
    r = std::max(r, frobenius_norm(subtract(ap, transpose(ap))));
    r = std::max(r, frobenius_norm(subtract(pa, transpose(pa))));
    return r;
}

} // namespace

TEST_CASE("pseudoinverse of identity is identity", "[svd]") {
    Matrix i = Matrix::identity(4);
    CHECK(frobenius_norm(subtract(pseudoinverse(i), i)) < 1e-12);
}

TEST_CASE("pseudoinverse of diag(2,4) is diag(0.5,0.25)", "[svd]") {
    Matrix d(2, 2);
    d.at(0, 0) = 2.0;
    d.at(1, 1) = 4.0;
    Matrix p = pseudoinverse(d);
    CHECK(std::abs(p.at(0, 0) - 0.5) < 1e-12);
    CHECK(std::abs(p.at(1, 1) - 0.25) < 1e-12);
    CHECK(std::abs(p.at(0, 1)) < 1e-12);
    CHECK(std::abs(p.at(1, 0)) < 1e-12);
}

TEST_CASE("tall 3x2 matrix satisfies the Moore-Penrose identities", "[svd]") {
    Matrix a(3, 2);
    a.data = {1, 0, 0, 1, 1, 1};
    Matrix p = pseudoinverse(a);
    CHECK(mp_residual(a, p) < 1e-8);
}

TEST_CASE("four Moore-Penrose conditions hold for 200 random matrices", "[svd]") {
    RngState rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t rows = 1 + rng.uniform_index(20);
        const std::size_t cols = 1 + rng.uniform_index(20);
        Matrix a(rows, cols);
        for (double& v : a.data) v = rng.normal();
        // every fourth trial gets a deliberately rank-deficient matrix
        if (trial % 4 == 0 && rows > 1) {
            for (std::size_t j = 0; j < cols; ++j) a.at(rows - 1, j) = a.at(0, j);
        }
        Matrix p = pseudoinverse(a);
        REQUIRE(mp_residual(a, p) < 1e-8);
    }
}

TEST_CASE("pseudoinverse of zero matrix is zero transpose", "[svd]") {
    Matrix z(3, 2);
    Matrix p = pseudoinverse(z);
    CHECK(p.rows == 2);
    CHECK(p.cols == 3);
    CHECK(frobenius_norm(p) == 0.0);
}

TEST_CASE("pseudoinverse rejects non-finite input", "[svd]") {
    Matrix a(2, 2);
    a.at(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(pseudoinverse(a), DegenerateInputError);
}
