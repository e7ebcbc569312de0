#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "pillid/gradcheck.hpp"
#include "pillid/loss.hpp"

using namespace pillid;

namespace {

ProxySet random_proxies(std::size_t c, std::size_t d, RngState& rng,
                        std::vector<std::uint8_t> trainable = {}) {
    ProxySet p;
    p.proxies = kaiming_normal_init(c, d, rng);
    p.labels.resize(c);
    for (std::size_t i = 0; i < c; ++i) p.labels[i] = static_cast<int>(i);
    p.trainable = trainable.empty() ? std::vector<std::uint8_t>(c, 1) : trainable;
    return p;
}

Matrix random_unit_rows(std::size_t n, std::size_t d, RngState& rng) {
    Matrix m = kaiming_normal_init(n, d, rng);
    for (std::size_t i = 0; i < n; ++i) {
        const double norm = row_norm(m, i);
        for (std::size_t j = 0; j < d; ++j) m.at(i, j) /= norm;
    }
    return m;
}

} // namespace

TEST_CASE("single positive sample at its proxy gives the closed-form value", "[loss]") {
    ProxySet p;
    p.proxies = Matrix(1, 3);
    p.proxies.at(0, 0) = 1.0;
    p.labels = {0};
    p.trainable = {1};
    Matrix e(1, 3);
    e.at(0, 0) = 1.0;
    PalParams params;
    const PalResult r = proxy_anchor_loss(e, std::vector<int>{0}, p, params);
    // alpha=32, delta=0.1: log(1 + exp(-32*0.9)) = log1p(exp(-28.8))
    CHECK(r.loss == Catch::Approx(std::log1p(std::exp(-28.8))).epsilon(1e-10));
    CHECK(r.loss < 1e-12);
    CHECK(r.loss > 0.0);
}

TEST_CASE("a proxy with no positive samples contributes only negatives", "[loss]") {
    RngState rng(3);
    ProxySet p = random_proxies(3, 4, rng);
    Matrix e = random_unit_rows(2, 4, rng);
    // both samples labeled 0: proxies 1 and 2 have empty positive sets
    const PalResult r = proxy_anchor_loss(e, std::vector<int>{0, 0}, p, PalParams{});
    CHECK(std::isfinite(r.loss));
    CHECK(r.loss > 0.0);

    // removing proxy 2 changes only the negative part; the positive part is
    // driven by proxy 0 alone either way
    ProxySet p2 = p;
    p2.proxies = Matrix(2, 4);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 4; ++j) p2.proxies.at(i, j) = p.proxies.at(i, j);
    p2.labels = {0, 1};
    p2.trainable = {1, 1};
    const PalResult r2 = proxy_anchor_loss(e, std::vector<int>{0, 0}, p2, PalParams{});
    CHECK(std::isfinite(r2.loss));
}

TEST_CASE("batch label without a proxy is rejected", "[loss]") {
    RngState rng(5);
    ProxySet p = random_proxies(2, 4, rng);
    Matrix e = random_unit_rows(1, 4, rng);
    CHECK_THROWS_AS(proxy_anchor_loss(e, std::vector<int>{9}, p, PalParams{}),
                    DegenerateInputError);
}

TEST_CASE("pal is invariant under batch permutation", "[loss]") {
    RngState rng(7);
    ProxySet p = random_proxies(3, 5, rng);
    Matrix e = random_unit_rows(6, 5, rng);
    std::vector<int> labels = {0, 1, 2, 0, 1, 2};
    const double base = proxy_anchor_loss(e, labels, p, PalParams{}).loss;

    std::vector<std::size_t> perm = {3, 0, 5, 2, 4, 1};
    Matrix e2(6, 5);
    std::vector<int> labels2(6);
    for (std::size_t i = 0; i < 6; ++i) {
        labels2[i] = labels[perm[i]];
        for (std::size_t j = 0; j < 5; ++j) e2.at(i, j) = e.at(perm[i], j);
    }
    CHECK(std::abs(proxy_anchor_loss(e2, labels2, p, PalParams{}).loss - base) < 1e-12);
}

TEST_CASE("pal decreases when a positive cosine improves", "[loss]") {
    ProxySet p;
    p.proxies = Matrix(2, 2);
    p.proxies.at(0, 0) = 1.0;
    p.proxies.at(1, 1) = 1.0;
    p.labels = {0, 1};
    p.trainable = {1, 1};
    double prev = std::numeric_limits<double>::infinity();
    for (double t = 0.3; t <= 1.2001; t += 0.1) {
        // sample for class 0 sweeping toward its proxy
        Matrix e(1, 2);
        e.at(0, 0) = std::cos(1.3 - t);
        e.at(0, 1) = std::sin(1.3 - t);
        const double loss = proxy_anchor_loss(e, std::vector<int>{0}, p, PalParams{}).loss;
        REQUIRE(loss < prev);
        prev = loss;
    }
}

TEST_CASE("pal gradients match finite differences", "[loss]") {
    RngState rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t c = 2 + rng.uniform_index(2);
        const std::size_t d = 3 + rng.uniform_index(3);
        const std::size_t b = 1 + rng.uniform_index(3);
        ProxySet p = random_proxies(c, d, rng);
        Matrix e = kaiming_normal_init(b, d, rng);
        std::vector<int> labels(b);
        for (auto& l : labels) l = static_cast<int>(rng.uniform_index(c));
        PalParams params;
        params.alpha = 8.0 + rng.uniform_real(0.0, 24.0);

        const PalResult r = proxy_anchor_loss(e, labels, p, params);

        auto fe = [&](std::span<const double> flat) {
            Matrix q = e;
            std::copy(flat.begin(), flat.end(), q.data.begin());
            return proxy_anchor_loss(q, labels, p, params).loss;
        };
        REQUIRE(gradient_relative_error(r.grad_embeddings.data,
                                        finite_difference_gradient(fe, e.data)) < 1e-5);

        auto fp = [&](std::span<const double> flat) {
            ProxySet q = p;
            std::copy(flat.begin(), flat.end(), q.proxies.data.begin());
            return proxy_anchor_loss(e, labels, q, params).loss;
        };
        REQUIRE(gradient_relative_error(r.grad_proxies.data,
                                        finite_difference_gradient(fp, p.proxies.data)) < 1e-5);
    }
}

TEST_CASE("frozen proxies receive zero gradient", "[loss]") {
    RngState rng(13);
    ProxySet p = random_proxies(3, 4, rng, {1, 0, 1});
    Matrix e = random_unit_rows(3, 4, rng);
    const PalResult r =
        proxy_anchor_loss(e, std::vector<int>{0, 1, 2}, p, PalParams{});
    for (std::size_t j = 0; j < 4; ++j) CHECK(r.grad_proxies.at(1, j) == 0.0);
}

TEST_CASE("palfs_reduce hand instance and zero-weight annihilation", "[loss]") {
    PalParams params;
    params.pieces = 2;
    std::vector<double> e = {1, 0, 0, 1};
    auto r = palfs_reduce(e, params);
    REQUIRE(r.size() == 2);
    CHECK(r[0] == Catch::Approx(1.0 / std::sqrt(2.0)));
    CHECK(r[1] == Catch::Approx(1.0 / std::sqrt(2.0)));

    params.weighted = true;
    std::vector<double> w = {1.0, 0.0};
    auto rw = palfs_reduce(e, params, w);
    CHECK(rw[0] == Catch::Approx(1.0));
    CHECK(rw[1] == Catch::Approx(0.0).margin(1e-15));

    std::vector<double> all_zero_w = {0.0, 0.0};
    CHECK_THROWS_AS(palfs_reduce(e, params, all_zero_w), DegenerateInputError);
}

TEST_CASE("palfs with one piece equals pal", "[loss]") {
    RngState rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t c = 2 + rng.uniform_index(2);
        const std::size_t d = 2 + rng.uniform_index(5);
        const std::size_t b = 1 + rng.uniform_index(4);
        ProxySet p = random_proxies(c, d, rng);
        Matrix e = kaiming_normal_init(b, d, rng);
        std::vector<int> labels(b);
        for (auto& l : labels) l = static_cast<int>(rng.uniform_index(c));
        PalParams params; // pieces = 1
        const double pal = proxy_anchor_loss(e, labels, p, params).loss;
        const double palfs = palfs_loss(e, labels, p, params).loss;
        REQUIRE(std::abs(pal - palfs) < 1e-12);
    }
}

TEST_CASE("single-piece weighted palfs has zero weight gradient", "[loss]") {
    // with the reduced vector renormalized, scaling the single piece cannot
    // change any cosine, so dL/dw must vanish
    RngState rng(23);
    ProxySet p = random_proxies(2, 3, rng);
    Matrix e = kaiming_normal_init(2, 3, rng);
    PalParams params;
    params.weighted = true;
    std::vector<double> w = {1.3};
    const PalfsResult r = palfs_loss(e, std::vector<int>{0, 1}, p, params, w);
    CHECK(std::abs(r.grad_weights[0]) < 1e-9);
}

TEST_CASE("palfs gradients (embeddings, proxies, weights) match finite differences", "[loss]") {
    RngState rng(19);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t pieces = 2 + rng.uniform_index(2);
        const std::size_t piece_len = 2 + rng.uniform_index(3);
        const std::size_t d = pieces * piece_len;
        const std::size_t c = 2 + rng.uniform_index(2);
        const std::size_t b = 1 + rng.uniform_index(3);
        ProxySet p = random_proxies(c, piece_len, rng);
        Matrix e = kaiming_normal_init(b, d, rng);
        std::vector<int> labels(b);
        for (auto& l : labels) l = static_cast<int>(rng.uniform_index(c));
        std::vector<double> weights(pieces);
        for (auto& w : weights) w = 0.5 + rng.uniform();
        PalParams params;
        params.pieces = pieces;
        params.weighted = true;

        const PalfsResult r = palfs_loss(e, labels, p, params, weights);

        auto fe = [&](std::span<const double> flat) {
            Matrix q = e;
            std::copy(flat.begin(), flat.end(), q.data.begin());
            return palfs_loss(q, labels, p, params, weights).loss;
        };
        REQUIRE(gradient_relative_error(r.grad_embeddings.data,
                                        finite_difference_gradient(fe, e.data)) < 1e-5);

        auto fp = [&](std::span<const double> flat) {
            ProxySet q = p;
            std::copy(flat.begin(), flat.end(), q.proxies.data.begin());
            return palfs_loss(e, labels, q, params, weights).loss;
        };
        REQUIRE(gradient_relative_error(r.grad_proxies.data,
                                        finite_difference_gradient(fp, p.proxies.data)) < 1e-5);

        auto fw = [&](std::span<const double> flat) {
            std::vector<double> q(flat.begin(), flat.end());
            return palfs_loss(e, labels, p, params, q).loss;
        };
        REQUIRE(gradient_relative_error(r.grad_weights,
                                        finite_difference_gradient(fw, weights)) < 1e-5);
    }
}
