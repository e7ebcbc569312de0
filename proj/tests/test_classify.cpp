#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "pillid/classify.hpp"
#include "pillid/rng.hpp"

using namespace pillid;

namespace {

EmbeddingVector unit(std::vector<double> v, int label) {
    return normalized_embedding(v, label);
}

// independent least-squares oracle: solves (E^T E) W = E^T Y by Gaussian
// elimination with partial pivoting
Matrix normal_equations_solve(const Matrix& e, const Matrix& y) {
    Matrix a = matmul_tn(e, e);      // D x D
    Matrix rhs = matmul_tn(e, y);    // D x C
    const std::size_t n = a.rows;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a.at(r, col)) > std::abs(a.at(pivot, col))) pivot = r;
        if (pivot != col) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a.at(col, j), a.at(pivot, j));
            for (std::size_t j = 0; j < rhs.cols; ++j) std::swap(rhs.at(col, j), rhs.at(pivot, j));
        }
        const double d = a.at(col, col);
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col || a.at(r, col) == 0.0) continue;
            const double f = a.at(r, col) / d;
            for (std::size_t j = 0; j < n; ++j) a.at(r, j) -= f * a.at(col, j);
            for (std::size_t j = 0; j < rhs.cols; ++j) rhs.at(r, j) -= f * rhs.at(col, j);
        }
    }
    Matrix w(n, rhs.cols);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < rhs.cols; ++j) w.at(i, j) = rhs.at(i, j) / a.at(i, i);
    return w;
}

Matrix one_hot(std::span<const int> labels, std::span<const int> order) {
    Matrix y(labels.size(), order.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
        for (std::size_t c = 0; c < order.size(); ++c)
            if (order[c] == labels[i]) y.at(i, c) = 1.0;
    return y;
}

} // namespace

TEST_CASE("solve_layer on the identity is the identity", "[classify]") {
    Matrix e = Matrix::identity(3);
    std::vector<int> labels = {0, 1, 2};
    SolvedLayer layer = solve_layer(e, labels);
    CHECK(frobenius_norm(subtract(layer.w, Matrix::identity(3))) < 1e-10);
}

TEST_CASE("solve_layer matches the normal-equations oracle", "[classify]") {
    Matrix e(3, 2);
    e.data = {1, 0, 0, 1, 1, 1};
    std::vector<int> labels = {0, 1, 1};
    SolvedLayer layer = solve_layer(e, labels);
    Matrix y = one_hot(labels, layer.class_order);
    Matrix oracle = normal_equations_solve(e, y);
    CHECK(frobenius_norm(subtract(layer.w, oracle)) < 1e-8);
}

TEST_CASE("solved layer beats random perturbations", "[classify]") {
    RngState rng(71);
    Matrix e = kaiming_normal_init(12, 4, rng);
    std::vector<int> labels(12);
    for (std::size_t i = 0; i < 12; ++i) labels[i] = static_cast<int>(i % 3);
    SolvedLayer layer = solve_layer(e, labels);
    Matrix y = one_hot(labels, layer.class_order);
    const double base = frobenius_norm(subtract(matmul(e, layer.w), y));
    for (int trial = 0; trial < 100; ++trial) {
        Matrix perturbed = layer.w;
        Matrix noise(perturbed.rows, perturbed.cols);
        for (double& v : noise.data) v = rng.normal();
        const double scale = 0.01 / frobenius_norm(noise);
        for (std::size_t i = 0; i < noise.data.size(); ++i)
            perturbed.data[i] += scale * noise.data[i];
        const double res = frobenius_norm(subtract(matmul(e, perturbed), y));
        REQUIRE(base <= res + 1e-12);
    }
}

TEST_CASE("solve_layer rejects degenerate input", "[classify]") {
    Matrix zero(3, 2);
    std::vector<int> labels = {0, 1, 0};
    CHECK_THROWS_AS(solve_layer(zero, labels), DegenerateInputError);
}

TEST_CASE("sl_predict self-query returns the class with confidence one", "[classify]") {
    EmbeddingCollection col(3);
    col.add(unit({1, 0, 0}, 0));
    col.add(unit({0, 1, 0}, 1));
    SolvedLayer layer = solve_layer(col);
    PredictionRecord r = sl_predict(layer, unit({1, 0, 0}, -1), col);
    CHECK(r.label == 0);
    CHECK(r.confidence == Catch::Approx(1.0));
}

TEST_CASE("sl_predict breaks score ties toward the lowest class index", "[classify]") {
    EmbeddingCollection col(2);
    col.add(unit({1, 0}, 3));
    col.add(unit({0, 1}, 5));
    SolvedLayer layer = solve_layer(col);
    // equidistant query
    PredictionRecord r = sl_predict(layer, unit({1, 1}, -1), col);
    CHECK(r.label == 3);
}

TEST_CASE("knn exact hit and majority vote", "[classify]") {
    EmbeddingCollection col(2);
    col.add(unit({1, 0}, 0));
    col.add(unit({0.9, 0.1}, 0));
    col.add(unit({0, 1}, 1));
    PredictionRecord exact = knn_predict(col, unit({1, 0}, -1), 1);
    CHECK(exact.label == 0);
    CHECK(exact.confidence == Catch::Approx(1.0));

    PredictionRecord maj = knn_predict(col, unit({0.8, 0.6}, -1), 3);
    CHECK(maj.label == 0); // two votes beat one
}

TEST_CASE("knn matches a brute-force oracle on random queries", "[classify]") {
    EmbeddingCollection col(2);
    const std::vector<std::pair<std::vector<double>, int>> pts = {
        {{1.0, 0.1}, 0}, {{0.9, -0.2}, 0}, {{-0.2, 1.0}, 1}, {{0.1, 0.9}, 1}, {{-1.0, -1.0}, 2}};
    for (const auto& [v, label] : pts) col.add(unit(v, label));

    RngState rng(73);
    for (int q = 0; q < 20; ++q) {
        std::vector<double> raw = {rng.normal(), rng.normal()};
        if (l2_norm(raw) == 0.0) continue;
        EmbeddingVector query = normalized_embedding(raw, -1);
        PredictionRecord got = knn_predict(col, query, 1);
        // oracle: exhaustive scan for the best cosine
        double best = -2.0;
        int best_label = -1;
        for (std::size_t i = 0; i < col.size(); ++i) {
            const double c = cosine(query.values, col.entry(i));
            if (c > best) {
                best = c;
                best_label = col.label(i);
            }
        }
        REQUIRE(got.label == best_label);
        REQUIRE(got.confidence == Catch::Approx(best));
    }
}

TEST_CASE("knn and sl agree on orthogonal singleton classes", "[classify]") {
    EmbeddingCollection col(4);
    col.add(unit({1, 0, 0, 0}, 0));
    col.add(unit({0, 1, 0, 0}, 1));
    col.add(unit({0, 0, 1, 0}, 2));
    SolvedLayer layer = solve_layer(col);
    RngState rng(79);
    for (int q = 0; q < 25; ++q) {
        std::vector<double> raw = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        EmbeddingVector query = normalized_embedding(raw, -1);
        CHECK(sl_predict(layer, query, col).label == knn_predict(col, query, 1).label);
    }
}

TEST_CASE("confidence is invariant under duplicating the whole collection", "[classify]") {
    EmbeddingCollection col(3);
    col.add(unit({1, 0.2, 0}, 0));
    col.add(unit({0, 1, 0.3}, 1));
    col.add(unit({0.1, 0.9, 0.2}, 1));
    EmbeddingCollection doubled = col;
    doubled.merge(col);

    EmbeddingVector query = unit({0.3, 0.8, 0.1}, -1);
    PredictionRecord a = knn_predict(col, query, 1);
    PredictionRecord b = knn_predict(doubled, query, 2);
    CHECK(a.label == b.label);
    CHECK(a.confidence == Catch::Approx(b.confidence));

    SolvedLayer la = solve_layer(col);
    SolvedLayer lb = solve_layer(doubled);
    PredictionRecord sa = sl_predict(la, query, col);
    PredictionRecord sb = sl_predict(lb, query, doubled);
    CHECK(sa.label == sb.label);
    CHECK(sa.confidence == Catch::Approx(sb.confidence));
}

TEST_CASE("collection save/load round trip is byte identical", "[classify]") {
    RngState rng(83);
    EmbeddingCollection col(5);
    for (int i = 0; i < 9; ++i) {
        std::vector<double> raw(5);
        for (double& v : raw) v = rng.normal();
        col.add(normalized_embedding(raw, i % 3));
    }
    auto p1 = std::filesystem::temp_directory_path() / "pillid_col_a.bin";
    auto p2 = std::filesystem::temp_directory_path() / "pillid_col_b.bin";
    col.save(p1.string());
    EmbeddingCollection back = EmbeddingCollection::load(p1.string());
    CHECK(back == col);
    back.save(p2.string());
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string bytes1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string bytes2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(bytes1 == bytes2);
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
}

TEST_CASE("merging disjoint collections sums entry counts", "[classify]") {
    EmbeddingCollection a(2), b(2);
    a.add(unit({1, 0}, 0));
    a.add(unit({0.9, 0.1}, 0));
    b.add(unit({0, 1}, 1));
    EmbeddingCollection merged = a;
    merged.merge(b);
    CHECK(merged.size() == 3);
    CHECK(merged.class_ids() == std::vector<int>{0, 1});
}

TEST_CASE("collection loader rejects truncation and bad magic", "[classify]") {
    auto p = std::filesystem::temp_directory_path() / "pillid_col_bad.bin";
    {
        std::ofstream os(p, std::ios::binary);
        os.write("BADMAGIC", 8);
    }
    CHECK_THROWS_AS(EmbeddingCollection::load(p.string()), CorruptArtifactError);

    EmbeddingCollection col(3);
    col.add(unit({1, 0, 0}, 0));
    col.save(p.string());
    std::filesystem::resize_file(p, std::filesystem::file_size(p) - 5);
    CHECK_THROWS_AS(EmbeddingCollection::load(p.string()), CorruptArtifactError);
    std::filesystem::remove(p);
}

TEST_CASE("collection rejects unnormalized or unlabeled entries", "[classify]") {
    EmbeddingCollection col(2);
    EmbeddingVector bad;
    bad.values = {2.0, 0.0};
    bad.label = 0;
    CHECK_THROWS_AS(col.add(bad), DegenerateInputError);
    EmbeddingVector unlabeled = unit({1, 0}, -1);
    CHECK_THROWS_AS(col.add(unlabeled), DegenerateInputError);
}

TEST_CASE("knn argument validation", "[classify]") {
    EmbeddingCollection col(2);
    CHECK_THROWS_AS(knn_predict(col, unit({1, 0}, -1), 1), DegenerateInputError);
    col.add(unit({1, 0}, 0));
    CHECK_THROWS_AS(knn_predict(col, unit({1, 0}, -1), 2), DegenerateInputError);
}

TEST_CASE("sl least-squares optimality on random instances", "[classify]") {
    RngState rng(89);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t c = 2 + rng.uniform_index(7);   // <= 8
        const std::size_t d = 2 + rng.uniform_index(15);  // <= 16
        // the normal-equations oracle needs full column rank, so N >= D here;
        // underdetermined shapes are covered by the perturbation probe
        const std::size_t lo = std::max(c, d);
        const std::size_t n = lo + rng.uniform_index(40 - lo + 1);
        Matrix e(n, d);
        for (double& v : e.data) v = rng.normal();
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % c);
        SolvedLayer layer = solve_layer(e, labels);
        Matrix y = one_hot(labels, layer.class_order);
        const double res = frobenius_norm(subtract(matmul(e, layer.w), y));
        const double oracle =
            frobenius_norm(subtract(matmul(e, normal_equations_solve(e, y)), y));
        REQUIRE(std::abs(res - oracle) < 1e-8);
    }
}

TEST_CASE("sl residual optimality holds on underdetermined instances", "[classify]") {
    RngState rng(97);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t c = 2 + rng.uniform_index(3);
        const std::size_t n = c + rng.uniform_index(4);       // few samples
        const std::size_t d = n + 2 + rng.uniform_index(10);  // wide: D > N
        Matrix e(n, d);
        for (double& v : e.data) v = rng.normal();
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % c);
        SolvedLayer layer = solve_layer(e, labels);
        Matrix y = one_hot(labels, layer.class_order);
        const double base = frobenius_norm(subtract(matmul(e, layer.w), y));
        CHECK(base < 1e-8); // wide full-row-rank systems interpolate exactly
        for (int p = 0; p < 20; ++p) {
            Matrix perturbed = layer.w;
            Matrix noise(perturbed.rows, perturbed.cols);
            for (double& v : noise.data) v = rng.normal();
            const double scale = 0.01 / frobenius_norm(noise);
            for (std::size_t i = 0; i < noise.data.size(); ++i)
                perturbed.data[i] += scale * noise.data[i];
            REQUIRE(base <= frobenius_norm(subtract(matmul(e, perturbed), y)) + 1e-12);
        }
    }
}
