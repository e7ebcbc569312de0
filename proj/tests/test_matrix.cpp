#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pillid/matrix.hpp"

using namespace pillid;

namespace {
std::filesystem::path temp_file(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("pillid_test_" + name);
    std::filesystem::remove(p);
    return p;
}
} // namespace

TEST_CASE("matmul against hand results", "[matrix]") {
    Matrix a(2, 3);
    a.data = {1, 2, 3, 4, 5, 6};
    Matrix b(3, 2);
    b.data = {7, 8, 9, 10, 11, 12};
    Matrix c = matmul(a, b);
    REQUIRE(c.rows == 2);
    REQUIRE(c.cols == 2);
    CHECK(c.at(0, 0) == 58.0);
    CHECK(c.at(0, 1) == 64.0);
    CHECK(c.at(1, 0) == 139.0);
    CHECK(c.at(1, 1) == 154.0);

    CHECK(matmul(Matrix::identity(3), b) == b);
}

TEST_CASE("matmul transpose variants agree with explicit transpose", "[matrix]") {
    RngState rng(11);
    Matrix a = kaiming_normal_init(4, 6, rng);
    Matrix b = kaiming_normal_init(5, 6, rng);
    Matrix c = kaiming_normal_init(4, 3, rng);
    CHECK(frobenius_norm(subtract(matmul_nt(a, b), matmul(a, transpose(b)))) < 1e-12);
    CHECK(frobenius_norm(subtract(matmul_tn(a, c), matmul(transpose(a), c))) < 1e-12);
}

TEST_CASE("matrix persistence round trip is exact", "[matrix]") {
    RngState rng(3);
    Matrix m = kaiming_normal_init(7, 5, rng);
    auto path = temp_file("mat.bin");
    save_matrix(path.string(), m);
    Matrix back = load_matrix(path.string());
    CHECK(back == m);
    std::filesystem::remove(path);
}

TEST_CASE("matrix load rejects bad magic and truncation", "[matrix]") {
    auto path = temp_file("mat_bad.bin");
    {
        std::ofstream os(path, std::ios::binary);
        os.write("NOTMAGIC", 8);
    }
    CHECK_THROWS_AS(load_matrix(path.string()), CorruptArtifactError);

    RngState rng(4);
    Matrix m = kaiming_normal_init(6, 6, rng);
    save_matrix(path.string(), m);
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 9);
    CHECK_THROWS_AS(load_matrix(path.string()), CorruptArtifactError);
    std::filesystem::remove(path);

    CHECK_THROWS_AS(load_matrix("/nonexistent/pillid.bin"), IoError);
}

TEST_CASE("require_finite flags NaN", "[matrix]") {
    Matrix m(2, 2);
    m.at(1, 1) = std::nan("");
    CHECK_THROWS_AS(require_finite(m, "t"), DegenerateInputError);
}
