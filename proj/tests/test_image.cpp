#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "pillid/image.hpp"

using namespace pillid;

TEST_CASE("ppm and pgm round trips", "[image]") {
    ImageRgb img(5, 3);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        img.pixels[i] = static_cast<std::uint8_t>(i * 7);
    auto p = std::filesystem::temp_directory_path() / "pillid_t.ppm";
    write_ppm(p.string(), img);
    CHECK(read_ppm(p.string()) == img);

    ImageGray g(4, 6);
    for (std::size_t i = 0; i < g.pixels.size(); ++i)
        g.pixels[i] = static_cast<std::uint8_t>(i * 11);
    auto q = std::filesystem::temp_directory_path() / "pillid_t.pgm";
    write_pgm(q.string(), g);
    CHECK(read_pgm(q.string()) == g);

    std::filesystem::remove(p);
    std::filesystem::remove(q);
}

TEST_CASE("pnm readers reject corruption", "[image]") {
    auto p = std::filesystem::temp_directory_path() / "pillid_bad.ppm";
    {
        std::ofstream os(p, std::ios::binary);
        os << "P6\n4 4\n255\nxx"; // payload far too short
    }
    CHECK_THROWS_AS(read_ppm(p.string()), CorruptArtifactError);
    {
        std::ofstream os(p, std::ios::binary);
        os << "P5\n2 2\n255\nabcd";
    }
    CHECK_THROWS_AS(read_ppm(p.string()), CorruptArtifactError); // wrong magic for ppm
    std::filesystem::remove(p);
}

TEST_CASE("box filter of a constant image is the constant", "[image]") {
    ImageRgb img(17, 13);
    fill_rgb(img, {77, 123, 200});
    ImageRgb out = box_filter(img, 10);
    CHECK(out == img);
}

TEST_CASE("gaussian blur of a mask stays in [0,1] and sums near mask area", "[image]") {
    ImageGray mask(41, 41);
    for (int y = 15; y < 26; ++y)
        for (int x = 15; x < 26; ++x) mask.at(x, y) = 255;
    auto blurred = gaussian_blur_unit(mask, 3.0);
    double total = 0.0;
    for (double v : blurred) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0 + 1e-12);
        total += v;
    }
    CHECK(total == Catch::Approx(121.0).epsilon(0.01));
}

TEST_CASE("rotation by 0 degrees preserves content and 180 flips it", "[image]") {
    Sprite s;
    s.image = ImageRgb(9, 5);
    s.mask = ImageGray(9, 5);
    for (int x = 0; x < 9; ++x) {
        s.mask.at(x, 2) = 255;
        s.image.at(x, 2, 0) = static_cast<std::uint8_t>(20 * x);
    }
    Sprite r0 = rotate_sprite(s, 0.0);
    Sprite r180 = rotate_sprite(s, 180.0);
    CHECK(r0.mask.count_nonzero() == 9);
    CHECK(r180.mask.count_nonzero() == 9);
    // the 180-degree mask is the point reflection of the 0-degree mask
    const int side = r0.mask.width;
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
            CHECK(r0.mask.at(x, y) == r180.mask.at(side - 1 - x, side - 1 - y));
}

TEST_CASE("draw_text rejects unsupported glyphs and renders supported ones", "[image]") {
    ImageRgb img(64, 16);
    CHECK_THROWS_AS(draw_text(img, "a?", 0, 0, 1, {255, 255, 255}), DegenerateInputError);
    draw_text(img, "AB1", 1, 1, 1, {255, 255, 255});
    int lit = 0;
    for (auto v : img.pixels) lit += v != 0;
    CHECK(lit > 20);
}
