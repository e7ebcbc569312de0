#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include <fstream>

#include "pillid/preprocess.hpp"
#include "pillid/synthgen.hpp"

using namespace pillid;

namespace {

VialScene make_scene(int pill_count_hint = 10) {
    PillClassSpec cls;
    cls.class_id = 3;
    cls.name = "C3";
    cls.front.shape = PillShape::round;
    cls.front.color = {230, 230, 230};
    cls.front.imprint = "C3";
    cls.front.size_rows = cls.front.size_cols = 16;
    cls.back = cls.front;
    cls.back.side = PillSide::back;
    cls.back.imprint = "";
    VialTemplate vial = make_vial_template(0, 256);
    RngState rng(42);
    return compose_vial_scene(cls, vial, rng, pill_count_hint);
}

} // namespace

TEST_CASE("gray mode sets every background pixel to 128 exactly", "[preprocess]") {
    VialScene scene = make_scene();
    auto res = extract_single_pills(scene.image, scene.pills, BackgroundMode::gray, 64);
    REQUIRE_FALSE(res.pills.empty());
    for (const auto& pill : res.pills)
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x)
                if (pill.mask.at(x, y) == 0)
                    for (int c = 0; c < 3; ++c)
                        REQUIRE(pill.raster.at(x, y, c) == 128);
}

TEST_CASE("output count equals pill instance count", "[preprocess]") {
    VialScene scene = make_scene();
    REQUIRE(scene.pills.size() == 10);
    auto res = extract_single_pills(scene.image, scene.pills, BackgroundMode::bbox, 64);
    CHECK(res.pills.size() == 10);
    CHECK(res.warnings.empty());
}

TEST_CASE("blurred mode leaves a constant background unchanged", "[preprocess]") {
    // one pill pasted on a constant background
    ImageRgb scene(128, 128);
    fill_rgb(scene, {90, 90, 90});
    PillInstance inst;
    inst.class_id = 0;
    inst.mask = ImageGray(128, 128);
    for (int y = 56; y < 72; ++y)
        for (int x = 56; x < 72; ++x) {
            inst.mask.at(x, y) = 255;
            scene.set(x, y, {220, 40, 40});
        }
    inst.center_x = inst.center_y = 64;
    auto res = extract_single_pills(scene, {inst}, BackgroundMode::blurred, 32);
    auto bbox = extract_single_pills(scene, {inst}, BackgroundMode::bbox, 32);
    REQUIRE(res.pills.size() == 1);
    int background_changed = 0;
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            if (res.pills[0].mask.at(x, y) == 0)
                for (int c = 0; c < 3; ++c)
                    background_changed +=
                        res.pills[0].raster.at(x, y, c) != bbox.pills[0].raster.at(x, y, c);
    CHECK(background_changed == 0);
}

TEST_CASE("mask-interior pixels are identical across the three modes", "[preprocess]") {
    VialScene scene = make_scene();
    auto blurred = extract_single_pills(scene.image, scene.pills, BackgroundMode::blurred, 64);
    auto gray = extract_single_pills(scene.image, scene.pills, BackgroundMode::gray, 64);
    auto bbox = extract_single_pills(scene.image, scene.pills, BackgroundMode::bbox, 64);
    REQUIRE(blurred.pills.size() == gray.pills.size());
    REQUIRE(blurred.pills.size() == bbox.pills.size());
    for (std::size_t i = 0; i < blurred.pills.size(); ++i) {
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x) {
                if (blurred.pills[i].mask.at(x, y) == 0) continue;
                for (int c = 0; c < 3; ++c) {
                    REQUIRE(blurred.pills[i].raster.at(x, y, c) ==
                            gray.pills[i].raster.at(x, y, c));
                    REQUIRE(blurred.pills[i].raster.at(x, y, c) ==
                            bbox.pills[i].raster.at(x, y, c));
                }
            }
    }
}

TEST_CASE("mask centroid lands near the crop center", "[preprocess]") {
    VialScene scene = make_scene();
    auto res = extract_single_pills(scene.image, scene.pills, BackgroundMode::gray, 64);
    for (const auto& pill : res.pills) {
        double cx = 0.0, cy = 0.0, n = 0.0;
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x)
                if (pill.mask.at(x, y) != 0) {
                    cx += x;
                    cy += y;
                    n += 1.0;
                }
        REQUIRE(n > 0.0);
        CHECK(std::abs(cx / n - 31.5) <= 16.0);
        CHECK(std::abs(cy / n - 31.5) <= 16.0);
    }
}

TEST_CASE("empty mask is skipped with a warning", "[preprocess]") {
    VialScene scene = make_scene();
    PillInstance empty;
    empty.class_id = 9;
    empty.mask = ImageGray(scene.image.width, scene.image.height);
    std::vector<PillInstance> pills = scene.pills;
    pills.push_back(std::move(empty));
    auto res = extract_single_pills(scene.image, pills, BackgroundMode::gray, 64, 7);
    CHECK(res.pills.size() == scene.pills.size());
    REQUIRE(res.warnings.size() == 1);
    CHECK(res.warnings[0].find("empty mask") != std::string::npos);
}

TEST_CASE("scene with no pills is rejected", "[preprocess]") {
    ImageRgb img(32, 32);
    CHECK_THROWS_AS(extract_single_pills(img, {}, BackgroundMode::gray, 16),
                    DegenerateInputError);
}

TEST_CASE("crops persist with encoded filenames and a label sidecar", "[preprocess]") {
    VialScene scene = make_scene();
    auto res = extract_single_pills(scene.image, scene.pills, BackgroundMode::gray, 32, 5);
    auto dir = std::filesystem::temp_directory_path() / "pillid_crops";
    std::filesystem::remove_all(dir);
    const auto files = write_single_pills(dir.string(), res.pills);
    REQUIRE(files.size() == res.pills.size());
    CHECK(files[0] == "scene5_pill0_gray.ppm");
    for (const auto& name : files) CHECK(std::filesystem::exists(dir / name));

    std::ifstream is(dir / "scene5_pills.json");
    nlohmann::json sidecar = nlohmann::json::parse(is);
    REQUIRE(sidecar.size() == files.size());
    for (const auto& name : files) CHECK(sidecar.at(name) == 3); // the scene class
    // round trip one crop
    CHECK(read_ppm((dir / files[0]).string()) == res.pills[0].raster);
    std::filesystem::remove_all(dir);
}
