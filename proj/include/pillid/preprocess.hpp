#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pillid/errors.hpp"
#include "pillid/image.hpp"
#include "pillid/synthgen.hpp"

namespace pillid {

enum class BackgroundMode { blurred, gray, bbox };

inline const char* to_string(BackgroundMode m) {
    switch (m) {
        case BackgroundMode::blurred: return "blurred";
        case BackgroundMode::gray: return "gray";
        default: return "bbox";
    }
}

inline BackgroundMode background_mode_from_string(const std::string& s) {
    if (s == "blurred") return BackgroundMode::blurred;
    if (s == "gray") return BackgroundMode::gray;
    if (s == "bbox") return BackgroundMode::bbox;
    throw ConfigError("unknown background mode: " + s);
}

// One cropped pill ready for the encoder: square raster of side L with the
// pill centered, background treated per mode, mask aligned with the raster.
struct SinglePillImage {
    ImageRgb raster;
    ImageGray mask;
    int scene_id = -1;
    int pill_index = -1;
    int class_id = -1;
    BackgroundMode mode = BackgroundMode::blurred;
};

struct ExtractionResult {
    std::vector<SinglePillImage> pills;
    std::vector<std::string> warnings;
};

namespace detail {

// nearest-neighbor square crop + resize shared by raster and mask so that
// both stay aligned and mask-interior pixels are mode-independent
inline int sample_coord(int out, int out_size, int src_origin, int src_side) {
    const long long num = static_cast<long long>(out) * src_side;
    return src_origin + static_cast<int>(num / out_size);
}

} // namespace detail

inline ExtractionResult extract_single_pills(const ImageRgb& scene,
                                             const std::vector<PillInstance>& pills,
                                             BackgroundMode mode, int out_size,
                                             int scene_id = -1) {
    if (pills.empty())
        throw DegenerateInputError("extract_single_pills: scene has no pill instances");
    ExtractionResult result;
    for (std::size_t idx = 0; idx < pills.size(); ++idx) {
        const PillInstance& pill = pills[idx];
        int min_x = scene.width, min_y = scene.height, max_x = -1, max_y = -1;
        for (int y = 0; y < pill.mask.height; ++y)
            for (int x = 0; x < pill.mask.width; ++x)
                if (pill.mask.at(x, y) != 0) {
                    min_x = std::min(min_x, x);
                    max_x = std::max(max_x, x);
                    min_y = std::min(min_y, y);
                    max_y = std::max(max_y, y);
                }
        if (max_x < 0) {
            result.warnings.push_back("scene " + std::to_string(scene_id) + " pill " +
                                      std::to_string(idx) + ": empty mask, skipped");
            continue;
        }

        // square source window centered on the bounding box, clamped to scene
        const int bw = max_x - min_x + 1, bh = max_y - min_y + 1;
        const int side = std::max(bw, bh);
        int sx = min_x - (side - bw) / 2;
        int sy = min_y - (side - bh) / 2;
        sx = std::clamp(sx, 0, std::max(0, scene.width - side));
        sy = std::clamp(sy, 0, std::max(0, scene.height - side));

        SinglePillImage out;
        out.raster = ImageRgb(out_size, out_size);
        out.mask = ImageGray(out_size, out_size);
        out.scene_id = scene_id;
        out.pill_index = static_cast<int>(idx);
        out.class_id = pill.class_id;
        out.mode = mode;
        for (int y = 0; y < out_size; ++y) {
            const int syy = detail::sample_coord(y, out_size, sy, side);
            for (int x = 0; x < out_size; ++x) {
                const int sxx = detail::sample_coord(x, out_size, sx, side);
                const bool inside = scene.in_bounds(sxx, syy);
                out.mask.at(x, y) = inside && pill.mask.at(sxx, syy) != 0 ? 255 : 0;
                for (int c = 0; c < 3; ++c)
                    out.raster.at(x, y, c) = inside ? scene.at(sxx, syy, c) : 0;
            }
        }

        switch (mode) {
            case BackgroundMode::bbox:
                break;
            case BackgroundMode::gray:
                for (int y = 0; y < out_size; ++y)
                    for (int x = 0; x < out_size; ++x)
                        if (out.mask.at(x, y) == 0)
                            for (int c = 0; c < 3; ++c) out.raster.at(x, y, c) = 128;
                break;
            case BackgroundMode::blurred: {
                const ImageRgb blurred = box_filter(out.raster, 10);
                for (int y = 0; y < out_size; ++y)
                    for (int x = 0; x < out_size; ++x)
                        if (out.mask.at(x, y) == 0)
                            for (int c = 0; c < 3; ++c)
                                out.raster.at(x, y, c) = blurred.at(x, y, c);
                break;
            }
        }
        result.pills.push_back(std::move(out));
    }
    return result;
}

// Writes crops as PPM files named scene<id>_pill<index>_<mode>.ppm plus a
// per-scene JSON sidecar mapping each file to its class label.
inline std::vector<std::string> write_single_pills(const std::string& dir,
                                                   const std::vector<SinglePillImage>& pills) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::vector<std::string> files;
    nlohmann::json sidecar = nlohmann::json::object();
    int scene_id = -1;
    for (const auto& pill : pills) {
        scene_id = pill.scene_id;
        const std::string name = "scene" + std::to_string(pill.scene_id) + "_pill" +
                                 std::to_string(pill.pill_index) + "_" +
                                 to_string(pill.mode) + ".ppm";
        write_ppm((fs::path(dir) / name).string(), pill.raster);
        sidecar[name] = pill.class_id;
        files.push_back(name);
    }
    const std::string sidecar_name = "scene" + std::to_string(scene_id) + "_pills.json";
    std::ofstream os(fs::path(dir) / sidecar_name);
    if (!os) throw IoError("cannot write sidecar in " + dir);
    os << sidecar.dump(2) << "\n";
    return files;
}

} // namespace pillid
