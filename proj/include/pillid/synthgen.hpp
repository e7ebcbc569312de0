#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pillid/errors.hpp"
#include "pillid/image.hpp"
#include "pillid/rng.hpp"

namespace pillid {

enum class PillShape { round, oval, capsule };
enum class PillSide { front, back };

inline const char* to_string(PillShape s) {
    switch (s) {
        case PillShape::round: return "round";
        case PillShape::oval: return "oval";
        default: return "capsule";
    }
}

inline PillShape pill_shape_from_string(const std::string& s) {
    if (s == "round") return PillShape::round;
    if (s == "oval") return PillShape::oval;
    if (s == "capsule") return PillShape::capsule;
    throw ConfigError("unknown pill shape: " + s);
}

struct PillSpriteSpec {
    PillShape shape = PillShape::round;
    std::array<std::uint8_t, 3> color = {255, 255, 255};
    std::string imprint;       // up to 6 glyphs, rendered on the face
    PillSide side = PillSide::front;
    int size_rows = 0;         // sprite canvas height, >= 8
    int size_cols = 0;         // sprite canvas width, >= 8

    void validate() const {
        if (size_rows < 8 || size_cols < 8)
            throw DegenerateInputError("pill sprite: sizes must be >= 8 pixels");
        if (imprint.size() > 6)
            throw DegenerateInputError("pill sprite: imprint longer than 6 glyphs");
    }
};

// One pill type: front and back share shape, color and size.
struct PillClassSpec {
    int class_id = 0;
    std::string name;
    PillSpriteSpec front;
    PillSpriteSpec back;
};

struct PillInstance {
    int class_id = 0;
    ImageGray mask;            // scene-sized silhouette
    int center_x = 0;
    int center_y = 0;
    double rotation_deg = 0.0;
    PillSide side = PillSide::front;
};

struct VialScene {
    ImageRgb image;
    std::vector<PillInstance> pills;
    int vial_template_id = 0;
    int class_id = 0;
};

struct VialTemplate {
    int id = 0;
    ImageRgb image;
    double center_x = 0.0;
    double center_y = 0.0;
    double r_vrm = 0.0;        // valid region mask radius
};

// r_clc = r_vrm - sqrt(s_r^2 + s_c^2)
inline double central_location_radius(double r_vrm, double s_r, double s_c) {
    const double diag = std::sqrt(s_r * s_r + s_c * s_c);
    if (!(r_vrm > diag))
        throw DegenerateInputError("central_location_radius: pill too large for vial");
    return r_vrm - diag;
}

namespace detail {

inline std::array<std::uint8_t, 3> hsv_to_rgb(double h, double s, double v) {
    h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0);
    const double c = v * s;
    const double x = c * (1.0 - std::abs(std::fmod(h / 60.0, 2.0) - 1.0));
    const double m = v - c;
    double r = 0, g = 0, b = 0;
    if (h < 60) { r = c; g = x; }
    else if (h < 120) { r = x; g = c; }
    else if (h < 180) { g = c; b = x; }
    else if (h < 240) { g = x; b = c; }
    else if (h < 300) { r = x; b = c; }
    else { r = c; b = x; }
    auto to8 = [&](double u) {
        return static_cast<std::uint8_t>(std::llround(255.0 * (u + m)));
    };
    return {to8(r), to8(g), to8(b)};
}

inline bool inside_pill_shape(const PillSpriteSpec& spec, int x, int y) {
    const double w = spec.size_cols, h = spec.size_rows;
    switch (spec.shape) {
        case PillShape::round:
        case PillShape::oval: {
            const double rx = w / 2.0 - 1.0, ry = h / 2.0 - 1.0;
            const double dx = (x - (w - 1) / 2.0) / rx;
            const double dy = (y - (h - 1) / 2.0) / ry;
            return dx * dx + dy * dy <= 1.0;
        }
        case PillShape::capsule: {
            const double r = h / 2.0 - 1.0;
            const double cy = (h - 1) / 2.0;
            const double x0 = r + 1.0, x1 = w - 2.0 - r;
            const double px = std::clamp(static_cast<double>(x), x0, x1);
            const double dx = x - px, dy = y - cy;
            return dx * dx + dy * dy <= r * r;
        }
    }
    return false;
}

} // namespace detail

// Procedural single-pill sprite: flat color with radial shading and speckle,
// imprint glyphs in a contrasting color, black outside the silhouette.
inline Sprite make_pill_sprite(const PillSpriteSpec& spec, RngState& rng) {
    spec.validate();
    Sprite sp;
    sp.image = ImageRgb(spec.size_cols, spec.size_rows);
    sp.mask = ImageGray(spec.size_cols, spec.size_rows);

    const double cx = (spec.size_cols - 1) / 2.0, cy = (spec.size_rows - 1) / 2.0;
    const double rmax = std::hypot(cx, cy);
    for (int y = 0; y < spec.size_rows; ++y)
        for (int x = 0; x < spec.size_cols; ++x) {
            if (!detail::inside_pill_shape(spec, x, y)) continue;
            sp.mask.at(x, y) = 255;
            const double shade = 1.0 - 0.25 * (std::hypot(x - cx, y - cy) / rmax);
            const double speckle = (rng.uniform() - 0.5) * 12.0;
            for (int c = 0; c < 3; ++c) {
                const double v = spec.color[c] * shade + speckle;
                sp.image.at(x, y, c) =
                    static_cast<std::uint8_t>(std::clamp<long long>(std::llround(v), 0, 255));
            }
        }

    if (!spec.imprint.empty()) {
        const double lum =
            0.299 * spec.color[0] + 0.587 * spec.color[1] + 0.114 * spec.color[2];
        const std::array<std::uint8_t, 3> ink =
            lum > 127.0 ? std::array<std::uint8_t, 3>{25, 25, 25}
                        : std::array<std::uint8_t, 3>{235, 235, 235};
        int scale = 1;
        while (text_width(spec.imprint, scale + 1) <= spec.size_cols * 3 / 4 &&
               7 * (scale + 1) <= spec.size_rows * 3 / 5)
            ++scale;
        if (text_width(spec.imprint, scale) > spec.size_cols * 3 / 4 ||
            7 * scale > spec.size_rows * 3 / 5)
            throw DegenerateInputError("pill sprite: imprint does not fit the face");
        const int tx = static_cast<int>(cx) - text_width(spec.imprint, scale) / 2;
        const int ty = static_cast<int>(cy) - 7 * scale / 2;
        ImageRgb glyphs = sp.image;
        draw_text(glyphs, spec.imprint, tx, ty, scale, ink);
        // keep glyph pixels only where the silhouette is set
        for (int y = 0; y < spec.size_rows; ++y)
            for (int x = 0; x < spec.size_cols; ++x)
                if (sp.mask.at(x, y) != 0)
                    for (int c = 0; c < 3; ++c) sp.image.at(x, y, c) = glyphs.at(x, y, c);
    }
    return sp;
}

// Procedurally drawn vial bottom: tinted body ring, interior base, ribbed-base
// rings and engraving arcs as noise sources.
inline VialTemplate make_vial_template(int id, int resolution) {
    VialTemplate t;
    t.id = id;
    t.image = ImageRgb(resolution, resolution);
    t.center_x = (resolution - 1) / 2.0;
    t.center_y = (resolution - 1) / 2.0;
    t.r_vrm = 0.42 * resolution;

    static const std::array<std::array<std::uint8_t, 3>, 3> body_tints = {{
        {196, 140, 60},   // amber
        {214, 214, 208},  // frosted white
        {110, 150, 190},  // blue
    }};
    const auto tint = body_tints[static_cast<std::size_t>(id) % body_tints.size()];

    fill_rgb(t.image, {24, 24, 26});
    const double r_outer = 0.48 * resolution;
    draw_disk(t.image, t.center_x, t.center_y, r_outer, tint);
    const std::array<std::uint8_t, 3> base = {
        static_cast<std::uint8_t>(tint[0] * 3 / 4), static_cast<std::uint8_t>(tint[1] * 3 / 4),
        static_cast<std::uint8_t>(tint[2] * 3 / 4)};
    draw_disk(t.image, t.center_x, t.center_y, t.r_vrm + 4.0, base);

    // ribbed base rings
    const std::array<std::uint8_t, 3> rib = {
        static_cast<std::uint8_t>(std::min(255, base[0] + 28)),
        static_cast<std::uint8_t>(std::min(255, base[1] + 28)),
        static_cast<std::uint8_t>(std::min(255, base[2] + 28))};
    for (int k = 0; k < 2 + id % 3; ++k) {
        const double r = t.r_vrm * (0.55 + 0.14 * k);
        draw_ring(t.image, t.center_x, t.center_y, r - 1.0, r + 1.0, rib);
    }
    // engraving arcs
    const std::array<std::uint8_t, 3> engrave = {
        static_cast<std::uint8_t>(base[0] / 2), static_cast<std::uint8_t>(base[1] / 2),
        static_cast<std::uint8_t>(base[2] / 2)};
    for (int k = 0; k <= id % 4; ++k) {
        const double a0 = 50.0 * id + 95.0 * k;
        draw_arc(t.image, t.center_x, t.center_y, t.r_vrm * 0.30, t.r_vrm * 0.34,
                 a0, a0 + 40.0 + 15.0 * k, engrave);
    }
    return t;
}

// Composes one vial scene: repeated (side, rotation, placement) draws with
// shadow compositing, occupancy subtraction and the 10%-area stop rule.
inline VialScene compose_vial_scene(const PillClassSpec& cls, const VialTemplate& vial,
                                    RngState& rng, int max_pills = 10) {
    cls.front.validate();
    cls.back.validate();
    if (cls.front.size_rows != cls.back.size_rows || cls.front.size_cols != cls.back.size_cols)
        throw DegenerateInputError("compose_vial_scene: front/back sizes differ");

    const double r_clc =
        central_location_radius(vial.r_vrm, cls.front.size_rows, cls.front.size_cols);

    VialScene scene;
    scene.image = vial.image;
    scene.vial_template_id = vial.id;
    scene.class_id = cls.class_id;

    const Sprite front = make_pill_sprite(cls.front, rng);
    const Sprite back = make_pill_sprite(cls.back, rng);

    const int w = scene.image.width, h = scene.image.height;
    ImageGray occupancy(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double dx = x - vial.center_x, dy = y - vial.center_y;
            if (dx * dx + dy * dy <= r_clc * r_clc) occupancy.at(x, y) = 255;
        }
    const double initial_area = static_cast<double>(occupancy.count_nonzero());

    for (int n = 0; n < max_pills; ++n) {
        std::vector<std::pair<int, int>> centers;
        centers.reserve(static_cast<std::size_t>(initial_area));
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (occupancy.at(x, y) != 0) centers.emplace_back(x, y);
        if (centers.empty()) {
            if (n == 0)
                throw DegenerateInputError("compose_vial_scene: no valid placement center");
            break;
        }

        const PillSide side = rng.uniform_index(2) == 0 ? PillSide::front : PillSide::back;
        const double angle = rng.uniform_real(0.0, 360.0);
        const Sprite rotated = rotate_sprite(side == PillSide::front ? front : back, angle);
        const auto [cx, cy] = centers[rng.uniform_index(centers.size())];

        const int half = rotated.image.width / 2;
        const int ox = cx - half, oy = cy - half;

        // shadow first, offset a little from the pill
        const std::vector<double> shadow = gaussian_blur_unit(rotated.mask, 3.0);
        for (int y = 0; y < rotated.mask.height; ++y)
            for (int x = 0; x < rotated.mask.width; ++x) {
                const double sw = shadow[static_cast<std::size_t>(y) * rotated.mask.width + x];
                if (sw <= 0.0) continue;
                const int px = ox + x + 2, py = oy + y + 2;
                if (!scene.image.in_bounds(px, py)) continue;
                for (int c = 0; c < 3; ++c) {
                    const double v = scene.image.at(px, py, c) * (1.0 - 0.35 * sw);
                    scene.image.at(px, py, c) = static_cast<std::uint8_t>(std::llround(v));
                }
            }

        PillInstance inst;
        inst.class_id = cls.class_id;
        inst.mask = ImageGray(w, h);
        inst.center_x = cx;
        inst.center_y = cy;
        inst.rotation_deg = angle;
        inst.side = side;
        for (int y = 0; y < rotated.mask.height; ++y)
            for (int x = 0; x < rotated.mask.width; ++x) {
                if (rotated.mask.at(x, y) == 0) continue;
                const int px = ox + x, py = oy + y;
                if (!scene.image.in_bounds(px, py)) continue;
                inst.mask.at(px, py) = 255;
                for (int c = 0; c < 3; ++c)
                    scene.image.at(px, py, c) = rotated.image.at(x, y, c);
                occupancy.at(px, py) = 0;
            }
        scene.pills.push_back(std::move(inst));

        if (static_cast<double>(occupancy.count_nonzero()) < 0.10 * initial_area) break;
    }
    return scene;
}

// Raster 0 is the all-lights image; rasters 1..6 apply a directional linear
// brightness gradient (+-30%) centered at angles 0, 60, ..., 300 degrees.
inline std::array<ImageRgb, 7> render_light_conditions(const ImageRgb& scene) {
    std::array<ImageRgb, 7> out;
    out[0] = scene;
    // exact (cos, sin) pairs for 0, 60, ..., 300 degrees so that opposite
    // angles produce bit-exact mirrored gradients
    const double s3 = std::sqrt(3.0) / 2.0;
    const double cs[6] = {1.0, 0.5, -0.5, -1.0, -0.5, 0.5};
    const double sn[6] = {0.0, s3, s3, 0.0, -s3, -s3};
    const double cx = (scene.width - 1) / 2.0, cy = (scene.height - 1) / 2.0;
    const double rmax = std::hypot(cx, cy);
    for (int k = 1; k <= 6; ++k) {
        out[k] = ImageRgb(scene.width, scene.height);
        const double dc = cs[k - 1], ds = sn[k - 1];
        for (int y = 0; y < scene.height; ++y)
            for (int x = 0; x < scene.width; ++x) {
                const double proj = ((x - cx) * dc + (y - cy) * ds) / rmax;
                const double gain = 1.0 + 0.3 * proj;
                for (int c = 0; c < 3; ++c) {
                    const long long v = std::llround(scene.at(x, y, c) * gain);
                    out[k].at(x, y, c) = static_cast<std::uint8_t>(std::clamp<long long>(v, 0, 255));
                }
            }
    }
    return out;
}

// Deterministic class specs built as twin pairs: classes 2k and 2k+1 share
// shape, color and size and differ only in one imprint glyph, the fine-grained
// regime this dataset exists to exercise.
inline std::vector<PillClassSpec> make_class_specs(int count, RngState& rng) {
    std::vector<PillClassSpec> out;
    out.reserve(static_cast<std::size_t>(count));
    PillSpriteSpec pair_spec;
    for (int i = 0; i < count; ++i) {
        const int pair = i / 2;
        if (i % 2 == 0) {
            pair_spec = PillSpriteSpec{};
            pair_spec.shape = static_cast<PillShape>(pair % 3);
            const double hue = std::fmod(137.50776405 * pair, 360.0);
            const double sat = 0.35 + 0.45 * rng.uniform();
            const double val = 0.75 + 0.20 * rng.uniform();
            pair_spec.color = detail::hsv_to_rgb(hue, sat, val);
            // sized so two glyphs render at scale 2: the imprint has to stay
            // legible after the crop resize, it is the only twin separator
            switch (pair_spec.shape) {
                case PillShape::round: {
                    const int d = 32 + static_cast<int>(rng.uniform_index(4)) * 2;
                    pair_spec.size_rows = d;
                    pair_spec.size_cols = d;
                    break;
                }
                case PillShape::oval:
                    pair_spec.size_rows = 26 + static_cast<int>(rng.uniform_index(3)) * 2;
                    pair_spec.size_cols = 36 + static_cast<int>(rng.uniform_index(4)) * 2;
                    break;
                case PillShape::capsule:
                    pair_spec.size_rows = 24 + static_cast<int>(rng.uniform_index(2)) * 2;
                    pair_spec.size_cols = 40 + static_cast<int>(rng.uniform_index(4)) * 2;
                    break;
            }
        }
        PillClassSpec cls;
        cls.class_id = i;
        const char letter = static_cast<char>('A' + pair % 26);
        const char digit = static_cast<char>('0' + i % 10);
        cls.name = std::string(1, letter) + digit;

        cls.front = pair_spec;
        cls.front.side = PillSide::front;
        cls.front.imprint = cls.name;
        cls.back = pair_spec;
        cls.back.side = PillSide::back;
        cls.back.imprint = std::string(1, digit) + letter; // reversed, still unique
        out.push_back(std::move(cls));
    }
    return out;
}

} // namespace pillid
