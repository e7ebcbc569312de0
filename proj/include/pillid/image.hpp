#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "pillid/errors.hpp"

namespace pillid {

struct ImageRgb {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels; // 3 * width * height, interleaved

    ImageRgb() = default;
    ImageRgb(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(3) * w * h, 0) {}

    std::uint8_t& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    std::uint8_t at(int x, int y, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

    void set(int x, int y, std::array<std::uint8_t, 3> rgb) {
        at(x, y, 0) = rgb[0];
        at(x, y, 1) = rgb[1];
        at(x, y, 2) = rgb[2];
    }

    bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

    friend bool operator==(const ImageRgb& a, const ImageRgb& b) {
        return a.width == b.width && a.height == b.height && a.pixels == b.pixels;
    }
};

struct ImageGray {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    ImageGray() = default;
    ImageGray(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, 0) {}

    std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

    bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

    std::size_t count_nonzero() const {
        std::size_t n = 0;
        for (auto v : pixels) n += v != 0;
        return n;
    }

    friend bool operator==(const ImageGray& a, const ImageGray& b) {
        return a.width == b.width && a.height == b.height && a.pixels == b.pixels;
    }
};

// --- PPM / PGM --------------------------------------------------------------

inline void write_ppm(const std::string& path, const ImageRgb& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    os << "P6\n" << img.width << " " << img.height << "\n255\n";
    os.write(reinterpret_cast<const char*>(img.pixels.data()),
             static_cast<std::streamsize>(img.pixels.size()));
    if (!os) throw IoError("write failed: " + path);
}

inline void write_pgm(const std::string& path, const ImageGray& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    os << "P5\n" << img.width << " " << img.height << "\n255\n";
    os.write(reinterpret_cast<const char*>(img.pixels.data()),
             static_cast<std::streamsize>(img.pixels.size()));
    if (!os) throw IoError("write failed: " + path);
}

namespace detail {

inline int read_pnm_token(std::istream& is) {
    // skips whitespace and '#' comments
    int c = is.get();
    while (c == '#' || std::isspace(c)) {
        if (c == '#')
            while (c != '\n' && c != EOF) c = is.get();
        c = is.get();
    }
    int value = 0;
    bool any = false;
    while (c >= '0' && c <= '9') {
        value = value * 10 + (c - '0');
        any = true;
        c = is.get();
    }
    if (!any) throw CorruptArtifactError("pnm: malformed header");
    return value;
}

} // namespace detail

inline ImageRgb read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char m0 = 0, m1 = 0;
    is.get(m0);
    is.get(m1);
    if (m0 != 'P' || m1 != '6') throw CorruptArtifactError("ppm: bad magic");
    const int w = detail::read_pnm_token(is);
    const int h = detail::read_pnm_token(is);
    const int maxval = detail::read_pnm_token(is);
    if (maxval != 255) throw CorruptArtifactError("ppm: unsupported maxval");
    ImageRgb img(w, h);
    is.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (is.gcount() != static_cast<std::streamsize>(img.pixels.size()))
        throw CorruptArtifactError("ppm: truncated payload");
    return img;
}

inline ImageGray read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char m0 = 0, m1 = 0;
    is.get(m0);
    is.get(m1);
    if (m0 != 'P' || m1 != '5') throw CorruptArtifactError("pgm: bad magic");
    const int w = detail::read_pnm_token(is);
    const int h = detail::read_pnm_token(is);
    const int maxval = detail::read_pnm_token(is);
    if (maxval != 255) throw CorruptArtifactError("pgm: unsupported maxval");
    ImageGray img(w, h);
    is.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (is.gcount() != static_cast<std::streamsize>(img.pixels.size()))
        throw CorruptArtifactError("pgm: truncated payload");
    return img;
}

// --- drawing ----------------------------------------------------------------

inline void fill_rgb(ImageRgb& img, std::array<std::uint8_t, 3> rgb) {
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) img.set(x, y, rgb);
}

inline void draw_disk(ImageRgb& img, double cx, double cy, double r,
                      std::array<std::uint8_t, 3> rgb) {
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double dx = x - cx, dy = y - cy;
            if (dx * dx + dy * dy <= r * r) img.set(x, y, rgb);
        }
}

inline void draw_ring(ImageRgb& img, double cx, double cy, double r_in, double r_out,
                      std::array<std::uint8_t, 3> rgb) {
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            if (d2 >= r_in * r_in && d2 <= r_out * r_out) img.set(x, y, rgb);
        }
}

// Arc of a ring between two angles (degrees, measured from +x axis).
inline void draw_arc(ImageRgb& img, double cx, double cy, double r_in, double r_out,
                     double a0_deg, double a1_deg, std::array<std::uint8_t, 3> rgb) {
    const double a0 = a0_deg * M_PI / 180.0, a1 = a1_deg * M_PI / 180.0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double dx = x - cx, dy = y - cy;
            const double d2 = dx * dx + dy * dy;
            if (d2 < r_in * r_in || d2 > r_out * r_out) continue;
            double ang = std::atan2(dy, dx);
            if (ang < a0) ang += 2.0 * M_PI;
            if (ang >= a0 && ang <= a1) img.set(x, y, rgb);
        }
}

// --- filters ----------------------------------------------------------------

// Gaussian blur of a binary mask, output normalized to [0, 1].
inline std::vector<double> gaussian_blur_unit(const ImageGray& mask, double sigma) {
    const int w = mask.width, h = mask.height;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += kernel[i + radius];
    }
    for (double& k : kernel) k /= sum;

    std::vector<double> tmp(static_cast<std::size_t>(w) * h, 0.0);
    std::vector<double> out(static_cast<std::size_t>(w) * h, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int xx = std::clamp(x + i, 0, w - 1);
                acc += kernel[i + radius] * (mask.at(xx, y) != 0 ? 1.0 : 0.0);
            }
            tmp[static_cast<std::size_t>(y) * w + x] = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int yy = std::clamp(y + i, 0, h - 1);
                acc += kernel[i + radius] * tmp[static_cast<std::size_t>(yy) * w + x];
            }
            out[static_cast<std::size_t>(y) * w + x] = acc;
        }
    return out;
}

// Normalized box filter; the window anchor matches the usual k/2 convention and
// out-of-bounds samples are dropped with renormalization, so a constant image
// is a fixed point everywhere including the border.
inline ImageRgb box_filter(const ImageRgb& img, int size) {
    const int w = img.width, h = img.height;
    const int lo = -(size / 2), hi = size - 1 - size / 2;
    ImageRgb out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int count = 0;
            long sum[3] = {0, 0, 0};
            for (int dy = lo; dy <= hi; ++dy)
                for (int dx = lo; dx <= hi; ++dx) {
                    const int xx = x + dx, yy = y + dy;
                    if (!img.in_bounds(xx, yy)) continue;
                    ++count;
                    for (int c = 0; c < 3; ++c) sum[c] += img.at(xx, yy, c);
                }
            for (int c = 0; c < 3; ++c)
                out.at(x, y, c) = static_cast<std::uint8_t>(
                    std::llround(static_cast<double>(sum[c]) / count));
        }
    return out;
}

// --- geometry ---------------------------------------------------------------

struct Sprite {
    ImageRgb image;
    ImageGray mask; // 255 inside the silhouette, 0 outside
};

// Rotates sprite and mask together (nearest sampling) onto a square canvas
// large enough to hold any rotation of the source.
inline Sprite rotate_sprite(const Sprite& src, double angle_deg) {
    const double rad = angle_deg * M_PI / 180.0;
    const double c = std::cos(rad), s = std::sin(rad);
    const int side = static_cast<int>(std::ceil(std::hypot(src.image.width, src.image.height))) + 2;
    Sprite out;
    out.image = ImageRgb(side, side);
    out.mask = ImageGray(side, side);
    const double ocx = (side - 1) / 2.0, ocy = (side - 1) / 2.0;
    const double icx = (src.image.width - 1) / 2.0, icy = (src.image.height - 1) / 2.0;
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            // inverse rotation into source coordinates
            const double dx = x - ocx, dy = y - ocy;
            const int sx = static_cast<int>(std::llround(c * dx + s * dy + icx));
            const int sy = static_cast<int>(std::llround(-s * dx + c * dy + icy));
            if (!src.image.in_bounds(sx, sy) || src.mask.at(sx, sy) == 0) continue;
            out.mask.at(x, y) = 255;
            for (int ch = 0; ch < 3; ++ch) out.image.at(x, y, ch) = src.image.at(sx, sy, ch);
        }
    return out;
}

// --- tiny 5x7 glyph font (digits and upper-case letters) ---------------------

namespace detail {

struct Glyph {
    char ch;
    std::array<std::uint8_t, 7> rows; // 5 least significant bits per row
};

inline const Glyph* find_glyph(char ch) {
    static const Glyph table[] = {
        {'0', {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e}},
        {'1', {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e}},
        {'2', {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f}},
        {'3', {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e}},
        {'4', {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02}},
        {'5', {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e}},
        {'6', {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e}},
        {'7', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
        {'8', {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e}},
        {'9', {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c}},
        {'A', {0x0e, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11}},
        {'B', {0x1e, 0x11, 0x11, 0x1e, 0x11, 0x11, 0x1e}},
        {'C', {0x0e, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0e}},
        {'D', {0x1c, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1c}},
        {'E', {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x1f}},
        {'F', {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x10}},
        {'G', {0x0e, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0f}},
        {'H', {0x11, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11}},
        {'I', {0x0e, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0e}},
        {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0c}},
        {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
        {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1f}},
        {'M', {0x11, 0x1b, 0x15, 0x15, 0x11, 0x11, 0x11}},
        {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
        {'O', {0x0e, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e}},
        {'P', {0x1e, 0x11, 0x11, 0x1e, 0x10, 0x10, 0x10}},
        {'Q', {0x0e, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0d}},
        {'R', {0x1e, 0x11, 0x11, 0x1e, 0x14, 0x12, 0x11}},
        {'S', {0x0f, 0x10, 0x10, 0x0e, 0x01, 0x01, 0x1e}},
        {'T', {0x1f, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
        {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e}},
        {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0a, 0x04}},
        {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x1b, 0x11}},
        {'X', {0x11, 0x11, 0x0a, 0x04, 0x0a, 0x11, 0x11}},
        {'Y', {0x11, 0x11, 0x0a, 0x04, 0x04, 0x04, 0x04}},
        {'Z', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1f}},
    };
    for (const auto& g : table)
        if (g.ch == ch) return &g;
    return nullptr;
}

} // namespace detail

// Renders text with the 5x7 font at integer scale; pixels outside glyphs are
// left untouched. Returns the rendered text width in pixels.
inline int draw_text(ImageRgb& img, const std::string& text, int x0, int y0, int scale,
                     std::array<std::uint8_t, 3> rgb) {
    int x = x0;
    for (char ch : text) {
        const detail::Glyph* g = detail::find_glyph(ch);
        if (g == nullptr)
            throw DegenerateInputError(std::string("draw_text: unsupported glyph '") + ch + "'");
        for (int r = 0; r < 7; ++r)
            for (int cbit = 0; cbit < 5; ++cbit) {
                if ((g->rows[r] >> (4 - cbit) & 1) == 0) continue;
                for (int sy = 0; sy < scale; ++sy)
                    for (int sx = 0; sx < scale; ++sx) {
                        const int px = x + cbit * scale + sx;
                        const int py = y0 + r * scale + sy;
                        if (img.in_bounds(px, py)) img.set(px, py, rgb);
                    }
            }
        x += 6 * scale; // 5 columns plus 1 of spacing
    }
    return x - x0;
}

inline int text_width(const std::string& text, int scale) {
    return text.empty() ? 0 : static_cast<int>(text.size()) * 6 * scale - scale;
}

} // namespace pillid
