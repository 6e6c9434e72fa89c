#include "koa/overlay.hpp"

#include <cmath>
#include <cstring>

namespace koa {

namespace {

// 5x7 glyphs, one byte per row, low 5 bits used (MSB leftmost).
struct Glyph {
    char ch;
    uint8_t rows[7];
};

constexpr Glyph kFont[] = {
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
    {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
    {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
    {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
    {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
    {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
    {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
    {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
    {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
    {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
    {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
    {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
    {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
    {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
    {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
    {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
    {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
    {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
    {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
    {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
    {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
    {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
    {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
    {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
    {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
    {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}},
    {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
    {'Y', {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}},
    {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
    {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
    {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
};

const Glyph* find_glyph(char ch) {
    if (ch >= 'a' && ch <= 'z')
        ch = static_cast<char>(ch - 'a' + 'A');
    for (const Glyph& g : kFont)
        if (g.ch == ch)
            return &g;
    return nullptr;
}

void draw_cross(RgbImage& img, int cx, int cy, const uint8_t color[3]) {
    for (int d = -4; d <= 4; ++d) {
        img.set(cx + d, cy, color[0], color[1], color[2]);
        img.set(cx, cy + d, color[0], color[1], color[2]);
    }
}

void draw_contour(RgbImage& img, const MaskGrid& mask, PixelPoint origin,
                  const uint8_t color[3]) {
    int w = mask.width(), h = mask.height();
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!mask.at(x, y))
                continue;
            bool edge = x == 0 || x == w - 1 || y == 0 || y == h - 1 ||
                        !mask.at(x - 1, y) || !mask.at(x + 1, y) ||
                        !mask.at(x, y - 1) || !mask.at(x, y + 1);
            if (edge)
                img.set(origin.x + x, origin.y + y, color[0], color[1], color[2]);
        }
}

// Vertical measured span in one column: from the bottom-most upper pixel to
// the top-most lower pixel, endpoints included so zero-length gaps stay
// visible.
void draw_gap_line(RgbImage& img, const BoneMaskPair& masks, PixelPoint origin, int col) {
    int upper_bottom = -1, lower_top = -1;
    for (int y = masks.upper.height() - 1; y >= 0; --y)
        if (masks.upper.at(col, y)) {
            upper_bottom = y;
            break;
        }
    for (int y = 0; y < masks.lower.height(); ++y)
        if (masks.lower.at(col, y)) {
            lower_top = y;
            break;
        }
    if (upper_bottom < 0 || lower_top <= upper_bottom)
        return;
    for (int y = upper_bottom; y <= lower_top; ++y)
        img.set(origin.x + col, origin.y + y, kLineColor[0], kLineColor[1], kLineColor[2]);
}

std::string format_mm(double mm) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", mm);
    return buf;
}

} // namespace

void draw_text(RgbImage& img, int x, int y, const std::string& text,
               const uint8_t color[3], int scale) {
    int cursor = x;
    for (char ch : text) {
        if (const Glyph* g = find_glyph(ch)) {
            for (int gy = 0; gy < 7; ++gy)
                for (int gx = 0; gx < 5; ++gx)
                    if (g->rows[gy] & (0x10 >> gx))
                        for (int sy = 0; sy < scale; ++sy)
                            for (int sx = 0; sx < scale; ++sx)
                                img.set(cursor + gx * scale + sx, y + gy * scale + sy,
                                        color[0], color[1], color[2]);
        }
        cursor += 6 * scale;
    }
}

RgbImage render_overlay(const FloatGrid& base, const std::vector<KneeAnnotations>& knees) {
    RgbImage img(base.width(), base.height());
    for (int y = 0; y < base.height(); ++y)
        for (int x = 0; x < base.width(); ++x) {
            auto v = static_cast<uint8_t>(std::lround(
                std::clamp(base.at(x, y), 0.0f, 1.0f) * 255.0f));
            img.set(x, y, v, v, v);
        }

    for (const KneeAnnotations& knee : knees) {
        int text_x = std::max(4, knee.roi_origin.x + 8);
        int text_y = std::max(4, knee.roi_origin.y + 8);
        if (knee.failed) {
            static constexpr uint8_t red[3] = {255, 60, 60};
            draw_text(img, text_x, text_y, "FAILED " + knee.failed_stage, red);
            continue;
        }

        draw_contour(img, knee.masks.upper, knee.roi_origin, kMaskUpperColor);
        draw_contour(img, knee.masks.lower, knee.roi_origin, kMaskLowerColor);
        for (auto [col, gap] : knee.measurement.lines_med)
            draw_gap_line(img, knee.masks, knee.roi_origin, col);
        for (auto [col, gap] : knee.measurement.lines_lat)
            draw_gap_line(img, knee.masks, knee.roi_origin, col);

        PixelPoint med = knee.measurement.lowest_med;
        PixelPoint lat = knee.measurement.lowest_lat;
        draw_cross(img, knee.roi_origin.x + med.x, knee.roi_origin.y + med.y,
                   kLowestPointColor);
        draw_cross(img, knee.roi_origin.x + lat.x, knee.roi_origin.y + lat.y,
                   kLowestPointColor);

        std::string kl = knee.kl_grade >= 0 ? "KL " + std::to_string(knee.kl_grade)
                                            : "KL -";
        draw_text(img, text_x, text_y, kl, kTextColor);
        draw_text(img, text_x, text_y + 18,
                  "MED " + format_mm(knee.measurement.med_mm) + " JSN " +
                      std::to_string(knee.jsn.med),
                  kTextColor);
        draw_text(img, text_x, text_y + 36,
                  "LAT " + format_mm(knee.measurement.lat_mm) + " JSN " +
                      std::to_string(knee.jsn.lat),
                  kTextColor);
    }
    return img;
}

int count_line_columns(const RgbImage& img) {
    int count = 0;
    for (int x = 0; x < img.width; ++x) {
        for (int y = 0; y < img.height; ++y) {
            size_t i = (static_cast<size_t>(y) * img.width + x) * 3;
            if (img.rgb[i] == kLineColor[0] && img.rgb[i + 1] == kLineColor[1] &&
                img.rgb[i + 2] == kLineColor[2]) {
                ++count;
                break;
            }
        }
    }
    return count;
}

} // namespace koa
