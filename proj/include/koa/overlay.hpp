#pragma once

#include "koa/io.hpp"
#include "koa/jsd.hpp"
#include "koa/segment.hpp"

#include <string>

namespace koa {

/// Annotation colors. Measurement lines are pure blue so reports and tests
/// can count them back out of the render.
inline constexpr uint8_t kMaskUpperColor[3] = {220, 40, 40};   // femur contour
inline constexpr uint8_t kMaskLowerColor[3] = {40, 200, 40};   // tibia contour
inline constexpr uint8_t kLineColor[3] = {0, 0, 255};          // gap lines
inline constexpr uint8_t kLowestPointColor[3] = {255, 220, 0}; // condyle points
inline constexpr uint8_t kTextColor[3] = {255, 255, 255};

/// Per-knee annotation bundle, all geometry in patch coordinates; the
/// renderer shifts by the ROI origin.
struct KneeAnnotations {
    PixelPoint roi_origin; // image coordinates of patch (0,0)
    BoneMaskPair masks;
    JsdMeasurement measurement;
    JsnGrades jsn;
    int kl_grade = -1; // -1 when fusion was not run
    bool failed = false;
    std::string failed_stage;
};

/// Renders the study overlay: grayscale base, mask contours, lowest points,
/// the measurement line series and a text block per knee.
RgbImage render_overlay(const FloatGrid& base, const std::vector<KneeAnnotations>& knees);

/// 5x7 bitmap text, scaled 2x. Digits, dot, colon, minus, space and the
/// uppercase letters used by the overlay captions.
void draw_text(RgbImage& img, int x, int y, const std::string& text,
               const uint8_t color[3], int scale = 2);

/// Number of distinct columns holding pure measurement-line pixels; equals
/// the total valid line count of the annotations that produced the render.
int count_line_columns(const RgbImage& img);

} // namespace koa
