#pragma once

#include "koa/grid.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace koa {

enum class Laterality { bilateral, left, right, unknown };

std::string to_string(Laterality lat);
Laterality laterality_from_string(const std::string& text);

/// Raw radiograph as parsed from DICOM or the portable graymap path.
/// Intensities are non-negative integers of at most `bit_depth` bits.
struct RawRadiograph {
    PixelGrid pixels;
    double row_spacing_mm = 0.0;
    double col_spacing_mm = 0.0;
    int bit_depth = 16;
    Laterality laterality = Laterality::unknown;
    std::string source_id;

    int width() const { return pixels.width(); }
    int height() const { return pixels.height(); }
};

/// Standardized image: 0.2 mm/pixel, intensities k/255 for integer k.
struct NormalizedImage {
    FloatGrid pixels;
    double spacing_mm = 0.2;
    Laterality laterality = Laterality::unknown;
    std::string source_id;
    bool degenerate_window = false; // 16-bit window collapsed to a point

    int width() const { return pixels.width(); }
    int height() const { return pixels.height(); }
};

inline constexpr double kStandardSpacingMm = 0.2;

/// Validates the RawRadiograph invariants (positive spacing, >= 64 px per
/// side, intensities within bit depth). Throws ErrorCode::invalid_argument.
void validate_radiograph(const RawRadiograph& img);

/// Minimal single-frame grayscale DICOM reader. Accepts uncompressed
/// explicit- and implicit-VR little-endian streams only; anything else is
/// ErrorCode::unsupported_transfer_syntax. Tags read: PixelSpacing, Rows,
/// Columns, BitsAllocated, PixelRepresentation, Laterality/ImageLaterality,
/// PixelData.
RawRadiograph parse_dicom(const std::vector<uint8_t>& bytes,
                          const std::string& source_id = "");

/// Portable path: binary PGM (8- or 16-bit) plus a JSON sidecar supplying
/// spacing_mm, laterality and source_id. Produces the same RawRadiograph as
/// parse_dicom would for equivalent pixel content.
RawRadiograph parse_portable(const std::vector<uint8_t>& image_bytes,
                             const std::string& sidecar_json);

/// Loads either format from disk: DICOM when the DICM magic is present,
/// otherwise PGM with `sidecar_path` (defaults to <stem>.json next to the
/// image when empty).
RawRadiograph load_radiograph(const std::string& image_path,
                              const std::string& sidecar_path = "");

/// Resamples to the standard 0.2 mm/pixel grid with the Catmull-Rom bicubic
/// kernel (sharpness -0.5), clamping sample coordinates at the borders and
/// output values to the valid integer range. Inputs already at 0.2 mm are
/// returned pixel-identical.
RawRadiograph resample_to_standard(const RawRadiograph& img);

/// 16-bit inputs are windowed by the [p1, p99] intensity percentiles and
/// mapped to 0..255; 8-bit inputs pass through. The result is divided by
/// 255. A collapsed window (p1 == p99) maps every pixel to 0.5 and sets the
/// degenerate_window flag.
NormalizedImage normalize(const RawRadiograph& img);

/// Percentile by nearest rank on the ascending sort: index round(q * (n-1)).
/// Exposed for the windowing rule; q in [0, 1].
uint16_t intensity_percentile(const PixelGrid& pixels, double q);

} // namespace koa
