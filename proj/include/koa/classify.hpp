#pragma once

#include "koa/grid.hpp"
#include "koa/ingest.hpp"

#include <array>
#include <memory>
#include <string>

namespace koa {

inline constexpr int kRoiSize = 672;
inline constexpr int kRoiHalf = kRoiSize / 2;
inline constexpr int kScaledRoiSize = 256;

enum class KneeSide { left, right }; // side within the image

std::string to_string(KneeSide side);

/// Fixed-scale patch around a detected joint: the native 672x672 window at
/// 0.2 mm/px plus its 256x256 area-averaged copy.
struct RoiPatch {
    FloatGrid pixels_full;   // 672 x 672
    FloatGrid pixels_scaled; // 256 x 256
    PixelPoint joint_center_in_patch{kRoiHalf, kRoiHalf};
    double pad_fraction = 0.0; // fraction of patch pixels outside the source
};

/// 5-class KL probability vector, non-negative and summing to 1.
struct ProbabilityVector {
    std::array<double, 5> p{};

    double operator[](size_t i) const { return p[i]; }
};

/// Validates and renormalizes a raw 5-vector from a backend. Negative,
/// non-finite or all-zero inputs are ErrorCode::backend.
ProbabilityVector make_probability_vector(const std::array<double, 5>& raw);

/// Cuts the 672x672 window centered at `center` (rounded to whole pixels).
/// Out-of-bounds pixels are zero and counted in pad_fraction; the scaled
/// copy is produced by exact area averaging.
RoiPatch extract_roi(const NormalizedImage& img, Point center);

/// Downsamples by exact area averaging (box filter with fractional edges).
FloatGrid area_average_downsample(const FloatGrid& src, int out_width, int out_height);

/// Classification backend contract: 5 KL-grade probabilities for a knee.
class ClassifierBackend {
public:
    virtual ~ClassifierBackend() = default;
    virtual std::array<double, 5> probabilities(const RoiPatch& roi,
                                                const std::string& source_id,
                                                KneeSide side) = 0;
    virtual std::string identifier() const = 0;
};

/// Constant stub for tests and phantom runs.
std::unique_ptr<ClassifierBackend> make_stub_classifier(const std::array<double, 5>& value);
std::unique_ptr<ClassifierBackend> make_uniform_classifier();

/// File-backed lookup keyed by (source_id, knee side) in a JSON document.
std::unique_ptr<ClassifierBackend> make_file_classifier(const std::string& document_path);

/// External-process adapter: writes one request line
///   classify <source_id> <side> <base64 of the 256x256 patch as bytes>
/// and reads back five reals. Requests are serialized.
std::unique_ptr<ClassifierBackend> make_process_classifier(const std::string& command);

/// Runs the backend and enforces the ProbabilityVector invariants.
ProbabilityVector classify(ClassifierBackend& backend, const RoiPatch& roi,
                           const std::string& source_id, KneeSide side);

} // namespace koa
