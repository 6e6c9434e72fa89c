#pragma once

#include "koa/classify.hpp"
#include "koa/grid.hpp"

#include <memory>
#include <string>
#include <vector>

namespace koa {

/// Femur mask (upper) and tibia+fibula mask (lower) over the 672x672 ROI.
/// After postprocess the masks are disjoint single 4-connected components
/// with the femur centroid above the tibia centroid.
struct BoneMaskPair {
    MaskGrid upper;
    MaskGrid lower;
};

/// Gamma exponent from the mean intensity of the 50x50 box whose bottom
/// edge sits 10 px above the joint center: clamp(ln 0.5 / ln m, 1, 3) for
/// 0 < m < 1, else 1.
double adaptive_gamma_exponent(const FloatGrid& pixels, PixelPoint joint_center);

/// Applies pixel^gamma to every pixel.
FloatGrid gamma_correct(const FloatGrid& pixels, double gamma);

/// out = clamp(in + ratio * (-L (x) in), 0, 1) with the 4-neighbor Laplacian
/// kernel and replicate borders. Ratio outside [0, 1] is an error.
FloatGrid laplacian_sharpen_grid(const FloatGrid& pixels, double ratio);

/// Inference-time enhancement of a patch: adaptive gamma then Laplacian
/// sharpening at 30%, applied to the full-resolution grid; the scaled copy
/// is regenerated from the enhanced pixels.
RoiPatch adaptive_gamma(const RoiPatch& roi);
RoiPatch laplacian_sharpen(const RoiPatch& roi, double ratio = 0.3);
RoiPatch enhance_for_segmentation(const RoiPatch& roi);

/// Segmentation backend contract: raw femur and tibia+fibula masks.
class SegmenterBackend {
public:
    virtual ~SegmenterBackend() = default;
    virtual BoneMaskPair masks(const RoiPatch& roi, const std::string& source_id,
                               KneeSide side) = 0;
    virtual std::string identifier() const = 0;
};

/// File-backed masks from the run-length-encoded mask document.
std::unique_ptr<SegmenterBackend> make_file_segmenter(const std::string& document_path);

/// Analytic backend for phantom-like images: binarizes the enhanced patch at
/// the midpoint between background and bone intensity and splits the two
/// largest components by centroid row.
std::unique_ptr<SegmenterBackend> make_threshold_segmenter();

/// External-process adapter; mirrors the classifier transport with request
///   segment <source_id> <side> <base64 of the 672x672 patch as bytes>
/// and a one-line JSON {"upper":{"runs":[...]},"lower":{"runs":[...]}} reply.
std::unique_ptr<SegmenterBackend> make_process_segmenter(const std::string& command);

/// Runs the backend on an (already enhanced) patch and cleans the result.
BoneMaskPair segment(SegmenterBackend& backend, const RoiPatch& roi,
                     const std::string& source_id, KneeSide side);

/// Overlaps resolve to the upper mask; each mask keeps its largest
/// 4-connected component and has enclosed holes filled. Empty masks and
/// inverted centroid ordering are errors. Idempotent.
BoneMaskPair postprocess(const BoneMaskPair& raw);

/// Dice similarity 2|a^b| / (|a|+|b|); 1.0 when both masks are empty.
double dice(const MaskGrid& a, const MaskGrid& b);

/// Run-length encoding of a binary mask as (start, length) pairs over the
/// row-major linear index; the mask document and process protocol use it.
std::vector<std::pair<int, int>> rle_encode(const MaskGrid& mask);
MaskGrid rle_decode(int width, int height, const std::vector<std::pair<int, int>>& runs);

/// JSON form of one RLE mask: {"w":..,"h":..,"runs":[[start,len],...]}.
std::string mask_to_json_text(const MaskGrid& mask);
MaskGrid mask_from_json_text(const std::string& json_text);

} // namespace koa
