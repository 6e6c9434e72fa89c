#pragma once

#include "koa/grid.hpp"
#include "koa/ingest.hpp"
#include "koa/jsd.hpp"
#include "koa/segment.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace koa {

enum class CondyleShape { flat, vee, wedge };

std::string to_string(CondyleShape shape);
CondyleShape condyle_shape_from_string(const std::string& text);

/// One synthetic knee: bone rectangles separated by a controlled gap
/// profile. The vee and wedge shapes carry a condyle apex per side so the
/// measurement anchor is deterministic; the wedge additionally tilts the
/// gap linearly around the apex.
struct PhantomKnee {
    Point center;
    double gap_med_px = 25.0;
    double gap_lat_px = 25.0;
    CondyleShape shape = CondyleShape::flat;
    double wedge_slope_px_per_col = 0.0;
};

struct PhantomSpec {
    uint64_t seed = 0;
    std::string source_id = "phantom";
    int width = 1344;
    int height = 768;
    double background = 0.08;
    double bone_intensity = 0.85;
    double noise_sd = 0.0;
    Laterality laterality = Laterality::bilateral;
    std::vector<PhantomKnee> knees;
};

/// Exact per-knee ground truth, all geometry in patch coordinates of the
/// 672x672 ROI at the true center.
struct PhantomKneeTruth {
    Point center; // image coordinates
    KneeSide image_side = KneeSide::left;
    BoneMaskPair masks;
    PixelPoint apex_med; // condyle apex / measurement anchor per side
    PixelPoint apex_lat;
    std::vector<GapLine> gap_table_med; // rasterized gap per bone column
    std::vector<GapLine> gap_table_lat;
    double d_avg_med_px = 0.0; // mean gap over the sampled line series
    double d_avg_lat_px = 0.0;
};

struct PhantomTruth {
    std::string source_id;
    std::vector<PhantomKneeTruth> knees;
};

struct PhantomStudy {
    NormalizedImage image;
    PhantomTruth truth;
};

void validate_spec(const PhantomSpec& spec);

/// Renders the phantom and derives the exact truth. Deterministic per seed;
/// the truth D_avg values are computed from the rasterized gap tables under
/// the same column-sampling rule the measurement uses, anchored at the true
/// apex (flat knees anchor at the tie-break column).
PhantomStudy generate(const PhantomSpec& spec);

/// Backend fixture documents for the file-backed detector and segmenter.
struct BackendFixtures {
    std::string detections_json;
    std::string masks_json;
};

BackendFixtures emit_backend_fixtures(const PhantomTruth& truth);

/// Phantom spec document: {"studies": [ ... ]}.
std::vector<PhantomSpec> parse_phantom_specs(const std::string& json_text);
std::string truth_to_json(const PhantomTruth& truth);

/// Materializes one study into a directory: <id>.pgm, <id>.json sidecar,
/// <id>_detections.json, <id>_masks.json, <id>_truth.json.
void write_phantom_study(const PhantomStudy& study, const std::string& out_dir);

} // namespace koa
