#include "koa/phantom.hpp"

#include "koa/error.hpp"
#include "koa/io.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <random>

namespace koa {

using nlohmann::json;

std::string to_string(CondyleShape shape) {
    switch (shape) {
    case CondyleShape::flat: return "flat";
    case CondyleShape::vee: return "vee";
    case CondyleShape::wedge: return "wedge";
    }
    return "flat";
}

CondyleShape condyle_shape_from_string(const std::string& text) {
    if (text == "flat")
        return CondyleShape::flat;
    if (text == "vee")
        return CondyleShape::vee;
    if (text == "wedge")
        return CondyleShape::wedge;
    fail(ErrorCode::parse, "unknown condyle shape '" + text + "'");
}

// Patch-coordinate layout of a phantom knee. The joint gap opens just below
// the patch center so the annotated center sits on the joint, and the
// adaptive-gamma sampling box lands inside the femur.
namespace layout {
constexpr int kFemurTop = 120;
constexpr int kFemurBase = 330;  // flat condyle bottom row
constexpr int kVeeDepth = 20;    // apex row = base + depth, slope 1 px/col
constexpr int kTibiaBottom = 560;
constexpr int kBoneColFirst = 156;
constexpr int kBoneColLast = 516;
constexpr int kApexOffset = 90; // apex columns at center -/+ offset
constexpr int kMinTibiaRows = 20;
} // namespace layout

namespace {

struct KneeGeometry {
    int apex_left = kRoiHalf - layout::kApexOffset;
    int apex_right = kRoiHalf + layout::kApexOffset;
    CondyleShape shape = CondyleShape::flat;
    double gap_left = 0.0; // requested gap per patch half
    double gap_right = 0.0;
    double slope = 0.0;

    int femur_bottom(int u) const {
        if (shape == CondyleShape::flat)
            return layout::kFemurBase;
        int d = std::min(std::abs(u - apex_left), std::abs(u - apex_right));
        if (d <= layout::kVeeDepth)
            return layout::kFemurBase + layout::kVeeDepth - d;
        return layout::kFemurBase;
    }

    int gap(int u) const {
        bool left = u < kRoiHalf;
        double g = left ? gap_left : gap_right;
        if (shape == CondyleShape::wedge) {
            int a = left ? apex_left : apex_right;
            g += slope * (u - a);
        }
        return std::max(1, static_cast<int>(std::llround(g)));
    }

    // Line-series anchor per half: the condyle apex, or the tie-break column
    // the lowest-point search settles on for a flat bottom.
    int anchor(bool left_half) const {
        if (shape == CondyleShape::flat)
            return left_half ? kRoiHalf - kSplitMargin - 1 : kRoiHalf + kSplitMargin + 1;
        return left_half ? apex_left : apex_right;
    }
};

KneeGeometry geometry_for(const PhantomKnee& knee, MedialSide medial_side) {
    KneeGeometry g;
    g.shape = knee.shape;
    g.slope = knee.wedge_slope_px_per_col;
    bool med_is_left = medial_side == MedialSide::left_half;
    g.gap_left = med_is_left ? knee.gap_med_px : knee.gap_lat_px;
    g.gap_right = med_is_left ? knee.gap_lat_px : knee.gap_med_px;
    return g;
}

} // namespace

void validate_spec(const PhantomSpec& spec) {
    require(spec.width >= 64 && spec.height >= 64, ErrorCode::invalid_argument,
            "phantom image must be at least 64x64");
    require(!spec.knees.empty(), ErrorCode::invalid_argument, "phantom needs knees");
    require(spec.background >= 0.0 && spec.background < spec.bone_intensity &&
                spec.bone_intensity <= 1.0,
            ErrorCode::invalid_argument, "need 0 <= background < bone intensity <= 1");
    require(spec.noise_sd >= 0.0, ErrorCode::invalid_argument, "negative noise");
    if (spec.laterality == Laterality::bilateral)
        require(spec.knees.size() == 2, ErrorCode::invalid_argument,
                "bilateral phantoms hold exactly two knees");
    else
        require(spec.knees.size() == 1, ErrorCode::invalid_argument,
                "single-knee phantoms hold exactly one knee");

    for (const PhantomKnee& knee : spec.knees) {
        require(knee.gap_med_px >= 2.0 && knee.gap_lat_px >= 2.0,
                ErrorCode::invalid_argument, "phantom gaps must be at least 2 px");
        int close_borders = 0;
        close_borders += knee.center.x < kRoiHalf;
        close_borders += spec.width - 1 - knee.center.x < kRoiHalf;
        close_borders += knee.center.y < kRoiHalf;
        close_borders += spec.height - 1 - knee.center.y < kRoiHalf;
        require(close_borders <= 1, ErrorCode::invalid_argument,
                "knee center too close to more than one border");

        int apex_row = knee.shape == CondyleShape::flat
                           ? layout::kFemurBase
                           : layout::kFemurBase + layout::kVeeDepth;
        double worst_gap = std::max(knee.gap_med_px, knee.gap_lat_px) +
                           std::abs(knee.wedge_slope_px_per_col) * kLineSpan;
        require(apex_row + 1 + worst_gap + layout::kMinTibiaRows <= layout::kTibiaBottom,
                ErrorCode::geometry, "gap profile exits the region of interest");
    }
    if (spec.knees.size() == 2) {
        double dx = std::abs(spec.knees[0].center.x - spec.knees[1].center.x);
        require(dx >= kRoiSize, ErrorCode::invalid_argument, "overlapping knees");
    }
}

PhantomStudy generate(const PhantomSpec& spec) {
    validate_spec(spec);

    PhantomStudy study;
    study.truth.source_id = spec.source_id;
    study.image.pixels = FloatGrid(spec.width, spec.height,
                                   static_cast<float>(spec.background));
    study.image.spacing_mm = kStandardSpacingMm;
    study.image.laterality = spec.laterality;
    study.image.source_id = spec.source_id;

    for (const PhantomKnee& knee : spec.knees) {
        PhantomKneeTruth truth;
        truth.center = knee.center;
        truth.image_side = knee.center.x < spec.width / 2.0 ? KneeSide::left
                                                            : KneeSide::right;
        KneeSide slot = spec.laterality == Laterality::bilateral ? truth.image_side
                                                                 : KneeSide::left;
        MedialSide medial = assign_sides(spec.laterality, slot);
        KneeGeometry geom = geometry_for(knee, medial);

        truth.masks.upper = MaskGrid(kRoiSize, kRoiSize, 0);
        truth.masks.lower = MaskGrid(kRoiSize, kRoiSize, 0);
        int origin_x = static_cast<int>(std::lround(knee.center.x)) - kRoiHalf;
        int origin_y = static_cast<int>(std::lround(knee.center.y)) - kRoiHalf;

        for (int u = layout::kBoneColFirst; u <= layout::kBoneColLast; ++u) {
            int bottom = geom.femur_bottom(u);
            int gap = geom.gap(u);
            for (int v = layout::kFemurTop; v <= bottom; ++v)
                truth.masks.upper.at(u, v) = 1;
            for (int v = bottom + 1 + gap; v <= layout::kTibiaBottom; ++v)
                truth.masks.lower.at(u, v) = 1;

            int ix = origin_x + u;
            if (ix >= 0 && ix < spec.width) {
                for (int v = layout::kFemurTop; v <= bottom; ++v) {
                    int iy = origin_y + v;
                    if (iy >= 0 && iy < spec.height)
                        study.image.pixels.at(ix, iy) =
                            static_cast<float>(spec.bone_intensity);
                }
                for (int v = bottom + 1 + gap; v <= layout::kTibiaBottom; ++v) {
                    int iy = origin_y + v;
                    if (iy >= 0 && iy < spec.height)
                        study.image.pixels.at(ix, iy) =
                            static_cast<float>(spec.bone_intensity);
                }
            }

            bool left_half = u < kRoiHalf;
            bool med_half = (medial == MedialSide::left_half) == left_half;
            (med_half ? truth.gap_table_med : truth.gap_table_lat).emplace_back(u, gap);
        }

        // Truth D_avg: mean of the rasterized gaps over the same column
        // series the measurement samples, anchored at the true apex.
        auto series_mean = [&](bool left_half) {
            int anchor = geom.anchor(left_half);
            double sum = 0.0;
            int count = 0;
            for (int offset = -kLineSpan; offset <= kLineSpan; offset += kLineStep) {
                sum += geom.gap(anchor + offset);
                ++count;
            }
            return sum / count;
        };
        bool med_is_left = medial == MedialSide::left_half;
        truth.d_avg_med_px = series_mean(med_is_left);
        truth.d_avg_lat_px = series_mean(!med_is_left);
        truth.apex_med = PixelPoint{geom.anchor(med_is_left),
                                    geom.femur_bottom(geom.anchor(med_is_left))};
        truth.apex_lat = PixelPoint{geom.anchor(!med_is_left),
                                    geom.femur_bottom(geom.anchor(!med_is_left))};
        study.truth.knees.push_back(std::move(truth));
    }

    // Seeded noise, then requantization to the 8-bit grid NormalizedImage
    // promises.
    std::mt19937 rng(static_cast<uint32_t>(spec.seed ^ (spec.seed >> 32)));
    std::normal_distribution<float> noise(0.0f, static_cast<float>(spec.noise_sd));
    for (float& v : study.image.pixels.data()) {
        float value = v;
        if (spec.noise_sd > 0.0)
            value += noise(rng);
        long level = std::lround(std::clamp(value, 0.0f, 1.0f) * 255.0f);
        v = static_cast<float>(level / 255.0);
    }
    return study;
}

BackendFixtures emit_backend_fixtures(const PhantomTruth& truth) {
    json detections = json::array();
    json masks = json::object();
    for (const PhantomKneeTruth& knee : truth.knees) {
        detections.push_back({{"center_x", knee.center.x},
                              {"center_y", knee.center.y},
                              {"confidence", 0.99}});
        std::string slot =
            truth.knees.size() == 2 ? to_string(knee.image_side) : "left";
        masks[slot] = {{"upper", json::parse(mask_to_json_text(knee.masks.upper))},
                       {"lower", json::parse(mask_to_json_text(knee.masks.lower))}};
    }
    json detections_doc, masks_doc;
    detections_doc[truth.source_id] = std::move(detections);
    masks_doc[truth.source_id] = std::move(masks);
    return BackendFixtures{detections_doc.dump() + "\n", masks_doc.dump() + "\n"};
}

std::vector<PhantomSpec> parse_phantom_specs(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        fail(ErrorCode::parse, std::string("bad phantom spec: ") + e.what());
    }
    require(doc.contains("studies") && doc["studies"].is_array(), ErrorCode::missing_field,
            "phantom spec needs a studies array");

    std::vector<PhantomSpec> out;
    int index = 0;
    for (const auto& s : doc["studies"]) {
        PhantomSpec spec;
        spec.source_id = s.value("source_id", "phantom_" + std::to_string(index));
        spec.seed = s.value("seed", static_cast<uint64_t>(index));
        spec.width = s.value("width", spec.width);
        spec.height = s.value("height", spec.height);
        spec.background = s.value("background", spec.background);
        spec.bone_intensity = s.value("bone_intensity", spec.bone_intensity);
        spec.noise_sd = s.value("noise_sd", spec.noise_sd);
        spec.laterality = laterality_from_string(s.value("laterality", "bilateral"));
        require(s.contains("knees") && s["knees"].is_array(), ErrorCode::missing_field,
                "phantom study needs a knees array");
        for (const auto& k : s["knees"]) {
            PhantomKnee knee;
            require(k.contains("cx") && k.contains("cy"), ErrorCode::missing_field,
                    "phantom knee needs cx and cy");
            knee.center = Point{k["cx"].get<double>(), k["cy"].get<double>()};
            knee.gap_med_px = k.value("gap_med_px", knee.gap_med_px);
            knee.gap_lat_px = k.value("gap_lat_px", knee.gap_lat_px);
            knee.shape = condyle_shape_from_string(k.value("shape", "flat"));
            knee.wedge_slope_px_per_col = k.value("wedge_slope", 0.0);
            spec.knees.push_back(knee);
        }
        validate_spec(spec);
        out.push_back(std::move(spec));
        ++index;
    }
    require(!out.empty(), ErrorCode::invalid_argument, "phantom spec holds no studies");
    return out;
}

std::string truth_to_json(const PhantomTruth& truth) {
    json knees = json::array();
    for (const PhantomKneeTruth& knee : truth.knees) {
        json gap_med = json::array(), gap_lat = json::array();
        for (auto [col, gap] : knee.gap_table_med)
            gap_med.push_back(json::array({col, gap}));
        for (auto [col, gap] : knee.gap_table_lat)
            gap_lat.push_back(json::array({col, gap}));
        knees.push_back({{"center", {knee.center.x, knee.center.y}},
                         {"image_side", to_string(knee.image_side)},
                         {"d_avg_med_px", knee.d_avg_med_px},
                         {"d_avg_lat_px", knee.d_avg_lat_px},
                         {"apex_med", {knee.apex_med.x, knee.apex_med.y}},
                         {"apex_lat", {knee.apex_lat.x, knee.apex_lat.y}},
                         {"gap_table_med", std::move(gap_med)},
                         {"gap_table_lat", std::move(gap_lat)}});
    }
    json doc;
    doc["source_id"] = truth.source_id;
    doc["knees"] = std::move(knees);
    return doc.dump(2) + "\n";
}

void write_phantom_study(const PhantomStudy& study, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const std::string& id = study.truth.source_id;
    fs::path base(out_dir);

    PixelGrid bytes(study.image.width(), study.image.height());
    for (size_t i = 0; i < bytes.size(); ++i)
        bytes.data()[i] = static_cast<uint16_t>(
            std::lround(study.image.pixels.data()[i] * 255.0f));
    auto pgm = encode_pgm(bytes, 255);
    write_file_bytes((base / (id + ".pgm")).string(), pgm.data(), pgm.size());

    json sidecar;
    sidecar["spacing_mm"] = kStandardSpacingMm;
    sidecar["laterality"] = to_string(study.image.laterality);
    sidecar["source_id"] = id;
    write_file_text((base / (id + ".json")).string(), sidecar.dump(2) + "\n");

    BackendFixtures fixtures = emit_backend_fixtures(study.truth);
    write_file_text((base / (id + "_detections.json")).string(), fixtures.detections_json);
    write_file_text((base / (id + "_masks.json")).string(), fixtures.masks_json);
    write_file_text((base / (id + "_truth.json")).string(), truth_to_json(study.truth));
}

} // namespace koa
