#include "koa/jsd.hpp"

#include "koa/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace koa {

using nlohmann::json;

void validate_thresholds(const ThresholdSet& t) {
    for (const auto& b : {t.med_boundaries, t.lat_boundaries}) {
        require(b[0] > 0.0, ErrorCode::invalid_argument, "boundaries must be positive");
        require(b[0] < b[1] && b[1] < b[2], ErrorCode::invalid_argument,
                "boundaries must be strictly ascending");
    }
}

ThresholdSet default_thresholds() {
    return ThresholdSet{}; // med 8/17/23, lat 7/14/24
}

ThresholdSet parse_thresholds(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        fail(ErrorCode::parse, std::string("bad thresholds document: ") + e.what());
    }
    require(doc.contains("med") && doc.contains("lat"), ErrorCode::missing_field,
            "thresholds document must hold med and lat");
    ThresholdSet t;
    for (int i = 0; i < 3; ++i) {
        t.med_boundaries[i] = doc["med"].at(i).get<double>();
        t.lat_boundaries[i] = doc["lat"].at(i).get<double>();
    }
    validate_thresholds(t);
    return t;
}

std::string thresholds_to_json(const ThresholdSet& t) {
    json doc;
    doc["med"] = t.med_boundaries;
    doc["lat"] = t.lat_boundaries;
    doc["units"] = "px@0.2mm";
    return doc.dump(2) + "\n";
}

// ---- lowest points -----------------------------------------------------------

namespace {

// Lowest upper-bone pixel over an inclusive column range; ties prefer the
// column nearest split_col, then the smaller column.
std::optional<PixelPoint> lowest_in_range(const MaskGrid& upper, int col_first,
                                          int col_last, int split_col) {
    std::optional<PixelPoint> best;
    for (int x = std::max(0, col_first); x <= std::min(upper.width() - 1, col_last); ++x) {
        for (int y = upper.height() - 1; y >= 0; --y) {
            if (!upper.at(x, y))
                continue;
            if (!best || y > best->y ||
                (y == best->y &&
                 std::abs(x - split_col) < std::abs(best->x - split_col))) {
                best = PixelPoint{x, y};
            }
            break; // bottom-most pixel of this column
        }
    }
    return best;
}

} // namespace

LowestPoints find_lowest_points(const BoneMaskPair& masks, int split_col) {
    const MaskGrid& upper = masks.upper;
    require(split_col > 0 && split_col < upper.width(), ErrorCode::invalid_argument,
            "split column outside the patch");

    auto left = lowest_in_range(upper, kEdgeMargin, split_col - kSplitMargin - 1, split_col);
    auto right = lowest_in_range(upper, split_col + kSplitMargin + 1,
                                 upper.width() - 1 - kEdgeMargin, split_col);
    require(left.has_value(), ErrorCode::geometry, "no upper-bone pixels left of the split");
    require(right.has_value(), ErrorCode::geometry, "no upper-bone pixels right of the split");
    return LowestPoints{*left, *right};
}

MedialSide assign_sides(Laterality laterality, KneeSide knee_image_side) {
    if (laterality == Laterality::bilateral) {
        // The medial compartment faces the image midline on a PA view.
        return knee_image_side == KneeSide::left ? MedialSide::right_half
                                                 : MedialSide::left_half;
    }
    if (laterality == Laterality::right)
        return MedialSide::right_half;
    if (laterality == Laterality::left)
        return MedialSide::left_half;
    fail(ErrorCode::invalid_argument,
         "cannot assign medial side: unknown laterality on a single-knee image");
}

// ---- line series ------------------------------------------------------------

namespace {

struct SideMeasurement {
    std::vector<GapLine> lines;
    double d_avg = 0.0;
};

// Vertical gap in one column: pixels strictly between the bottom-most upper
// pixel and the top-most lower pixel; absent when either bone is missing or
// they interleave.
std::optional<int> column_gap(const BoneMaskPair& masks, int x) {
    if (x < 0 || x >= masks.upper.width())
        return std::nullopt;
    int upper_bottom = -1;
    for (int y = masks.upper.height() - 1; y >= 0; --y)
        if (masks.upper.at(x, y)) {
            upper_bottom = y;
            break;
        }
    if (upper_bottom < 0)
        return std::nullopt;
    int lower_top = -1;
    for (int y = 0; y < masks.lower.height(); ++y)
        if (masks.lower.at(x, y)) {
            lower_top = y;
            break;
        }
    if (lower_top < 0 || lower_top <= upper_bottom)
        return std::nullopt;
    return lower_top - upper_bottom - 1;
}

SideMeasurement measure_side(const BoneMaskPair& masks, PixelPoint lowest) {
    SideMeasurement out;
    double sum = 0.0;
    for (int offset = -kLineSpan; offset <= kLineSpan; offset += kLineStep) {
        int x = lowest.x + offset;
        if (auto gap = column_gap(masks, x)) {
            out.lines.emplace_back(x, *gap);
            sum += *gap;
        }
    }
    require(static_cast<int>(out.lines.size()) >= kMinValidLines, ErrorCode::geometry,
            "fewer than 5 valid measurement lines on a side");
    out.d_avg = sum / out.lines.size();
    return out;
}

} // namespace

JsdMeasurement measure_jsd(const BoneMaskPair& masks, const LowestPoints& points,
                           int split_col, MedialSide medial_side) {
    require(points.left.x < split_col && points.right.x > split_col,
            ErrorCode::invalid_argument, "lowest points on the wrong sides of the split");

    SideMeasurement left = measure_side(masks, points.left);
    SideMeasurement right = measure_side(masks, points.right);

    JsdMeasurement m;
    const bool med_is_left = medial_side == MedialSide::left_half;
    const SideMeasurement& med = med_is_left ? left : right;
    const SideMeasurement& lat = med_is_left ? right : left;
    m.med_px = med.d_avg;
    m.lat_px = lat.d_avg;
    m.med_mm = m.med_px * kStandardSpacingMm;
    m.lat_mm = m.lat_px * kStandardSpacingMm;
    m.lowest_med = med_is_left ? points.left : points.right;
    m.lowest_lat = med_is_left ? points.right : points.left;
    m.lines_med = med.lines;
    m.lines_lat = lat.lines;
    return m;
}

// ---- threshold calibration ----------------------------------------------------

SegmentSse::SegmentSse(const std::vector<double>& sorted_values) {
    prefix_.resize(sorted_values.size() + 1, 0.0);
    prefix_sq_.resize(sorted_values.size() + 1, 0.0);
    for (size_t i = 0; i < sorted_values.size(); ++i) {
        prefix_[i + 1] = prefix_[i] + sorted_values[i];
        prefix_sq_[i + 1] = prefix_sq_[i] + sorted_values[i] * sorted_values[i];
    }
}

double SegmentSse::cost(int first, int last) const {
    int n = last - first + 1;
    double sum = prefix_[last + 1] - prefix_[first];
    double sum_sq = prefix_sq_[last + 1] - prefix_sq_[first];
    return sum_sq - sum * sum / n;
}

std::array<double, 3> calibrate_boundaries(std::vector<double> values, int k) {
    require(k == 4, ErrorCode::invalid_argument, "calibration is defined for 4 classes");
    std::sort(values.begin(), values.end());
    int n = static_cast<int>(values.size());
    int distinct = n > 0 ? 1 : 0;
    for (int i = 1; i < n; ++i)
        distinct += values[i] != values[i - 1];
    require(distinct >= k, ErrorCode::degenerate_data,
            "calibration needs at least 4 distinct values");

    // dp[m][j]: minimal cost of splitting the first j values into m classes.
    // Ties keep the smallest split index, making the optimum deterministic.
    SegmentSse sse(values);
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> dp(k + 1, std::vector<double>(n + 1, inf));
    std::vector<std::vector<int>> cut(k + 1, std::vector<int>(n + 1, -1));
    dp[0][0] = 0.0;
    for (int m = 1; m <= k; ++m) {
        for (int j = m; j <= n - (k - m); ++j) {
            for (int i = m - 1; i < j; ++i) { // previous class ends at i-1
                if (dp[m - 1][i] == inf)
                    continue;
                double c = dp[m - 1][i] + sse.cost(i, j - 1);
                if (c < dp[m][j]) {
                    dp[m][j] = c;
                    cut[m][j] = i;
                }
            }
        }
    }
    require(dp[k][n] != inf, ErrorCode::degenerate_data, "calibration found no partition");

    std::array<int, 3> class_end{}; // index of the last value in classes 0..2
    int j = n;
    for (int m = k; m > 1; --m) {
        j = cut[m][j];
        class_end[m - 2] = j - 1;
    }

    std::array<double, 3> boundaries{};
    for (int b = 0; b < 3; ++b)
        boundaries[b] = 0.5 * (values[class_end[b]] + values[class_end[b] + 1]);
    return boundaries;
}

ThresholdSet calibrate_thresholds(const std::vector<std::pair<double, double>>& distances,
                                  int k) {
    std::vector<double> med, lat;
    med.reserve(distances.size());
    lat.reserve(distances.size());
    for (auto [m, l] : distances) {
        med.push_back(m);
        lat.push_back(l);
    }
    ThresholdSet t;
    t.med_boundaries = calibrate_boundaries(std::move(med), k);
    t.lat_boundaries = calibrate_boundaries(std::move(lat), k);
    validate_thresholds(t);
    return t;
}

std::array<int, 4> threshold_occupancy(const std::vector<double>& values,
                                       const std::array<double, 3>& boundaries) {
    std::array<int, 4> occupancy{};
    for (double v : values)
        ++occupancy[grade_jsn(v, boundaries)];
    return occupancy;
}

int grade_jsn(double jsd_px, const std::array<double, 3>& boundaries) {
    require(jsd_px >= 0.0, ErrorCode::invalid_argument, "joint space distance is negative");
    require(boundaries[0] < boundaries[1] && boundaries[1] < boundaries[2],
            ErrorCode::invalid_argument, "boundaries must be strictly ascending");
    int grade = 0;
    for (double b : boundaries)
        grade += b > jsd_px; // equality keeps the healthier grade
    return grade;
}

JsnGrades grade_jsn_pair(const JsdMeasurement& m, const ThresholdSet& t) {
    return JsnGrades{grade_jsn(m.med_px, t.med_boundaries),
                     grade_jsn(m.lat_px, t.lat_boundaries)};
}

} // namespace koa
