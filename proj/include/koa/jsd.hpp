#pragma once

#include "koa/grid.hpp"
#include "koa/ingest.hpp"
#include "koa/segment.hpp"

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace koa {

/// Columns sampled for the vertical-line series: x0 +/- {0, 2, ..., 14}.
inline constexpr int kLineStep = 2;
inline constexpr int kLineSpan = 14;
inline constexpr int kMinValidLines = 5;

/// Margins excluded from the lowest-point search: patch edges and a band
/// around the split column.
inline constexpr int kEdgeMargin = 34;
inline constexpr int kSplitMargin = 17;

/// One measured vertical line: (column, gap length in pixels).
using GapLine = std::pair<int, int>;

struct JsdMeasurement {
    double med_px = 0.0;
    double lat_px = 0.0;
    double med_mm = 0.0; // med_px * 0.2
    double lat_mm = 0.0;
    PixelPoint lowest_med; // on the upper bone, patch coordinates
    PixelPoint lowest_lat;
    std::vector<GapLine> lines_med;
    std::vector<GapLine> lines_lat;

    int valid_line_count_med() const { return static_cast<int>(lines_med.size()); }
    int valid_line_count_lat() const { return static_cast<int>(lines_lat.size()); }
};

/// Three ascending decision boundaries per compartment, in pixels at 0.2 mm.
struct ThresholdSet {
    std::array<double, 3> med_boundaries{8.0, 17.0, 23.0};
    std::array<double, 3> lat_boundaries{7.0, 14.0, 24.0};
};

void validate_thresholds(const ThresholdSet& t);
ThresholdSet default_thresholds();
ThresholdSet parse_thresholds(const std::string& json_text);
std::string thresholds_to_json(const ThresholdSet& t);

struct JsnGrades {
    int med = 0; // 0..3
    int lat = 0;
};

/// Which patch half (left/right of the split column) is the medial side.
enum class MedialSide { left_half, right_half };

/// The lowest upper-bone point in each half of the patch, excluding the
/// edge and split margins. Ties break toward the column nearest the split.
struct LowestPoints {
    PixelPoint left;  // left of split_col
    PixelPoint right; // right of split_col
};

LowestPoints find_lowest_points(const BoneMaskPair& masks, int split_col);

/// Medial-side convention: on a bilateral PA view the medial compartment
/// faces the image midline; single-knee images take it from the laterality
/// tag (right knee: viewer's right). Unknown laterality on a single-knee
/// image is an error.
MedialSide assign_sides(Laterality laterality, KneeSide knee_image_side);

/// Vertical-line series around each lowest point: for every sampled column
/// containing femur above tibia, the gap is the count of pixels strictly
/// between the bones. D_avg per side is the mean over valid lines; fewer
/// than 5 valid lines on a side is an error.
JsdMeasurement measure_jsd(const BoneMaskPair& masks, const LowestPoints& points,
                           int split_col, MedialSide medial_side);

/// Exact optimal contiguous k-partition of 1-D values minimizing total
/// within-class sum of squared deviations, by dynamic programming over the
/// sorted values. Boundary i is the midpoint between the max of class i and
/// the min of class i+1.
std::array<double, 3> calibrate_boundaries(std::vector<double> values, int k = 4);

ThresholdSet calibrate_thresholds(const std::vector<std::pair<double, double>>& distances,
                                  int k = 4);

/// Class occupancy of each threshold class for a value list (diagnostics).
std::array<int, 4> threshold_occupancy(const std::vector<double>& values,
                                       const std::array<double, 3>& boundaries);

/// JSN grade from a measured distance: the number of boundaries strictly
/// greater than the distance, so a distance equal to a boundary takes the
/// healthier grade. Negative distances are errors.
int grade_jsn(double jsd_px, const std::array<double, 3>& boundaries);

JsnGrades grade_jsn_pair(const JsdMeasurement& m, const ThresholdSet& t);

/// Shared per-class cost: sum of squared deviations from the mean of the
/// sorted value range [first, last]. Both the DP and the brute-force oracle
/// evaluate costs through this single routine so that optimal partitions
/// compare exactly.
class SegmentSse {
public:
    explicit SegmentSse(const std::vector<double>& sorted_values);
    double cost(int first, int last) const; // inclusive indices

private:
    std::vector<double> prefix_;
    std::vector<double> prefix_sq_;
};

} // namespace koa
