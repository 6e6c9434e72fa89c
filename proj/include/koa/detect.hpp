#pragma once

#include "koa/grid.hpp"
#include "koa/ingest.hpp"

#include <string>
#include <vector>

namespace koa {

/// Half-width of the synthesized bounding box when a backend reports only a
/// joint center (annotation boxes are 500 px square).
inline constexpr double kDefaultBoxHalfWidth = 250.0;

struct JointDetection {
    Point center;
    Box box;
    double confidence = 0.0;
};

/// Builds a detection from a bare center with the default 500 px box.
JointDetection detection_from_center(Point center, double confidence);

/// Validates box ordering, center containment and confidence range.
void validate_detection(const JointDetection& d);

/// The two selected knees, ordered by center x ascending. When only one
/// candidate exists it is stored as image_left with single_knee_flag set.
struct KneePair {
    JointDetection image_left;
    JointDetection image_right;
    bool single_knee_flag = false;
};

/// Keeps the two highest-confidence candidates with no confidence threshold.
/// Ties break toward smaller center x, then smaller center y.
KneePair select_knees(const std::vector<JointDetection>& candidates);

/// Intersection over union of two boxes; 0 for disjoint boxes.
double iou(const Box& a, const Box& b);

/// Euclidean distance between a predicted and a labeled joint center (C_d).
double center_deviation(Point pred, Point label);

/// Parses the detection-results document (JSON keyed by source_id) and
/// returns that image's candidates. Records without a box get the default
/// 500 px box around their center.
std::vector<JointDetection> load_candidates(const std::string& document_json,
                                            const std::string& source_id);

/// Non-learned baseline detector. Bilateral images are split at the vertical
/// midline; in each half the joint row is the minimum of the row-mean
/// intensity profile between the bone masses, and the joint column is the
/// intensity centroid of the bright columns. Confidence is the bone-to-gap
/// contrast. Always returns one candidate per half.
std::vector<JointDetection> heuristic_detect(const NormalizedImage& img);

} // namespace koa
