#include "koa/detect.hpp"

#include "koa/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace koa {

using nlohmann::json;

JointDetection detection_from_center(Point center, double confidence) {
    JointDetection d;
    d.center = center;
    d.box = Box{center.x - kDefaultBoxHalfWidth, center.y - kDefaultBoxHalfWidth,
                center.x + kDefaultBoxHalfWidth, center.y + kDefaultBoxHalfWidth};
    d.confidence = confidence;
    return d;
}

void validate_detection(const JointDetection& d) {
    require(d.box.x0 < d.box.x1 && d.box.y0 < d.box.y1, ErrorCode::invalid_argument,
            "detection box corners out of order");
    require(d.center.x >= d.box.x0 && d.center.x <= d.box.x1 && d.center.y >= d.box.y0 &&
                d.center.y <= d.box.y1,
            ErrorCode::invalid_argument, "detection center outside its box");
    require(d.confidence >= 0.0 && d.confidence <= 1.0, ErrorCode::invalid_argument,
            "confidence must be in [0, 1]");
}

KneePair select_knees(const std::vector<JointDetection>& candidates) {
    require(!candidates.empty(), ErrorCode::invalid_argument, "no detection candidates");
    for (const auto& c : candidates)
        validate_detection(c);

    std::vector<JointDetection> ranked = candidates;
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const JointDetection& a, const JointDetection& b) {
                         if (a.confidence != b.confidence)
                             return a.confidence > b.confidence;
                         if (a.center.x != b.center.x)
                             return a.center.x < b.center.x;
                         return a.center.y < b.center.y;
                     });

    KneePair pair;
    if (ranked.size() == 1) {
        require(ranked[0].confidence > 0.0, ErrorCode::invalid_argument,
                "selected knee has zero confidence");
        pair.image_left = ranked[0];
        pair.single_knee_flag = true;
        return pair;
    }

    JointDetection a = ranked[0], b = ranked[1];
    require(a.confidence > 0.0 && b.confidence > 0.0, ErrorCode::invalid_argument,
            "selected knee has zero confidence");
    bool a_left = a.center.x < b.center.x ||
                  (a.center.x == b.center.x && a.center.y <= b.center.y);
    pair.image_left = a_left ? a : b;
    pair.image_right = a_left ? b : a;
    return pair;
}

double iou(const Box& a, const Box& b) {
    double ix = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
    double iy = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
    if (ix <= 0.0 || iy <= 0.0)
        return 0.0;
    double inter = ix * iy;
    double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

double center_deviation(Point pred, Point label) {
    return std::hypot(pred.x - label.x, pred.y - label.y);
}

std::vector<JointDetection> load_candidates(const std::string& document_json,
                                            const std::string& source_id) {
    json doc;
    try {
        doc = json::parse(document_json);
    } catch (const json::exception& e) {
        fail(ErrorCode::parse, std::string("bad detection document: ") + e.what());
    }
    require(doc.contains(source_id), ErrorCode::lookup_miss,
            "no detections for source_id '" + source_id + "'");

    std::vector<JointDetection> out;
    for (const auto& record : doc[source_id]) {
        require(record.contains("center_x") && record.contains("center_y"),
                ErrorCode::parse, "detection record missing center");
        require(record.contains("confidence"), ErrorCode::parse,
                "detection record missing confidence");
        Point center{record["center_x"].get<double>(), record["center_y"].get<double>()};
        JointDetection d;
        if (record.contains("x0")) {
            require(record.contains("y0") && record.contains("x1") && record.contains("y1"),
                    ErrorCode::parse, "detection record has a partial box");
            d.center = center;
            d.box = Box{record["x0"].get<double>(), record["y0"].get<double>(),
                        record["x1"].get<double>(), record["y1"].get<double>()};
            d.confidence = record["confidence"].get<double>();
        } else {
            d = detection_from_center(center, record["confidence"].get<double>());
        }
        validate_detection(d);
        out.push_back(d);
    }
    require(!out.empty(), ErrorCode::parse, "empty detection record list");
    return out;
}

// ---- heuristic baseline -----------------------------------------------------

namespace {

constexpr double kMinConfidence = 1e-3;
constexpr int kGapBandRows = 15;

JointDetection detect_in_band(const NormalizedImage& img, int col_begin, int col_end) {
    const FloatGrid& px = img.pixels;
    int h = px.height();
    int band_w = col_end - col_begin;

    std::vector<double> row_mean(h, 0.0);
    for (int y = 0; y < h; ++y) {
        double acc = 0.0;
        for (int x = col_begin; x < col_end; ++x)
            acc += px.at(x, y);
        row_mean[y] = acc / band_w;
    }
    double lo = *std::min_element(row_mean.begin(), row_mean.end());
    double hi = *std::max_element(row_mean.begin(), row_mean.end());
    double mid = 0.5 * (lo + hi);

    // Bright span = rows holding bone; the joint gap is the darkest window
    // strictly inside it.
    int top = 0, bottom = h - 1;
    while (top < h && row_mean[top] < mid)
        ++top;
    while (bottom > top && row_mean[bottom] < mid)
        --bottom;

    double center_y = (top + bottom) / 2.0;
    double gap_mean = mid;
    if (bottom - top + 1 > kGapBandRows) {
        double best = std::numeric_limits<double>::max();
        int best_row = top;
        double window = 0.0;
        for (int y = top; y < top + kGapBandRows; ++y)
            window += row_mean[y];
        for (int y = top;; ++y) {
            if (window < best) {
                best = window;
                best_row = y;
            }
            if (y + kGapBandRows > bottom)
                break;
            window += row_mean[y + kGapBandRows] - row_mean[y];
        }
        center_y = best_row + (kGapBandRows - 1) / 2.0;
        gap_mean = best / kGapBandRows;
    }

    // Column = intensity centroid of the bright columns inside the bone span.
    std::vector<double> col_mean(band_w, 0.0);
    for (int x = col_begin; x < col_end; ++x) {
        double acc = 0.0;
        for (int y = top; y <= bottom; ++y)
            acc += px.at(x, y);
        col_mean[x - col_begin] = acc / (bottom - top + 1);
    }
    double clo = *std::min_element(col_mean.begin(), col_mean.end());
    double chi = *std::max_element(col_mean.begin(), col_mean.end());
    double cmid = 0.5 * (clo + chi);
    double weight_sum = 0.0, weighted_col = 0.0;
    for (int i = 0; i < band_w; ++i) {
        if (col_mean[i] >= cmid) {
            double w = col_mean[i] - clo;
            weight_sum += w;
            weighted_col += w * i;
        }
    }
    double center_x = weight_sum > 0.0 ? col_begin + weighted_col / weight_sum
                                       : col_begin + (band_w - 1) / 2.0;

    double bone_mean = 0.0;
    int bone_rows = 0;
    for (int y = top; y <= bottom; ++y)
        if (row_mean[y] >= mid) {
            bone_mean += row_mean[y];
            ++bone_rows;
        }
    bone_mean = bone_rows > 0 ? bone_mean / bone_rows : mid;
    double confidence = std::clamp(bone_mean - gap_mean, kMinConfidence, 1.0);

    return detection_from_center(Point{center_x, center_y}, confidence);
}

} // namespace

std::vector<JointDetection> heuristic_detect(const NormalizedImage& img) {
    int w = img.width();
    std::vector<JointDetection> out;
    if (img.laterality == Laterality::bilateral) {
        out.push_back(detect_in_band(img, 0, w / 2));
        out.push_back(detect_in_band(img, w / 2, w));
    } else {
        out.push_back(detect_in_band(img, 0, w));
    }
    return out;
}

} // namespace koa
