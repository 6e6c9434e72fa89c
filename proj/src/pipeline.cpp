#include "koa/pipeline.hpp"

#include "koa/error.hpp"
#include "koa/io.hpp"
#include "koa/version.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <sstream>

namespace koa {

using nlohmann::json;

namespace {

std::unique_ptr<ClassifierBackend> build_classifier(const BackendConfig& cfg) {
    if (cfg.kind == "uniform" || cfg.kind == "stub")
        return make_uniform_classifier();
    if (cfg.kind == "file")
        return make_file_classifier(cfg.path_or_command);
    if (cfg.kind == "process")
        return make_process_classifier(cfg.path_or_command);
    fail(ErrorCode::invalid_argument, "unknown probability backend '" + cfg.kind + "'");
}

std::unique_ptr<SegmenterBackend> build_segmenter(const BackendConfig& cfg) {
    if (cfg.kind == "threshold")
        return make_threshold_segmenter();
    if (cfg.kind == "file")
        return make_file_segmenter(cfg.path_or_command);
    if (cfg.kind == "process")
        return make_process_segmenter(cfg.path_or_command);
    fail(ErrorCode::invalid_argument, "unknown mask backend '" + cfg.kind + "'");
}

} // namespace

Pipeline::Pipeline(const PipelineConfig& config) : config_(config) {
    require(config.detector.kind == "heuristic" || config.detector.kind == "file",
            ErrorCode::invalid_argument,
            "unknown detector '" + config.detector.kind + "'");
    classifier_ = build_classifier(config.probs);
    segmenter_ = build_segmenter(config.masks);
    if (!config.model_path.empty())
        model_ = load_model(read_file_text(config.model_path));
    thresholds_ = config.thresholds_path.empty()
                      ? default_thresholds()
                      : parse_thresholds(read_file_text(config.thresholds_path));
}

const RandomForestModel& Pipeline::model() const {
    require(model_.has_value(), ErrorCode::invalid_argument, "pipeline has no fusion model");
    return *model_;
}

std::string Pipeline::config_hash() const {
    // Content-derived, so the hash is stable across directories and runs.
    Fnv1a64 hash;
    hash.update(std::string(kVersion));
    hash.update(config_.detector.kind);
    hash.update(config_.probs.kind);
    hash.update(config_.masks.kind);
    for (double b : thresholds_.med_boundaries)
        hash.update(b);
    for (double b : thresholds_.lat_boundaries)
        hash.update(b);
    if (model_) {
        hash.update(model_->training_fingerprint);
        hash.update(static_cast<uint64_t>(model_->params.master_seed));
        hash.update(static_cast<uint64_t>(model_->params.n_trees));
    }
    return hash.hex();
}

Pipeline::StudyResult Pipeline::grade_study(const RawRadiograph& raw) {
    StudyResult result;

    // Step 1: standardize spacing and intensity scale.
    NormalizedImage image = normalize(resample_to_standard(raw));
    result.source_id = image.source_id;

    // Step 2: candidates, then the top-two selection.
    std::vector<JointDetection> candidates =
        config_.detector.kind == "file"
            ? load_candidates(read_file_text(config_.detector.path), image.source_id)
            : heuristic_detect(image);
    KneePair pair = select_knees(candidates);
    result.single_knee = pair.single_knee_flag;

    std::vector<std::pair<KneeSide, JointDetection>> knees;
    knees.emplace_back(KneeSide::left, pair.image_left);
    if (!pair.single_knee_flag)
        knees.emplace_back(KneeSide::right, pair.image_right);

    for (auto& [side, detection] : knees) {
        KneeResult knee;
        knee.side = side;
        knee.detection = detection;
        std::string stage = "extract_roi";
        try {
            // Step 3: fixed-scale patch and the KL probability guess.
            RoiPatch roi = extract_roi(image, detection.center);
            knee.pad_fraction = roi.pad_fraction;
            stage = "classify";
            knee.probabilities = classify(*classifier_, roi, image.source_id, side);

            // Step 4a: inference-time enhancement, then masks.
            stage = "segment";
            RoiPatch enhanced = enhance_for_segmentation(roi);
            knee.masks = segment(*segmenter_, enhanced, image.source_id, side);

            // Step 4b: lowest points, line series, JSN grades.
            stage = "jsd";
            LowestPoints points = find_lowest_points(knee.masks, kRoiHalf);
            MedialSide medial = assign_sides(image.laterality, side);
            knee.measurement = measure_jsd(knee.masks, points, kRoiHalf, medial);
            knee.jsn = grade_jsn_pair(knee.measurement, thresholds_);

            // Step 5: committee vote over the fused feature vector.
            if (model_) {
                stage = "fuse";
                FeatureVector fv = assemble_features(knee.probabilities, knee.measurement);
                knee.assessment = predict(*model_, fv);
                knee.assessment.jsn = knee.jsn;
                knee.assessment.provenance = config_.probs.kind + "+" + config_.masks.kind;
            } else {
                knee.assessment.kl_grade = -1;
            }
            knee.ok = true;
        } catch (const Error& e) {
            knee.ok = false;
            knee.failed_stage = stage;
            knee.error = e.what();
        }
        result.knees.push_back(std::move(knee));
    }

    result.image = std::move(image);
    return result;
}

std::string report_to_json(const Pipeline::StudyResult& result,
                           const std::string& config_hash) {
    json knees = json::array();
    for (const auto& knee : result.knees) {
        json k;
        k["side"] = to_string(knee.side);
        if (!knee.ok) {
            k["status"] = "failed";
            k["stage"] = knee.failed_stage;
            k["error"] = knee.error;
            knees.push_back(std::move(k));
            continue;
        }
        k["status"] = "ok";
        k["center"] = {knee.detection.center.x, knee.detection.center.y};
        k["confidence"] = knee.detection.confidence;
        k["pad_fraction"] = knee.pad_fraction;
        k["probabilities"] = knee.probabilities.p;
        k["jsd"] = {{"med_px", knee.measurement.med_px},
                    {"lat_px", knee.measurement.lat_px},
                    {"med_mm", knee.measurement.med_mm},
                    {"lat_mm", knee.measurement.lat_mm},
                    {"valid_lines_med", knee.measurement.valid_line_count_med()},
                    {"valid_lines_lat", knee.measurement.valid_line_count_lat()}};
        k["jsn"] = {{"med", knee.jsn.med}, {"lat", knee.jsn.lat}};
        if (knee.assessment.kl_grade >= 0) {
            k["kl_grade"] = knee.assessment.kl_grade;
            k["vote_distribution"] = knee.assessment.vote_distribution;
        } else {
            k["kl_grade"] = nullptr;
        }
        if (knee.pad_fraction > 0.0)
            k["flags"] = json::array({"padded_roi"});
        knees.push_back(std::move(k));
    }

    json doc;
    doc["source_id"] = result.source_id;
    doc["software_version"] = kVersion;
    doc["config_hash"] = config_hash;
    doc["laterality"] = to_string(result.image.laterality);
    doc["single_knee"] = result.single_knee;
    doc["knees"] = std::move(knees);
    return doc.dump(2) + "\n";
}

RgbImage render_study_overlay(const Pipeline::StudyResult& result) {
    std::vector<KneeAnnotations> annotations;
    for (const auto& knee : result.knees) {
        KneeAnnotations a;
        int cx = static_cast<int>(std::lround(knee.detection.center.x));
        int cy = static_cast<int>(std::lround(knee.detection.center.y));
        a.roi_origin = PixelPoint{cx - kRoiHalf, cy - kRoiHalf};
        if (knee.ok) {
            a.masks = knee.masks;
            a.measurement = knee.measurement;
            a.jsn = knee.jsn;
            a.kl_grade = knee.assessment.kl_grade;
        } else {
            a.failed = true;
            a.failed_stage = knee.failed_stage;
        }
        annotations.push_back(std::move(a));
    }
    return render_overlay(result.image.pixels, annotations);
}

namespace {

void write_atomic(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::string tmp = path + ".tmp";
    write_file_bytes(tmp, bytes.data(), bytes.size());
    std::filesystem::rename(tmp, path);
}

} // namespace

int grade_to_directory(Pipeline& pipeline, const RawRadiograph& raw,
                       const std::string& out_dir, std::string* summary_out) {
    std::filesystem::create_directories(out_dir);
    Pipeline::StudyResult result = pipeline.grade_study(raw);

    std::string report = report_to_json(result, pipeline.config_hash());
    std::filesystem::path base(out_dir);
    write_atomic((base / ("report_" + result.source_id + ".json")).string(),
                 std::vector<uint8_t>(report.begin(), report.end()));
    write_atomic((base / ("overlay_" + result.source_id + ".ppm")).string(),
                 encode_ppm(render_study_overlay(result)));

    int ok_count = 0;
    std::ostringstream summary;
    summary << result.source_id << ":";
    for (const auto& knee : result.knees) {
        summary << " " << to_string(knee.side);
        if (knee.ok) {
            ++ok_count;
            if (knee.assessment.kl_grade >= 0)
                summary << " KL" << knee.assessment.kl_grade;
            summary << " JSN " << knee.jsn.med << "/" << knee.jsn.lat;
        } else {
            summary << " FAILED(" << knee.failed_stage << ")";
        }
    }
    if (summary_out)
        *summary_out = summary.str();
    return ok_count;
}

} // namespace koa
