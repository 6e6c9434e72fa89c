#pragma once

#include "koa/classify.hpp"
#include "koa/detect.hpp"
#include "koa/fuse.hpp"
#include "koa/ingest.hpp"
#include "koa/jsd.hpp"
#include "koa/overlay.hpp"
#include "koa/segment.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace koa {

/// Detector selection: a detection-results file or the heuristic baseline.
struct DetectorConfig {
    std::string kind = "heuristic"; // "heuristic" or "file"
    std::string path;
};

struct BackendConfig {
    std::string kind; // "file", "uniform", "stub", "threshold", "process"
    std::string path_or_command;
};

struct PipelineConfig {
    DetectorConfig detector;
    BackendConfig probs{"uniform", ""};
    BackendConfig masks{"threshold", ""};
    std::string model_path;      // required for the fusion step
    std::string thresholds_path; // empty -> published defaults
};

/// Fully wired pipeline. Backends are constructed once and reused across
/// studies; file-backed backends load their documents lazily.
class Pipeline {
public:
    explicit Pipeline(const PipelineConfig& config);

    const PipelineConfig& config() const { return config_; }
    const RandomForestModel& model() const;
    const ThresholdSet& thresholds() const { return thresholds_; }

    /// Hash over version, backend kinds, thresholds, model fingerprint —
    /// everything that determines the output for a given input.
    std::string config_hash() const;

    struct KneeResult {
        KneeSide side = KneeSide::left;
        bool ok = false;
        std::string failed_stage; // first failing step when !ok
        std::string error;
        JointDetection detection;
        double pad_fraction = 0.0;
        ProbabilityVector probabilities;
        JsdMeasurement measurement;
        JsnGrades jsn;
        KlAssessment assessment;
        BoneMaskPair masks;
    };

    struct StudyResult {
        std::string source_id;
        NormalizedImage image;
        bool single_knee = false;
        std::vector<KneeResult> knees;
    };

    /// Steps 1-5 for every detected knee. Per-knee failures are isolated;
    /// the study fails only when preprocessing or detection fails.
    StudyResult grade_study(const RawRadiograph& raw);

private:
    PipelineConfig config_;
    std::unique_ptr<ClassifierBackend> classifier_;
    std::unique_ptr<SegmenterBackend> segmenter_;
    std::optional<RandomForestModel> model_;
    ThresholdSet thresholds_;
};

/// Machine-readable study report (JSON text). Deterministic for identical
/// inputs and configuration.
std::string report_to_json(const Pipeline::StudyResult& result,
                           const std::string& config_hash);

/// Overlay render of a study result.
RgbImage render_study_overlay(const Pipeline::StudyResult& result);

/// Runs a study end to end and writes report_<id>.json and overlay_<id>.ppm
/// into out_dir. Returns the count of successfully graded knees.
int grade_to_directory(Pipeline& pipeline, const RawRadiograph& raw,
                       const std::string& out_dir, std::string* summary_out = nullptr);

} // namespace koa
