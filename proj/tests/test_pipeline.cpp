#include "koa/pipeline.hpp"

#include "koa/error.hpp"
#include "koa/io.hpp"
#include "koa/phantom.hpp"
#include "support/tmpdir.hpp"

#include <doctest.h>

#include <json.hpp>

#include <random>

using namespace koa;

namespace {

PhantomSpec bilateral_spec(uint64_t seed = 0) {
    PhantomSpec spec;
    spec.seed = seed;
    spec.source_id = "st";
    spec.noise_sd = 0.01;
    spec.knees = {PhantomKnee{{336, 384}, 20, 24, CondyleShape::vee, 0},
                  PhantomKnee{{1008, 384}, 12, 30, CondyleShape::flat, 0}};
    return spec;
}

// Constant-committee model: every tree votes the same grade.
std::string write_constant_model(const testsupport::TmpDir& tmp, int grade) {
    std::mt19937_64 rng(1);
    std::vector<TrainingSample> dataset(40);
    for (auto& s : dataset) {
        std::array<double, 5> p{0.2, 0.2, 0.2, 0.2, 0.2};
        std::copy(p.begin(), p.end(), s.features.values.begin());
        s.features.values[5] = (rng() % 300) / 10.0;
        s.features.values[6] = (rng() % 300) / 10.0;
        s.label = grade;
    }
    ForestParams params;
    params.master_seed = 5;
    std::string path = tmp.str("model.json");
    write_file_text(path, save_model(train_forest(dataset, params)));
    return path;
}

struct StudyFiles {
    std::string image;
    std::string sidecar;
    std::string detections;
    std::string masks;
};

StudyFiles write_study(const testsupport::TmpDir& tmp, const PhantomSpec& spec) {
    write_phantom_study(generate(spec), tmp.str());
    return StudyFiles{tmp.str(spec.source_id + ".pgm"), tmp.str(spec.source_id + ".json"),
                      tmp.str(spec.source_id + "_detections.json"),
                      tmp.str(spec.source_id + "_masks.json")};
}

} // namespace

TEST_CASE("pipeline grades a phantom study with stub probs and constant forest") {
    testsupport::TmpDir tmp("pipe");
    PhantomSpec spec = bilateral_spec();
    StudyFiles files = write_study(tmp, spec);
    std::string model = write_constant_model(tmp, 2);

    PipelineConfig config;
    config.detector = {"file", files.detections};
    config.masks = {"file", files.masks};
    config.probs = {"uniform", ""};
    config.model_path = model;
    Pipeline pipeline(config);

    RawRadiograph raw = load_radiograph(files.image, files.sidecar);
    Pipeline::StudyResult result = pipeline.grade_study(raw);
    REQUIRE(result.knees.size() == 2);
    for (const auto& knee : result.knees) {
        REQUIRE(knee.ok);
        CHECK(knee.assessment.kl_grade == 2); // constant committee
        CHECK(knee.measurement.valid_line_count_med() >= 5);
    }
    // Measured D_avg equals the generator truth on fixture-backed masks.
    PhantomStudy study = generate(spec);
    CHECK(result.knees[0].measurement.med_px ==
          doctest::Approx(study.truth.knees[0].d_avg_med_px));
    CHECK(result.knees[1].measurement.lat_px ==
          doctest::Approx(study.truth.knees[1].d_avg_lat_px));
}

TEST_CASE("per-knee fault isolation: one missing mask record") {
    testsupport::TmpDir tmp("fault");
    PhantomSpec spec = bilateral_spec(1);
    StudyFiles files = write_study(tmp, spec);

    // Drop the right knee's masks from the document.
    auto doc = nlohmann::json::parse(read_file_text(files.masks));
    doc[spec.source_id].erase("right");
    write_file_text(files.masks, doc.dump());

    PipelineConfig config;
    config.detector = {"file", files.detections};
    config.masks = {"file", files.masks};
    Pipeline pipeline(config);

    RawRadiograph raw = load_radiograph(files.image, files.sidecar);
    Pipeline::StudyResult result = pipeline.grade_study(raw);
    REQUIRE(result.knees.size() == 2);
    CHECK(result.knees[0].ok);
    CHECK_FALSE(result.knees[1].ok);
    CHECK(result.knees[1].failed_stage == "segment");

    std::string summary;
    int ok = grade_to_directory(pipeline, raw, tmp.str("out"), &summary);
    CHECK(ok == 1);
    CHECK(summary.find("FAILED(segment)") != std::string::npos);

    // The report records the failure stage verbatim.
    auto report = nlohmann::json::parse(
        read_file_text(tmp.str("out/report_" + spec.source_id + ".json")));
    CHECK(report["knees"][1]["status"] == "failed");
    CHECK(report["knees"][1]["stage"] == "segment");
    CHECK(report["knees"][0]["status"] == "ok");
}

TEST_CASE("overlay line annotations equal the measured line counts") {
    testsupport::TmpDir tmp("lines");
    PhantomSpec spec = bilateral_spec(2);
    StudyFiles files = write_study(tmp, spec);

    PipelineConfig config;
    config.detector = {"file", files.detections};
    config.masks = {"file", files.masks};
    Pipeline pipeline(config);

    RawRadiograph raw = load_radiograph(files.image, files.sidecar);
    Pipeline::StudyResult result = pipeline.grade_study(raw);
    int expected = 0;
    for (const auto& knee : result.knees)
        expected += knee.measurement.valid_line_count_med() +
                    knee.measurement.valid_line_count_lat();

    RgbImage overlay = render_study_overlay(result);
    CHECK(count_line_columns(overlay) == expected);
}

TEST_CASE("reports and overlays are byte-identical across reruns") {
    testsupport::TmpDir tmp("determ");
    PhantomSpec spec = bilateral_spec(3);
    StudyFiles files = write_study(tmp, spec);
    std::string model = write_constant_model(tmp, 1);

    PipelineConfig config;
    config.detector = {"file", files.detections};
    config.masks = {"file", files.masks};
    config.model_path = model;

    auto run = [&](const std::string& out) {
        Pipeline pipeline(config);
        RawRadiograph raw = load_radiograph(files.image, files.sidecar);
        grade_to_directory(pipeline, raw, tmp.str(out));
    };
    run("a");
    run("b");
    auto report_a = read_file_bytes(tmp.str("a/report_st.json"));
    auto report_b = read_file_bytes(tmp.str("b/report_st.json"));
    CHECK(report_a == report_b);
    auto overlay_a = read_file_bytes(tmp.str("a/overlay_st.ppm"));
    auto overlay_b = read_file_bytes(tmp.str("b/overlay_st.ppm"));
    CHECK(overlay_a == overlay_b);
}

TEST_CASE("report embeds version and config hash") {
    testsupport::TmpDir tmp("hash");
    PhantomSpec spec = bilateral_spec(4);
    StudyFiles files = write_study(tmp, spec);

    PipelineConfig config;
    config.detector = {"file", files.detections};
    config.masks = {"file", files.masks};
    Pipeline pipeline(config);
    CHECK(pipeline.config_hash().size() == 16);

    RawRadiograph raw = load_radiograph(files.image, files.sidecar);
    grade_to_directory(pipeline, raw, tmp.str("out"));
    auto report = nlohmann::json::parse(
        read_file_text(tmp.str("out/report_" + spec.source_id + ".json")));
    CHECK(report["config_hash"] == pipeline.config_hash());
    CHECK(report["software_version"].get<std::string>().size() >= 5);
    CHECK(report["knees"][0]["kl_grade"].is_null()); // no model configured
}

TEST_CASE("single-knee phantom flows through with the laterality rule") {
    testsupport::TmpDir tmp("single");
    PhantomSpec spec;
    spec.source_id = "sk";
    spec.laterality = Laterality::right;
    spec.width = 800;
    spec.knees = {PhantomKnee{{400, 384}, 10, 28, CondyleShape::flat, 0}};
    StudyFiles files = write_study(tmp, spec);

    PipelineConfig config;
    config.detector = {"file", files.detections};
    config.masks = {"file", files.masks};
    Pipeline pipeline(config);

    RawRadiograph raw = load_radiograph(files.image, files.sidecar);
    Pipeline::StudyResult result = pipeline.grade_study(raw);
    CHECK(result.single_knee);
    REQUIRE(result.knees.size() == 1);
    REQUIRE(result.knees[0].ok);
    // Right knee: medial = viewer's right half, where the 10 px gap sits.
    CHECK(result.knees[0].measurement.med_px == doctest::Approx(10.0));
    CHECK(result.knees[0].measurement.lat_px == doctest::Approx(28.0));
    CHECK(result.knees[0].jsn.med == 2);
}
