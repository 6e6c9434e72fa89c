// koa: knee osteoarthritis grading pipeline CLI. All functionality comes in
// through the shared-library C API.

#include <koa/koa.h>

#include <CLI11.hpp>

#include <cstdio>
#include <memory>
#include <string>

namespace {

int report_failure(const char* what, koa_status status) {
    std::fprintf(stderr, "error: %s failed (%d): %s\n", what, static_cast<int>(status),
                 koa_last_error());
    return 1;
}

struct GradeOptions {
    std::string input;
    std::string sidecar;
    std::string detections = "heuristic";
    std::string masks = "threshold";
    std::string probs = "uniform";
    std::string model;
    std::string thresholds;
    std::string out = ".";
};

int run_grade(const GradeOptions& opt) {
    koa_pipeline* pipeline = nullptr;
    if (koa_status s = koa_pipeline_create(&pipeline); s != KOA_OK)
        return report_failure("pipeline create", s);
    auto cleanup = std::unique_ptr<koa_pipeline, void (*)(koa_pipeline*)>(
        pipeline, koa_pipeline_destroy);

    koa_status s = KOA_OK;
    if (opt.detections == "heuristic")
        s = koa_pipeline_set_detector_heuristic(pipeline);
    else
        s = koa_pipeline_set_detections_file(pipeline, opt.detections.c_str());
    if (s != KOA_OK)
        return report_failure("detector config", s);

    if (opt.probs == "uniform")
        s = koa_pipeline_set_probs_uniform(pipeline);
    else if (opt.probs.rfind("proc:", 0) == 0)
        s = koa_pipeline_set_probs_command(pipeline, opt.probs.substr(5).c_str());
    else
        s = koa_pipeline_set_probs_file(pipeline, opt.probs.c_str());
    if (s != KOA_OK)
        return report_failure("probability backend config", s);

    if (opt.masks == "threshold")
        s = koa_pipeline_set_masks_threshold(pipeline);
    else if (opt.masks.rfind("proc:", 0) == 0)
        s = koa_pipeline_set_masks_command(pipeline, opt.masks.substr(5).c_str());
    else
        s = koa_pipeline_set_masks_file(pipeline, opt.masks.c_str());
    if (s != KOA_OK)
        return report_failure("mask backend config", s);

    if (!opt.model.empty())
        if ((s = koa_pipeline_set_model(pipeline, opt.model.c_str())) != KOA_OK)
            return report_failure("model config", s);
    if (!opt.thresholds.empty())
        if ((s = koa_pipeline_set_thresholds(pipeline, opt.thresholds.c_str())) != KOA_OK)
            return report_failure("thresholds config", s);

    char summary[1024];
    s = koa_pipeline_grade(pipeline, opt.input.c_str(),
                           opt.sidecar.empty() ? nullptr : opt.sidecar.c_str(),
                           opt.out.c_str(), summary, sizeof(summary));
    if (s != KOA_OK)
        return report_failure("grade", s);
    std::printf("%s\n", summary);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Knee osteoarthritis KL grading pipeline"};
    app.set_version_flag("--version", koa_version());
    app.set_config("--config")->envname("KOA_CONFIG");
    app.require_subcommand(1);

    // grade
    GradeOptions grade;
    CLI::App* cmd_grade = app.add_subcommand("grade", "Grade one study end to end");
    cmd_grade->add_option("--input", grade.input, "DICOM file or PGM image")->required();
    cmd_grade->add_option("--sidecar", grade.sidecar, "JSON sidecar for PGM input");
    cmd_grade->add_option("--backend-detections", grade.detections,
                          "detections JSON file, or 'heuristic'");
    cmd_grade->add_option("--backend-masks", grade.masks,
                          "mask document, 'threshold', or 'proc:<command>'");
    cmd_grade->add_option("--backend-probs", grade.probs,
                          "probability document, 'uniform', or 'proc:<command>'");
    cmd_grade->add_option("--model", grade.model, "fusion forest model document");
    cmd_grade->add_option("--thresholds", grade.thresholds,
                          "JSN thresholds document (defaults to published values)");
    cmd_grade->add_option("--out", grade.out, "output directory")->required();

    // evaluate
    std::string ev_predictions, ev_labels, ev_ratings, ev_out = "metrics.json";
    CLI::App* cmd_eval = app.add_subcommand("evaluate", "Metrics for graded batches");
    cmd_eval->add_option("--predictions", ev_predictions, "CSV case_id,grade")->required();
    cmd_eval->add_option("--labels", ev_labels, "CSV case_id,grade")->required();
    cmd_eval->add_option("--ratings", ev_ratings, "CSV case_id plus rater columns");
    cmd_eval->add_option("--out", ev_out, "metrics report path");

    // calibrate
    std::string cal_measurements, cal_out = "thresholds.json";
    CLI::App* cmd_cal = app.add_subcommand("calibrate", "JSN boundaries from measurements");
    cmd_cal->add_option("--measurements", cal_measurements, "CSV med_px,lat_px")->required();
    cmd_cal->add_option("--out", cal_out, "thresholds document path");

    // train-fusion
    std::string tf_dataset, tf_out = "model.json";
    koa_forest_params tf_params;
    koa_forest_params_init(&tf_params);
    CLI::App* cmd_train = app.add_subcommand("train-fusion", "Train the fusion forest");
    cmd_train->add_option("--dataset", tf_dataset, "CSV of 7 features + label")->required();
    cmd_train->add_option("--seed", tf_params.master_seed, "master seed");
    cmd_train->add_option("--trees", tf_params.tree_count, "tree count");
    cmd_train->add_option("--max-depth", tf_params.max_depth, "depth cap");
    cmd_train->add_option("--min-leaf", tf_params.min_leaf, "minimum samples per leaf");
    cmd_train->add_option("--features-per-split", tf_params.features_per_split,
                          "features sampled per node");
    cmd_train->add_option("--out", tf_out, "model document path");

    // phantom
    std::string ph_spec, ph_out = ".";
    CLI::App* cmd_phantom = app.add_subcommand("phantom", "Generate synthetic studies");
    cmd_phantom->add_option("--spec", ph_spec, "phantom spec document")->required();
    cmd_phantom->add_option("--out", ph_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    if (cmd_grade->parsed())
        return run_grade(grade);

    if (cmd_eval->parsed()) {
        char summary[512];
        koa_status s = koa_evaluate_files(ev_predictions.c_str(), ev_labels.c_str(),
                                          ev_ratings.empty() ? nullptr : ev_ratings.c_str(),
                                          ev_out.c_str(), summary, sizeof(summary));
        if (s != KOA_OK)
            return report_failure("evaluate", s);
        std::printf("%s\nreport written to %s\n", summary, ev_out.c_str());
        return 0;
    }

    if (cmd_cal->parsed()) {
        koa_thresholds* thresholds = nullptr;
        int32_t med_occ[4], lat_occ[4];
        koa_status s = koa_thresholds_calibrate_file(cal_measurements.c_str(), &thresholds,
                                                     med_occ, lat_occ);
        if (s != KOA_OK)
            return report_failure("calibrate", s);
        double med[3], lat[3];
        koa_thresholds_values(thresholds, med, lat);
        s = koa_thresholds_save(thresholds, cal_out.c_str());
        koa_thresholds_close(thresholds);
        if (s != KOA_OK)
            return report_failure("thresholds save", s);
        std::printf("med boundaries: %g %g %g  occupancy: %d/%d/%d/%d\n", med[0], med[1],
                    med[2], med_occ[0], med_occ[1], med_occ[2], med_occ[3]);
        std::printf("lat boundaries: %g %g %g  occupancy: %d/%d/%d/%d\n", lat[0], lat[1],
                    lat[2], lat_occ[0], lat_occ[1], lat_occ[2], lat_occ[3]);
        std::printf("thresholds written to %s\n", cal_out.c_str());
        return 0;
    }

    if (cmd_train->parsed()) {
        koa_forest* forest = nullptr;
        koa_forest_stats stats{};
        koa_status s = koa_forest_train_file(tf_dataset.c_str(), &tf_params, &forest, &stats);
        if (s != KOA_OK)
            return report_failure("train-fusion", s);
        char hash[32];
        koa_forest_hash(forest, hash, sizeof(hash));
        s = koa_forest_save(forest, tf_out.c_str());
        koa_forest_close(forest);
        if (s != KOA_OK)
            return report_failure("model save", s);
        std::printf("training accuracy: %.4f\n", stats.training_accuracy);
        std::printf("structural audit: max depth %d (cap %d), min leaf %d (floor %d)\n",
                    stats.max_depth_seen, tf_params.max_depth, stats.min_leaf_seen,
                    tf_params.min_leaf);
        std::printf("model hash: %s\nmodel written to %s\n", hash, tf_out.c_str());
        return 0;
    }

    if (cmd_phantom->parsed()) {
        char summary[256];
        koa_status s =
            koa_phantom_generate(ph_spec.c_str(), ph_out.c_str(), summary, sizeof(summary));
        if (s != KOA_OK)
            return report_failure("phantom", s);
        std::printf("%s into %s\n", summary, ph_out.c_str());
        return 0;
    }

    return 0;
}
