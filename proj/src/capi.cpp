#include "koa/koa.h"

#include "koa/error.hpp"
#include "koa/eval_io.hpp"
#include "koa/fuse.hpp"
#include "koa/ingest.hpp"
#include "koa/io.hpp"
#include "koa/jsd.hpp"
#include "koa/phantom.hpp"
#include "koa/pipeline.hpp"
#include "koa/version.hpp"

#include <cstring>
#include <filesystem>
#include <sstream>

// C handles wrap the C++ core objects; every entry point catches and maps
// exceptions onto status codes with a thread-local message.

struct koa_image {
    koa::RawRadiograph raw;
    koa::NormalizedImage normalized;
};

struct koa_thresholds {
    koa::ThresholdSet set;
};

struct koa_forest {
    koa::RandomForestModel model;
};

struct koa_pipeline {
    koa::PipelineConfig config;
};

namespace {

thread_local std::string g_last_error;

koa_status map_code(koa::ErrorCode code) {
    using koa::ErrorCode;
    switch (code) {
    case ErrorCode::invalid_argument: return KOA_E_INVALID_ARGUMENT;
    case ErrorCode::io: return KOA_E_IO;
    case ErrorCode::parse:
    case ErrorCode::missing_field:
    case ErrorCode::malformed_element:
    case ErrorCode::missing_required_tag:
    case ErrorCode::version_mismatch: return KOA_E_PARSE;
    case ErrorCode::unsupported_transfer_syntax: return KOA_E_UNSUPPORTED;
    case ErrorCode::lookup_miss: return KOA_E_MISSING_DATA;
    case ErrorCode::geometry:
    case ErrorCode::degenerate_data: return KOA_E_GEOMETRY;
    case ErrorCode::backend: return KOA_E_BACKEND;
    case ErrorCode::internal: return KOA_E_INTERNAL;
    }
    return KOA_E_INTERNAL;
}

template <typename Fn>
koa_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return KOA_OK;
    } catch (const koa::Error& e) {
        g_last_error = e.what();
        return map_code(e.code());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return KOA_E_INTERNAL;
    } catch (...) {
        g_last_error = "unknown failure";
        return KOA_E_INTERNAL;
    }
}

koa_status invalid(const char* message) {
    g_last_error = message;
    return KOA_E_INVALID_ARGUMENT;
}

void copy_out(const std::string& text, char* buf, size_t cap) {
    if (!buf || cap == 0)
        return;
    size_t n = std::min(text.size(), cap - 1);
    std::memcpy(buf, text.data(), n);
    buf[n] = '\0';
}

koa::ForestParams to_cpp(const koa_forest_params* p) {
    koa::ForestParams out;
    if (p) {
        out.n_trees = p->tree_count;
        out.max_depth = p->max_depth;
        out.min_leaf = p->min_leaf;
        out.features_per_split = p->features_per_split;
        out.master_seed = p->master_seed;
    }
    return out;
}

} // namespace

extern "C" {

const char* koa_version(void) { return koa::kVersion; }

const char* koa_last_error(void) { return g_last_error.c_str(); }

// ---- images -----------------------------------------------------------------

koa_status koa_image_open(const char* image_path, const char* sidecar_path,
                          koa_image** out) {
    if (!image_path || !out)
        return invalid("image_path and out are required");
    return guarded([&] {
        auto handle = std::make_unique<koa_image>();
        handle->raw = koa::load_radiograph(image_path, sidecar_path ? sidecar_path : "");
        handle->normalized = koa::normalize(koa::resample_to_standard(handle->raw));
        *out = handle.release();
    });
}

koa_status koa_image_size(const koa_image* img, int32_t* width, int32_t* height) {
    if (!img || !width || !height)
        return invalid("img, width and height are required");
    *width = img->normalized.width();
    *height = img->normalized.height();
    g_last_error.clear();
    return KOA_OK;
}

koa_status koa_image_source_id(const koa_image* img, char* buf, size_t cap) {
    if (!img || !buf)
        return invalid("img and buf are required");
    copy_out(img->normalized.source_id, buf, cap);
    g_last_error.clear();
    return KOA_OK;
}

void koa_image_close(koa_image* img) { delete img; }

// ---- thresholds ----------------------------------------------------------------

koa_status koa_thresholds_default(koa_thresholds** out) {
    if (!out)
        return invalid("out is required");
    return guarded([&] { *out = new koa_thresholds{koa::default_thresholds()}; });
}

koa_status koa_thresholds_open(const char* path, koa_thresholds** out) {
    if (!path || !out)
        return invalid("path and out are required");
    return guarded([&] {
        *out = new koa_thresholds{koa::parse_thresholds(koa::read_file_text(path))};
    });
}

koa_status koa_thresholds_save(const koa_thresholds* t, const char* path) {
    if (!t || !path)
        return invalid("t and path are required");
    return guarded([&] { koa::write_file_text(path, koa::thresholds_to_json(t->set)); });
}

koa_status koa_thresholds_values(const koa_thresholds* t, double med[3], double lat[3]) {
    if (!t || !med || !lat)
        return invalid("t, med and lat are required");
    for (int i = 0; i < 3; ++i) {
        med[i] = t->set.med_boundaries[i];
        lat[i] = t->set.lat_boundaries[i];
    }
    g_last_error.clear();
    return KOA_OK;
}

koa_status koa_thresholds_calibrate(const double* med_px, const double* lat_px,
                                    size_t count, koa_thresholds** out) {
    if (!med_px || !lat_px || !out)
        return invalid("med_px, lat_px and out are required");
    return guarded([&] {
        std::vector<std::pair<double, double>> distances(count);
        for (size_t i = 0; i < count; ++i)
            distances[i] = {med_px[i], lat_px[i]};
        *out = new koa_thresholds{koa::calibrate_thresholds(distances)};
    });
}

koa_status koa_thresholds_calibrate_file(const char* measurements_csv, koa_thresholds** out,
                                         int32_t med_occupancy[4],
                                         int32_t lat_occupancy[4]) {
    if (!measurements_csv || !out)
        return invalid("measurements_csv and out are required");
    return guarded([&] {
        std::vector<double> med, lat;
        auto lines = koa::split_lines(koa::read_file_text(measurements_csv));
        for (size_t i = 0; i < lines.size(); ++i) {
            auto fields = koa::split_csv_line(lines[i]);
            if (i == 0 && !fields.empty() &&
                fields[0].find_first_of("0123456789.-") != 0)
                continue; // header
            koa::require(fields.size() == 2, koa::ErrorCode::parse,
                         "measurement rows need med_px,lat_px: '" + lines[i] + "'");
            try {
                med.push_back(std::stod(fields[0]));
                lat.push_back(std::stod(fields[1]));
            } catch (const std::exception&) {
                koa::fail(koa::ErrorCode::parse, "unparseable measurement: " + lines[i]);
            }
        }
        koa::ThresholdSet set;
        set.med_boundaries = koa::calibrate_boundaries(med);
        set.lat_boundaries = koa::calibrate_boundaries(lat);
        koa::validate_thresholds(set);
        if (med_occupancy) {
            auto occ = koa::threshold_occupancy(med, set.med_boundaries);
            std::copy(occ.begin(), occ.end(), med_occupancy);
        }
        if (lat_occupancy) {
            auto occ = koa::threshold_occupancy(lat, set.lat_boundaries);
            std::copy(occ.begin(), occ.end(), lat_occupancy);
        }
        *out = new koa_thresholds{set};
    });
}

koa_status koa_jsn_grade(const koa_thresholds* t, double med_px, double lat_px,
                         int32_t* med_grade, int32_t* lat_grade) {
    if (!t || !med_grade || !lat_grade)
        return invalid("t, med_grade and lat_grade are required");
    return guarded([&] {
        *med_grade = koa::grade_jsn(med_px, t->set.med_boundaries);
        *lat_grade = koa::grade_jsn(lat_px, t->set.lat_boundaries);
    });
}

void koa_thresholds_close(koa_thresholds* t) { delete t; }

// ---- forest --------------------------------------------------------------------

void koa_forest_params_init(koa_forest_params* params) {
    if (!params)
        return;
    params->tree_count = 100;
    params->max_depth = 8;
    params->min_leaf = 2;
    params->features_per_split = 2;
    params->master_seed = 0;
}

koa_status koa_forest_train(const double* features, const int32_t* labels, size_t count,
                            const koa_forest_params* params, koa_forest** out) {
    if (!features || !labels || !out)
        return invalid("features, labels and out are required");
    return guarded([&] {
        std::vector<koa::TrainingSample> dataset(count);
        for (size_t i = 0; i < count; ++i) {
            for (int f = 0; f < 7; ++f)
                dataset[i].features.values[f] = features[i * 7 + f];
            dataset[i].label = labels[i];
        }
        *out = new koa_forest{koa::train_forest(std::move(dataset), to_cpp(params))};
    });
}

koa_status koa_forest_train_file(const char* dataset_path, const koa_forest_params* params,
                                 koa_forest** out, koa_forest_stats* stats) {
    if (!dataset_path || !out)
        return invalid("dataset_path and out are required");
    return guarded([&] {
        auto dataset = koa::parse_dataset_csv(koa::read_file_text(dataset_path));
        auto model = koa::train_forest(dataset, to_cpp(params));
        if (stats) {
            long correct = 0;
            int deepest = 0;
            int smallest_leaf = std::numeric_limits<int32_t>::max();
            for (const auto& sample : dataset)
                correct += koa::predict(model, sample.features).kl_grade == sample.label;
            for (const auto& tree : model.trees) {
                deepest = std::max(deepest, tree.max_depth());
                smallest_leaf = std::min(smallest_leaf, tree.min_leaf_size());
            }
            stats->training_accuracy = static_cast<double>(correct) / dataset.size();
            stats->max_depth_seen = deepest;
            stats->min_leaf_seen = smallest_leaf;
        }
        *out = new koa_forest{std::move(model)};
    });
}

koa_status koa_forest_open(const char* path, koa_forest** out) {
    if (!path || !out)
        return invalid("path and out are required");
    return guarded([&] {
        *out = new koa_forest{koa::load_model(koa::read_file_text(path))};
    });
}

koa_status koa_forest_save(const koa_forest* f, const char* path) {
    if (!f || !path)
        return invalid("f and path are required");
    return guarded([&] { koa::write_file_text(path, koa::save_model(f->model)); });
}

koa_status koa_forest_predict(const koa_forest* f, const double features[7],
                              int32_t* kl_grade, double votes[5]) {
    if (!f || !features || !kl_grade)
        return invalid("f, features and kl_grade are required");
    return guarded([&] {
        koa::FeatureVector fv;
        std::copy(features, features + 7, fv.values.begin());
        koa::KlAssessment a = koa::predict(f->model, fv);
        *kl_grade = a.kl_grade;
        if (votes)
            std::copy(a.vote_distribution.begin(), a.vote_distribution.end(), votes);
    });
}

koa_status koa_forest_hash(const koa_forest* f, char* buf, size_t cap) {
    if (!f || !buf)
        return invalid("f and buf are required");
    return guarded([&] { copy_out(koa::model_hash(f->model), buf, cap); });
}

void koa_forest_close(koa_forest* f) { delete f; }

// ---- pipeline ------------------------------------------------------------------

koa_status koa_pipeline_create(koa_pipeline** out) {
    if (!out)
        return invalid("out is required");
    *out = new koa_pipeline{};
    g_last_error.clear();
    return KOA_OK;
}

#define KOA_PIPELINE_SETTER(name, field, kind_value, takes_path)                        \
    koa_status name(koa_pipeline* p, const char* value) {                               \
        if (!p || (takes_path && !value))                                               \
            return invalid("pipeline and value are required");                          \
        p->config.field.kind = kind_value;                                              \
        p->config.field.path_or_command = value ? value : "";                           \
        g_last_error.clear();                                                           \
        return KOA_OK;                                                                  \
    }

koa_status koa_pipeline_set_detections_file(koa_pipeline* p, const char* path) {
    if (!p || !path)
        return invalid("pipeline and path are required");
    p->config.detector = {"file", path};
    g_last_error.clear();
    return KOA_OK;
}

koa_status koa_pipeline_set_detector_heuristic(koa_pipeline* p) {
    if (!p)
        return invalid("pipeline is required");
    p->config.detector = {"heuristic", ""};
    g_last_error.clear();
    return KOA_OK;
}

KOA_PIPELINE_SETTER(koa_pipeline_set_probs_file, probs, "file", true)
KOA_PIPELINE_SETTER(koa_pipeline_set_probs_command, probs, "process", true)
KOA_PIPELINE_SETTER(koa_pipeline_set_masks_file, masks, "file", true)
KOA_PIPELINE_SETTER(koa_pipeline_set_masks_command, masks, "process", true)

koa_status koa_pipeline_set_probs_uniform(koa_pipeline* p) {
    if (!p)
        return invalid("pipeline is required");
    p->config.probs = {"uniform", ""};
    g_last_error.clear();
    return KOA_OK;
}

koa_status koa_pipeline_set_masks_threshold(koa_pipeline* p) {
    if (!p)
        return invalid("pipeline is required");
    p->config.masks = {"threshold", ""};
    g_last_error.clear();
    return KOA_OK;
}

koa_status koa_pipeline_set_model(koa_pipeline* p, const char* model_path) {
    if (!p || !model_path)
        return invalid("pipeline and model_path are required");
    p->config.model_path = model_path;
    g_last_error.clear();
    return KOA_OK;
}

koa_status koa_pipeline_set_thresholds(koa_pipeline* p, const char* thresholds_path) {
    if (!p || !thresholds_path)
        return invalid("pipeline and thresholds_path are required");
    p->config.thresholds_path = thresholds_path;
    g_last_error.clear();
    return KOA_OK;
}

koa_status koa_pipeline_grade(koa_pipeline* p, const char* image_path,
                              const char* sidecar_path, const char* out_dir,
                              char* summary, size_t summary_cap) {
    if (!p || !image_path || !out_dir)
        return invalid("pipeline, image_path and out_dir are required");
    return guarded([&] {
        koa::Pipeline pipeline(p->config);
        koa::RawRadiograph raw =
            koa::load_radiograph(image_path, sidecar_path ? sidecar_path : "");
        std::string text;
        int ok = koa::grade_to_directory(pipeline, raw, out_dir, &text);
        copy_out(text, summary, summary_cap);
        koa::require(ok > 0, koa::ErrorCode::geometry,
                     "every knee failed to grade: " + text);
    });
}

void koa_pipeline_destroy(koa_pipeline* p) { delete p; }

// ---- evaluation ------------------------------------------------------------------

koa_status koa_evaluate_files(const char* predictions_csv, const char* labels_csv,
                              const char* ratings_csv, const char* out_json,
                              char* summary, size_t summary_cap) {
    if (!predictions_csv || !labels_csv || !out_json)
        return invalid("predictions_csv, labels_csv and out_json are required");
    return guarded([&] {
        koa::EvaluationReport report = koa::evaluate_documents(
            koa::read_file_text(predictions_csv), koa::read_file_text(labels_csv),
            ratings_csv ? koa::read_file_text(ratings_csv) : "");
        koa::write_file_text(out_json, koa::evaluation_report_to_json(report));
        std::ostringstream text;
        text << "n=" << report.cm.n << " accuracy=" << report.summary.accuracy
             << " balanced=" << report.summary.balanced_accuracy
             << " qwk=" << report.qwk_vs_labels;
        copy_out(text.str(), summary, summary_cap);
    });
}

koa_status koa_qwk(const int32_t* ra, const int32_t* rb, size_t count, double* out) {
    if (!ra || !rb || !out)
        return invalid("ra, rb and out are required");
    return guarded([&] {
        std::vector<int> a(ra, ra + count), b(rb, rb + count);
        *out = koa::qwk(a, b);
    });
}

// ---- phantoms ---------------------------------------------------------------------

koa_status koa_phantom_generate(const char* spec_json_path, const char* out_dir,
                                char* summary, size_t summary_cap) {
    if (!spec_json_path || !out_dir)
        return invalid("spec_json_path and out_dir are required");
    return guarded([&] {
        auto specs = koa::parse_phantom_specs(koa::read_file_text(spec_json_path));
        for (const koa::PhantomSpec& spec : specs)
            koa::write_phantom_study(koa::generate(spec), out_dir);
        copy_out("generated " + std::to_string(specs.size()) + " studies", summary,
                 summary_cap);
    });
}

} // extern "C"
