/* koa — knee osteoarthritis grading pipeline, C API.
 *
 * All functions return koa_status; on failure koa_last_error() holds a
 * human-readable message for the calling thread. Objects returned through
 * out-pointers are owned by the caller and released with the matching
 * close/destroy function.
 */
#ifndef KOA_H
#define KOA_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define KOA_API __declspec(dllexport)
#else
#define KOA_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum koa_status {
    KOA_OK = 0,
    KOA_E_INVALID_ARGUMENT = 1,
    KOA_E_IO = 2,
    KOA_E_PARSE = 3,
    KOA_E_UNSUPPORTED = 4,
    KOA_E_MISSING_DATA = 5,
    KOA_E_GEOMETRY = 6,
    KOA_E_BACKEND = 7,
    KOA_E_INTERNAL = 8
} koa_status;

typedef struct koa_image koa_image;
typedef struct koa_thresholds koa_thresholds;
typedef struct koa_forest koa_forest;
typedef struct koa_pipeline koa_pipeline;

KOA_API const char* koa_version(void);

/* Message for the most recent failure on this thread; empty string when the
 * last call succeeded. */
KOA_API const char* koa_last_error(void);

/* ---- radiographs ------------------------------------------------------- */

/* Opens a DICOM file or a PGM image with its JSON sidecar (pass NULL to use
 * <image>.json) and applies preprocessing: resample to 0.2 mm/px, 8-bit
 * reduction, unit-scale normalization. */
KOA_API koa_status koa_image_open(const char* image_path, const char* sidecar_path,
                                  koa_image** out);
KOA_API koa_status koa_image_size(const koa_image* img, int32_t* width, int32_t* height);
KOA_API koa_status koa_image_source_id(const koa_image* img, char* buf, size_t cap);
KOA_API void koa_image_close(koa_image* img);

/* ---- joint-space thresholds -------------------------------------------- */

KOA_API koa_status koa_thresholds_default(koa_thresholds** out);
KOA_API koa_status koa_thresholds_open(const char* path, koa_thresholds** out);
KOA_API koa_status koa_thresholds_save(const koa_thresholds* t, const char* path);
KOA_API koa_status koa_thresholds_values(const koa_thresholds* t, double med[3], double lat[3]);

/* Exact minimum-variance calibration from paired (med, lat) distances. */
KOA_API koa_status koa_thresholds_calibrate(const double* med_px, const double* lat_px,
                                            size_t count, koa_thresholds** out);

/* CSV variant: rows of "med_px,lat_px". Occupancy arrays (may be NULL)
 * receive the per-class sample counts. */
KOA_API koa_status koa_thresholds_calibrate_file(const char* measurements_csv,
                                                 koa_thresholds** out,
                                                 int32_t med_occupancy[4],
                                                 int32_t lat_occupancy[4]);

/* JSN grade 0-3 per compartment from measured distances in pixels. */
KOA_API koa_status koa_jsn_grade(const koa_thresholds* t, double med_px, double lat_px,
                                 int32_t* med_grade, int32_t* lat_grade);
KOA_API void koa_thresholds_close(koa_thresholds* t);

/* ---- fusion forest ------------------------------------------------------ */

typedef struct koa_forest_params {
    int32_t tree_count;        /* 100  */
    int32_t max_depth;         /* 8    */
    int32_t min_leaf;          /* 2    */
    int32_t features_per_split;/* 2    */
    uint64_t master_seed;
} koa_forest_params;

typedef struct koa_forest_stats {
    double training_accuracy;
    int32_t max_depth_seen;
    int32_t min_leaf_seen;
} koa_forest_stats;

KOA_API void koa_forest_params_init(koa_forest_params* params);

/* features is row-major, 7 values per sample; labels are KL grades 0-4. */
KOA_API koa_status koa_forest_train(const double* features, const int32_t* labels,
                                    size_t count, const koa_forest_params* params,
                                    koa_forest** out);

/* Dataset file: delimited rows of 7 features then the label. */
KOA_API koa_status koa_forest_train_file(const char* dataset_path,
                                         const koa_forest_params* params,
                                         koa_forest** out, koa_forest_stats* stats);
KOA_API koa_status koa_forest_open(const char* path, koa_forest** out);
KOA_API koa_status koa_forest_save(const koa_forest* f, const char* path);

/* Committee vote on one feature vector (p0..p4, med_px, lat_px). votes may
 * be NULL. */
KOA_API koa_status koa_forest_predict(const koa_forest* f, const double features[7],
                                      int32_t* kl_grade, double votes[5]);
KOA_API koa_status koa_forest_hash(const koa_forest* f, char* buf, size_t cap);
KOA_API void koa_forest_close(koa_forest* f);

/* ---- grading pipeline --------------------------------------------------- */

KOA_API koa_status koa_pipeline_create(koa_pipeline** out);

/* Detector: a detection-results JSON file, or the built-in heuristic. */
KOA_API koa_status koa_pipeline_set_detections_file(koa_pipeline* p, const char* path);
KOA_API koa_status koa_pipeline_set_detector_heuristic(koa_pipeline* p);

/* KL-probability backend: results file, uniform stub, or external process
 * speaking the line protocol. */
KOA_API koa_status koa_pipeline_set_probs_file(koa_pipeline* p, const char* path);
KOA_API koa_status koa_pipeline_set_probs_uniform(koa_pipeline* p);
KOA_API koa_status koa_pipeline_set_probs_command(koa_pipeline* p, const char* command);

/* Mask backend: RLE mask document, intensity-threshold fallback, or external
 * process. */
KOA_API koa_status koa_pipeline_set_masks_file(koa_pipeline* p, const char* path);
KOA_API koa_status koa_pipeline_set_masks_threshold(koa_pipeline* p);
KOA_API koa_status koa_pipeline_set_masks_command(koa_pipeline* p, const char* command);

KOA_API koa_status koa_pipeline_set_model(koa_pipeline* p, const char* model_path);
KOA_API koa_status koa_pipeline_set_thresholds(koa_pipeline* p, const char* thresholds_path);

/* Runs the five-step pipeline on one study and writes report_<id>.json and
 * overlay_<id>.ppm into out_dir. Succeeds when at least one knee grades;
 * summary (optional) receives a short human-readable result. */
KOA_API koa_status koa_pipeline_grade(koa_pipeline* p, const char* image_path,
                                      const char* sidecar_path, const char* out_dir,
                                      char* summary, size_t summary_cap);
KOA_API void koa_pipeline_destroy(koa_pipeline* p);

/* ---- evaluation --------------------------------------------------------- */

/* predictions/labels: CSV "case_id,grade". ratings (optional): CSV with a
 * case_id column and one column per rater. Writes the full metrics report
 * (confusion matrix, summary metrics, binary OA, QWK agreement table). */
KOA_API koa_status koa_evaluate_files(const char* predictions_csv, const char* labels_csv,
                                      const char* ratings_csv, const char* out_json,
                                      char* summary, size_t summary_cap);

/* Quadratic weighted kappa between two grade lists. */
KOA_API koa_status koa_qwk(const int32_t* ra, const int32_t* rb, size_t count, double* out);

/* ---- phantoms ----------------------------------------------------------- */

/* Materializes every study in a phantom spec document: image, sidecar,
 * detector/segmenter fixture documents and the ground-truth record. */
KOA_API koa_status koa_phantom_generate(const char* spec_json_path, const char* out_dir,
                                        char* summary, size_t summary_cap);

#ifdef __cplusplus
}
#endif

#endif /* KOA_H */
