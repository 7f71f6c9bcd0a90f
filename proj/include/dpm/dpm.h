/*
 * C interface to the dynamic partition model library.
 *
 * All objects are opaque handles owned by the caller and released with the
 * matching *_free function. Every fallible call returns a dpm_status; on
 * failure a message for the calling thread is available from
 * dpm_last_error() until the next failing call on that thread.
 */
#ifndef DPM_DPM_H
#define DPM_DPM_H

#include <stddef.h>
#include <stdint.h>

#if defined(DPM_BUILDING_LIBRARY)
#define DPM_API __attribute__((visibility("default")))
#else
#define DPM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dpm_status {
  DPM_OK = 0,
  DPM_ERR_INVALID_ARGUMENT = 1,
  DPM_ERR_EMPTY_LATENT_STATE = 2,
  DPM_ERR_DOMAIN = 3,
  DPM_ERR_IO = 4,
  DPM_ERR_FORMAT = 5,
  DPM_ERR_TRUNCATED = 6,
  DPM_ERR_INTERNAL = 7
} dpm_status;

typedef enum dpm_model_kind { DPM_BERNOULLI = 0, DPM_GAUSSIAN = 1 } dpm_model_kind;
typedef enum dpm_data_kind { DPM_BINARY = 0, DPM_CONTINUOUS = 1 } dpm_data_kind;
typedef enum dpm_format { DPM_FORMAT_CSV = 0, DPM_FORMAT_IDX = 1, DPM_FORMAT_NETPBM_DIR = 2 } dpm_format;
typedef enum dpm_composition { DPM_HARD = 0, DPM_SOFT = 1 } dpm_composition;

typedef struct dpm_bank dpm_bank;
typedef struct dpm_dataset dpm_dataset;
typedef struct dpm_inference dpm_inference;

DPM_API const char* dpm_last_error(void);
DPM_API const char* dpm_status_string(dpm_status status);

/* ---- datasets ---------------------------------------------------------- */

DPM_API dpm_status dpm_dataset_synthetic(dpm_dataset** out);
/* `kind` is only consulted for CSV; IDX is continuous, netpbm follows the files. */
DPM_API dpm_status dpm_dataset_read(const char* path, dpm_format format, dpm_data_kind kind, dpm_dataset** out);
/* Creates a dataset from a row-major rows x cols buffer (copied). */
DPM_API dpm_status dpm_dataset_from_array(const double* values, size_t rows, size_t cols, dpm_data_kind kind,
                                          dpm_dataset** out);
/* Replaces a continuous dataset's values by (value >= threshold). */
DPM_API dpm_status dpm_dataset_binarize(dpm_dataset* ds, double threshold);
DPM_API dpm_status dpm_dataset_write_csv(const dpm_dataset* ds, const char* path);
DPM_API size_t dpm_dataset_rows(const dpm_dataset* ds);
DPM_API size_t dpm_dataset_cols(const dpm_dataset* ds);
DPM_API dpm_data_kind dpm_dataset_kind(const dpm_dataset* ds);
/* Returns 1 and fills rows/cols if the dataset carries an image shape. */
DPM_API int dpm_dataset_shape(const dpm_dataset* ds, size_t* rows, size_t* cols);
DPM_API void dpm_dataset_free(dpm_dataset* ds);

/* ---- training ---------------------------------------------------------- */

typedef struct dpm_train_options {
  uint32_t iterations;     /* default 10 */
  double c;                /* expertise factor, default 2 */
  double eps;              /* shrinkage pseudo-count; < 0 selects 0.01 * N */
  double dead_zone;        /* gradient dead zone; < 0 selects 1e-8 * N */
  uint64_t seed;           /* default 0 */
  double init_noise;       /* default 0.1 */
  uint32_t threads;        /* default 1 */
  uint32_t max_active;     /* activation budget while training, 0 = natural stop */
} dpm_train_options;

typedef struct dpm_iteration_report {
  uint32_t iteration;
  double mean_ll;
  double recon_error;
  double avg_active;
} dpm_iteration_report;

typedef void (*dpm_iteration_callback)(const dpm_iteration_report* report, void* user);

DPM_API void dpm_train_options_init(dpm_train_options* opts);
DPM_API dpm_status dpm_train(const dpm_dataset* ds, dpm_model_kind kind, uint32_t num_experts,
                             const dpm_train_options* opts, dpm_iteration_callback on_iteration, void* user,
                             dpm_bank** out);

/* ---- models ------------------------------------------------------------ */

DPM_API dpm_status dpm_bank_save(const dpm_bank* bank, const char* path);
DPM_API dpm_status dpm_bank_load(const char* path, dpm_bank** out);
DPM_API size_t dpm_bank_num_experts(const dpm_bank* bank);
DPM_API size_t dpm_bank_num_dims(const dpm_bank* bank);
DPM_API dpm_model_kind dpm_bank_kind(const dpm_bank* bank);
/* Copies K*D row-major values. `which`: 0 opinions, 1 variances, 2 expertise. */
DPM_API dpm_status dpm_bank_copy(const dpm_bank* bank, int which, double* dst, size_t len);
DPM_API void dpm_bank_free(dpm_bank* bank);
DPM_API dpm_status dpm_export_templates(const dpm_bank* bank, size_t rows, size_t cols, const char* out_dir);

/* ---- inference --------------------------------------------------------- */

typedef struct dpm_infer_options {
  uint32_t max_active;          /* 0 = natural stop; otherwise a fixed budget */
  double min_gain;              /* ignored when max_active > 0 */
  dpm_composition composition;  /* default DPM_HARD */
  uint32_t threads;
} dpm_infer_options;

typedef struct dpm_evaluation {
  double recon_error; /* Hamming rate (binary) or mean squared error (continuous) */
  double mean_ll;
  double avg_active;
} dpm_evaluation;

DPM_API void dpm_infer_options_init(dpm_infer_options* opts);
DPM_API dpm_status dpm_infer(const dpm_bank* bank, const dpm_dataset* ds, const dpm_infer_options* opts,
                             dpm_inference** out);
DPM_API size_t dpm_inference_count(const dpm_inference* inf);
/* Active experts of point i in activation order; returns the count. */
DPM_API size_t dpm_inference_experts(const dpm_inference* inf, size_t i, const uint32_t** experts);
DPM_API double dpm_inference_log_likelihood(const dpm_inference* inf, size_t i);
DPM_API void dpm_inference_free(dpm_inference* inf);

DPM_API dpm_status dpm_evaluate(const dpm_bank* bank, const dpm_dataset* ds, const dpm_infer_options* opts,
                                dpm_evaluation* out);

#ifdef __cplusplus
}
#endif

#endif /* DPM_DPM_H */
