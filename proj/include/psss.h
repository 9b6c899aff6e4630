/* C interface of the psss toolkit. All functions are safe to call from C; strings
 * returned through char** are owned by the caller and released with psss_string_free.
 * On failure a function returns a non-zero psss_status and psss_last_error() describes
 * it (per thread, valid until the next failing call on that thread). */
#ifndef PSSS_H
#define PSSS_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define PSSS_API __declspec(dllexport)
#else
#define PSSS_API __attribute__((visibility("default")))
#endif

#define PSSS_NUM_CLASSES 4
#define PSSS_UNKNOWN_LABEL 255

typedef enum psss_status {
  PSSS_OK = 0,
  PSSS_ERR_INVALID_ARGUMENT = 1,
  PSSS_ERR_IO = 2,
  PSSS_ERR_PARSE = 3,
  PSSS_ERR_VALIDATION = 4,
  PSSS_ERR_SHAPE = 5,
  PSSS_ERR_NUMERIC = 6,
  PSSS_ERR_INTERNAL = 7
} psss_status;

typedef enum psss_log_level {
  PSSS_LOG_DEBUG = 0,
  PSSS_LOG_INFO = 1,
  PSSS_LOG_WARNING = 2,
  PSSS_LOG_ERROR = 3
} psss_log_level;

typedef struct psss_config psss_config;
typedef struct psss_model psss_model;

typedef void (*psss_log_fn)(psss_log_level level, const char* message, void* user);

PSSS_API const char* psss_version(void);
PSSS_API const char* psss_status_name(psss_status status);
PSSS_API const char* psss_last_error(void);
PSSS_API void psss_string_free(char* s);

/* Messages at or above min_level go to fn; a null fn restores the default (stderr). */
PSSS_API void psss_set_log_callback(psss_log_fn fn, void* user, psss_log_level min_level);

/* ---- configuration ---------------------------------------------------------------- */

/* Defaults, with experiment_root taken from PSSS_EXPERIMENT_ROOT when set. */
PSSS_API psss_status psss_config_create(psss_config** out);
PSSS_API void psss_config_destroy(psss_config* cfg);
/* Overlays a JSON config file. Unknown keys are rejected. */
PSSS_API psss_status psss_config_load(psss_config* cfg, const char* path);
/* Sets one dotted key, e.g. ("training.epochs", "30"); bare words are taken as strings. */
PSSS_API psss_status psss_config_set(psss_config* cfg, const char* key, const char* value);
PSSS_API psss_status psss_config_to_json(const psss_config* cfg, char** out);

/* ---- commands --------------------------------------------------------------------- */

typedef struct psss_prepare_summary {
  size_t kept;
  size_t dropped;
  size_t warnings;
} psss_prepare_summary;

typedef struct psss_train_summary {
  int best_epoch;
  double best_miou; /* -1 when no val split was evaluated */
  long steps;
} psss_train_summary;

typedef struct psss_eval_summary {
  double iou[PSSS_NUM_CLASSES];
  int present[PSSS_NUM_CLASSES]; /* 0 when the class is absent from both maps */
  double miou;
  double miou_veins;
  size_t images;
} psss_eval_summary;

PSSS_API psss_status psss_synth(const psss_config* cfg, char** manifest_path);
PSSS_API psss_status psss_splits(const psss_config* cfg, char** manifest_path);
PSSS_API psss_status psss_prepare(const psss_config* cfg, psss_prepare_summary* out);
PSSS_API psss_status psss_train(const psss_config* cfg, psss_train_summary* out);
/* report_json and table may be null. */
PSSS_API psss_status psss_eval(const psss_config* cfg, psss_eval_summary* out, char** report_json, char** table);

/* ---- models ----------------------------------------------------------------------- */

PSSS_API psss_status psss_model_load(const char* checkpoint, psss_model** out);
PSSS_API void psss_model_destroy(psss_model* model);
/* Segments an interleaved 8-bit RGB image of any size by tiling and stitching;
 * labels receives height * width class ids. */
PSSS_API psss_status psss_model_predict(psss_model* model, const uint8_t* rgb, int height, int width, int patch,
                                        uint8_t* labels);

/* ---- partial-supervision loss ----------------------------------------------------- */

typedef struct psss_partial_loss {
  double total; /* unweighted sum of the three components */
  double supervised;
  double pseudo;
  double exclusion;
  size_t n_s1;
  size_t n_s2;
  size_t n_s3;
} psss_partial_loss;

/* Evaluates the partial losses of one patch. logits are channel-major (4, H, W);
 * partial holds {1, 2, 255}; pseudo_cls/pseudo_conf come from the weak view.
 * grad (optional, 4 * H * W values) receives d total / d logits. */
PSSS_API psss_status psss_partial_loss_eval(const double* logits, int height, int width, const uint8_t* partial,
                                            const uint8_t* pseudo_cls, const double* pseudo_conf, double tau,
                                            psss_partial_loss* out, double* grad);

#ifdef __cplusplus
}
#endif

#endif /* PSSS_H */
