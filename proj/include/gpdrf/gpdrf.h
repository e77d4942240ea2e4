#ifndef GPDRF_GPDRF_H
#define GPDRF_GPDRF_H

/* C interface to the GP-DRF library: load a run configuration, train a
 * model, evaluate a checkpoint, write an uncertainty report, run the
 * self-test battery. Every entry point returns a status code; the message
 * for the most recent failure on the calling thread is available from
 * gpdrf_last_error(). All heavy lifting happens behind opaque handles, so
 * the header stays plain C. */

#include <stddef.h>
#include <stdint.h>

#ifndef GPDRF_API
#if defined(_WIN32)
#define GPDRF_API __declspec(dllexport)
#else
#define GPDRF_API __attribute__((visibility("default")))
#endif
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* One code per library error category; 0 is success. */
typedef enum gpdrf_status {
  GPDRF_OK = 0,
  GPDRF_INVALID_ARGUMENT = 1,
  GPDRF_CONFIG_ERROR = 2,
  GPDRF_PARSE_ERROR = 3,
  GPDRF_IO_ERROR = 4,
  GPDRF_SHAPE_ERROR = 5,
  GPDRF_NOT_POSITIVE_DEFINITE = 6,
  GPDRF_DIVERGED = 7,
  GPDRF_TASK_MISMATCH = 8,
  GPDRF_CHECKPOINT_ERROR = 9,
  GPDRF_CHECK_FAILED = 10,
  GPDRF_INTERNAL_ERROR = 11
} gpdrf_status;

GPDRF_API const char* gpdrf_version(void);

/* Message from the most recent failing call on this thread; never NULL. */
GPDRF_API const char* gpdrf_last_error(void);

/* A parsed run configuration. */
typedef struct gpdrf_config gpdrf_config;

GPDRF_API gpdrf_status gpdrf_config_load(const char* path, gpdrf_config** out);
GPDRF_API gpdrf_status gpdrf_config_default(gpdrf_config** out);
GPDRF_API void gpdrf_config_free(gpdrf_config* cfg);

/* Command-line style overrides applied on top of the file. The model preset
 * is one of "gpdrf", "gp" (drops the stack) or "drf" (drops the GP layer). */
GPDRF_API gpdrf_status gpdrf_config_set_model(gpdrf_config* cfg,
                                              const char* model);
GPDRF_API gpdrf_status gpdrf_config_set_seed(gpdrf_config* cfg, uint64_t seed);
GPDRF_API gpdrf_status gpdrf_config_set_samples(gpdrf_config* cfg, int s);
GPDRF_API gpdrf_status gpdrf_config_set_draws(gpdrf_config* cfg, int t);
GPDRF_API gpdrf_status gpdrf_config_set_data(gpdrf_config* cfg,
                                             const char* train_path);
GPDRF_API gpdrf_status gpdrf_config_set_out_dir(gpdrf_config* cfg,
                                                const char* dir);

typedef struct gpdrf_train_result {
  double final_elbo; /* last epoch mean; NaN when epochs == 0 */
  char checkpoint_path[1024];
  char trace_path[1024];
  char config_path[1024];
} gpdrf_train_result;

/* Trains per the config and writes model.ckpt, trace.txt and run.cfg into
 * its out_dir. */
GPDRF_API gpdrf_status gpdrf_train(const gpdrf_config* cfg,
                                   gpdrf_train_result* out);

typedef struct gpdrf_evaluate_result {
  double value;
  char metric[32]; /* "error_rate" or "rmse" */
  char metrics_path[1024];
} gpdrf_evaluate_result;

GPDRF_API gpdrf_status gpdrf_evaluate(const char* checkpoint_path,
                                      const char* data_path, int samples,
                                      int draws, uint64_t seed,
                                      const char* out_dir,
                                      gpdrf_evaluate_result* out);

typedef struct gpdrf_uncertainty_result {
  double error_rate;
  double d_correct;        /* NaN when no point was correct */
  double d_misclassified;  /* NaN when no point was misclassified */
  char report_path[1024];
} gpdrf_uncertainty_result;

GPDRF_API gpdrf_status gpdrf_uncertainty(const char* checkpoint_path,
                                         const char* data_path, int samples,
                                         int draws, uint64_t seed,
                                         const char* out_dir,
                                         gpdrf_uncertainty_result* out);

/* Runs the self-test battery (plus checkpoint restoration when a path is
 * given) and writes its pass/FAIL lines into text. Returns GPDRF_OK when
 * everything passed and GPDRF_CHECK_FAILED when some line failed; other
 * codes mean the battery could not run at all. */
GPDRF_API gpdrf_status gpdrf_check(const gpdrf_config* cfg,
                                   const char* checkpoint_path_or_null,
                                   char* text, size_t text_capacity);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* GPDRF_GPDRF_H */
