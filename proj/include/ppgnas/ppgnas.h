/* SPDX-License-Identifier: Apache-2.0
 *
 * C interface to libppgnas. All objects are opaque handles released with the
 * matching *_free function. Every call returns a ppgnas_status; on failure
 * ppgnas_last_error() holds a message for the calling thread. Strings
 * returned through char ** are released with ppgnas_string_free.
 */
#ifndef PPGNAS_H
#define PPGNAS_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PPGNAS_API __declspec(dllexport)
#else
#define PPGNAS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
  PPGNAS_OK = 0,
  PPGNAS_E_INVALID_ARGUMENT = 1,
  PPGNAS_E_SHAPE = 2,
  PPGNAS_E_GEOMETRY = 3,
  PPGNAS_E_NUMERIC = 4,
  PPGNAS_E_IO = 5,
  PPGNAS_E_BUDGET = 6,
  PPGNAS_E_STATE = 7,
  PPGNAS_E_INTERNAL = 8
} ppgnas_status;

typedef struct ppgnas_config ppgnas_config;
typedef struct ppgnas_data ppgnas_data;
typedef struct ppgnas_model ppgnas_model;
typedef struct ppgnas_int_graph ppgnas_int_graph;

typedef struct {
  int has_sbp;
  int has_dbp;
  double mae_sbp; /* mmHg, valid when has_sbp */
  double mae_dbp; /* mmHg, valid when has_dbp */
  double primary; /* ranking error */
} ppgnas_eval;

typedef struct {
  double lambda;
  size_t params;
  size_t size_bytes;
  uint64_t macs;
  ppgnas_eval eval;
  uint64_t seed;
  int pareto;
} ppgnas_sweep_row;

typedef struct {
  size_t weight_bytes;
  size_t peak_activation_bytes;
  size_t overhead_bytes;
  size_t total_bytes;
  size_t budget_bytes;
  int fits;
} ppgnas_memory;

typedef struct {
  ppgnas_memory memory;
  uint64_t macs;
  int evaluated; /* 0 for a size-only export */
  ppgnas_eval float_eval;
  ppgnas_eval qat_eval;
  ppgnas_eval int_eval;
} ppgnas_deploy_info;

typedef void (*ppgnas_row_callback)(const ppgnas_sweep_row *row, void *user);

PPGNAS_API const char *ppgnas_version(void);
PPGNAS_API const char *ppgnas_last_error(void);
PPGNAS_API const char *ppgnas_status_name(ppgnas_status s);
PPGNAS_API void ppgnas_string_free(char *s);

/* Configuration (JSON document; unknown keys are rejected). */
PPGNAS_API ppgnas_status ppgnas_config_default(ppgnas_config **out);
PPGNAS_API ppgnas_status ppgnas_config_from_json(const char *json, ppgnas_config **out);
PPGNAS_API ppgnas_status ppgnas_config_to_json(const ppgnas_config *cfg, char **out);
PPGNAS_API void ppgnas_config_free(ppgnas_config *cfg);

/* Loads records, windows them and splits them as configured. */
PPGNAS_API ppgnas_status ppgnas_data_prepare(const ppgnas_config *cfg, ppgnas_data **out);
PPGNAS_API ppgnas_status ppgnas_data_info(const ppgnas_data *d, size_t *n_train, size_t *n_val, size_t *n_test,
                                          size_t *input_len);
/* Writes the first `max` test inputs ([n, input_len]); *n receives the count. */
PPGNAS_API ppgnas_status ppgnas_data_test_inputs(const ppgnas_data *d, float *out, size_t max, size_t *n);
PPGNAS_API void ppgnas_data_free(ppgnas_data *d);

/* Float models. */
PPGNAS_API ppgnas_status ppgnas_model_seed(const ppgnas_config *cfg, size_t input_len, uint64_t seed,
                                           ppgnas_model **out);
PPGNAS_API ppgnas_status ppgnas_model_train_seed(const ppgnas_config *cfg, const ppgnas_data *d, ppgnas_model **out,
                                                 ppgnas_eval *eval);
PPGNAS_API ppgnas_status ppgnas_model_info(const ppgnas_model *m, size_t *params, uint64_t *macs, size_t *input_len,
                                           size_t *output_size);
PPGNAS_API ppgnas_status ppgnas_model_evaluate(ppgnas_model *m, const ppgnas_data *d, ppgnas_eval *eval);
/* Raw outputs for n windows of input_len samples; out holds n * output_size. */
PPGNAS_API ppgnas_status ppgnas_model_predict(ppgnas_model *m, const float *x, size_t n, float *out);
/* cfg and d may be NULL; when both are given the checkpoint records them. */
PPGNAS_API ppgnas_status ppgnas_model_save(const ppgnas_model *m, const char *path, const ppgnas_config *cfg,
                                           const ppgnas_data *d);
PPGNAS_API ppgnas_status ppgnas_model_load(const char *path, ppgnas_model **out, char **meta_json);
PPGNAS_API void ppgnas_model_free(ppgnas_model *m);
PPGNAS_API ppgnas_status ppgnas_write_seed_report(const char *dir, const ppgnas_model *m, const ppgnas_eval *eval);

/* Lambda sweep into the config's out_dir (resumes from pareto.csv). */
PPGNAS_API ppgnas_status ppgnas_sweep(const ppgnas_config *cfg, const ppgnas_data *d, const ppgnas_model *seed,
                                      ppgnas_row_callback cb, void *user, size_t *n_rows);

/* QAT + integer export. d may be NULL for a size-only export. Returns
 * PPGNAS_E_BUDGET (with *out still set) when the graph exceeds the budget. */
PPGNAS_API ppgnas_status ppgnas_quantize(const ppgnas_config *cfg, const ppgnas_model *m, const ppgnas_data *d,
                                         ppgnas_int_graph **out, ppgnas_deploy_info *info);
PPGNAS_API ppgnas_status ppgnas_int_graph_info(const ppgnas_int_graph *g, size_t *input_size, size_t *output_size,
                                               ppgnas_memory *mem, size_t budget_bytes);
PPGNAS_API ppgnas_status ppgnas_int_graph_run(const ppgnas_int_graph *g, const int8_t *input, int8_t *output);
PPGNAS_API ppgnas_status ppgnas_int_graph_quantize_input(const ppgnas_int_graph *g, const float *x, int8_t *q);
PPGNAS_API ppgnas_status ppgnas_int_graph_dequantize_output(const ppgnas_int_graph *g, const int8_t *q, float *y);
PPGNAS_API ppgnas_status ppgnas_int_graph_evaluate(const ppgnas_int_graph *g, const ppgnas_data *d,
                                                   ppgnas_eval *eval);
PPGNAS_API ppgnas_status ppgnas_int_graph_save(const ppgnas_int_graph *g, const char *path);
PPGNAS_API ppgnas_status ppgnas_int_graph_load(const char *path, ppgnas_int_graph **out);
PPGNAS_API void ppgnas_int_graph_free(ppgnas_int_graph *g);

/* Writes ppg_net.c, ppg_net_weights.h and ppg_driver.c into dir. */
PPGNAS_API ppgnas_status ppgnas_emit_c(const ppgnas_int_graph *g, const char *dir);
/* Compiles the emitted C in dir with cc and compares it against the
 * interpreter on `windows` random inputs. */
PPGNAS_API ppgnas_status ppgnas_verify_c(const ppgnas_int_graph *g, size_t windows, uint64_t seed, const char *dir,
                                         const char *cc, int *compiled, size_t *mismatched_windows);

/* Reads dir/pareto.csv and writes summary.txt, scatter.csv, scatter.svg. */
PPGNAS_API ppgnas_status ppgnas_report(const char *dir, char **summary);
PPGNAS_API ppgnas_status ppgnas_write_manifest(const ppgnas_config *cfg, const char *command);

#ifdef __cplusplus
}
#endif

#endif /* PPGNAS_H */
