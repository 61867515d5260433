/* SPDX-License-Identifier: Apache-2.0 */
/* Exercises the shared library through its C header only. */
#include <math.h>
#include <stdint.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "ppgnas/ppgnas.h"

static int failures = 0;

#define EXPECT(cond)                                                   \
  do {                                                                 \
    if (!(cond)) {                                                     \
      fprintf(stderr, "%s:%d: EXPECT(%s) failed; last error: %s\n",    \
              __FILE__, __LINE__, #cond, ppgnas_last_error());         \
      ++failures;                                                      \
    }                                                                  \
  } while (0)

static const char *kTiny =
    "{\"dataset\": \"synthetic:4\", \"synth_subjects\": 8, \"synth_seconds\": 10,"
    " \"window_seconds\": 1, \"profile\": \"resnet\", \"target\": \"dbp\","
    " \"resnet\": {\"base_channels\": 4, \"stages\": 2, \"blocks\": 1, \"kernel\": 5, \"stem_kernel\": 5},"
    " \"train\": {\"epochs\": 1, \"batch_size\": 32, \"lr\": 0.001},"
    " \"qat_epochs\": 1, \"calibration_windows\": 8, \"seed\": 2}";

static void test_errors(void) {
  ppgnas_config *cfg = NULL;
  EXPECT(ppgnas_config_from_json("{\"nope\": 1}", &cfg) == PPGNAS_E_INVALID_ARGUMENT);
  EXPECT(cfg == NULL);
  EXPECT(strlen(ppgnas_last_error()) > 0);
  EXPECT(ppgnas_config_from_json(NULL, &cfg) == PPGNAS_E_INVALID_ARGUMENT);
  EXPECT(ppgnas_config_default(NULL) == PPGNAS_E_INVALID_ARGUMENT);
  EXPECT(ppgnas_model_load("/nonexistent/x.ckpt", NULL, NULL) != PPGNAS_OK);
  EXPECT(strcmp(ppgnas_status_name(PPGNAS_OK), ppgnas_status_name(PPGNAS_E_BUDGET)) != 0);
  EXPECT(strlen(ppgnas_version()) > 0);
  ppgnas_config_free(NULL);
  ppgnas_data_free(NULL);
  ppgnas_model_free(NULL);
  ppgnas_int_graph_free(NULL);
  ppgnas_string_free(NULL);

  EXPECT(ppgnas_config_from_json("{\"profile\": \"resnet\", \"target\": \"sig2sig\"}", &cfg) == PPGNAS_OK);
  ppgnas_data *d = NULL;
  EXPECT(ppgnas_data_prepare(cfg, &d) == PPGNAS_E_INVALID_ARGUMENT);
  EXPECT(d == NULL);
  ppgnas_config_free(cfg);
}

static void test_budget(void) {
  ppgnas_config *cfg = NULL;
  ppgnas_model *m = NULL;
  ppgnas_int_graph *g = NULL;
  ppgnas_deploy_info info;
  EXPECT(ppgnas_config_default(&cfg) == PPGNAS_OK);
  EXPECT(ppgnas_model_seed(cfg, 625, 0, &m) == PPGNAS_OK);
  size_t params = 0, in_len = 0, out_size = 0;
  uint64_t macs = 0;
  EXPECT(ppgnas_model_info(m, &params, &macs, &in_len, &out_size) == PPGNAS_OK);
  EXPECT(params > 752000 && params < 832000);
  EXPECT(ppgnas_quantize(cfg, m, NULL, &g, &info) == PPGNAS_E_BUDGET);
  EXPECT(g != NULL);
  EXPECT(!info.memory.fits);
  EXPECT(strstr(ppgnas_last_error(), "o.o.m.") != NULL);
  ppgnas_int_graph_free(g);
  ppgnas_model_free(m);
  ppgnas_config_free(cfg);
}

static void test_flow(void) {
  ppgnas_config *cfg = NULL;
  ppgnas_data *d = NULL;
  ppgnas_model *m = NULL, *back = NULL;
  ppgnas_int_graph *g = NULL, *g2 = NULL;
  ppgnas_eval e1, e2, e3;
  ppgnas_deploy_info info;
  char *meta = NULL;
  const char *ckpt = "ppgnas_c_api_test.ckpt";
  const char *intp = "ppgnas_c_api_test.int";

  EXPECT(ppgnas_config_from_json(kTiny, &cfg) == PPGNAS_OK);
  EXPECT(ppgnas_data_prepare(cfg, &d) == PPGNAS_OK);
  size_t ntr = 0, nva = 0, nte = 0, len = 0;
  EXPECT(ppgnas_data_info(d, &ntr, &nva, &nte, &len) == PPGNAS_OK);
  EXPECT(len == 125);
  EXPECT(nte > 0);

  EXPECT(ppgnas_model_train_seed(cfg, d, &m, &e1) == PPGNAS_OK);
  EXPECT(e1.has_dbp && !e1.has_sbp);
  EXPECT(ppgnas_model_evaluate(m, d, &e2) == PPGNAS_OK);
  EXPECT(fabs(e1.mae_dbp - e2.mae_dbp) < 1e-6);

  EXPECT(ppgnas_model_save(m, ckpt, cfg, d) == PPGNAS_OK);
  EXPECT(ppgnas_model_load(ckpt, &back, &meta) == PPGNAS_OK);
  EXPECT(meta != NULL && strstr(meta, "dbp") != NULL);
  ppgnas_string_free(meta);

  float *x = malloc(sizeof(float) * 2 * len);
  float y1[2], y2[2];
  size_t n = 0;
  EXPECT(ppgnas_data_test_inputs(d, x, 2, &n) == PPGNAS_OK);
  EXPECT(n == 2);
  EXPECT(ppgnas_model_predict(m, x, 2, y1) == PPGNAS_OK);
  EXPECT(ppgnas_model_predict(back, x, 2, y2) == PPGNAS_OK);
  EXPECT(y1[0] == y2[0] && y1[1] == y2[1]);

  EXPECT(ppgnas_quantize(cfg, m, d, &g, &info) == PPGNAS_OK);
  EXPECT(info.memory.fits && info.evaluated);
  EXPECT(ppgnas_int_graph_evaluate(g, d, &e3) == PPGNAS_OK);
  EXPECT(fabs(e3.mae_dbp - info.int_eval.mae_dbp) < 1e-9);

  size_t in_size = 0, out_size = 0;
  ppgnas_memory mem;
  EXPECT(ppgnas_int_graph_info(g, &in_size, &out_size, &mem, 524288) == PPGNAS_OK);
  EXPECT(in_size == len && out_size == 1);
  EXPECT(mem.total_bytes == info.memory.total_bytes);

  int8_t *q = malloc(in_size);
  int8_t o1[1], o2[1];
  EXPECT(ppgnas_int_graph_quantize_input(g, x, q) == PPGNAS_OK);
  EXPECT(ppgnas_int_graph_run(g, q, o1) == PPGNAS_OK);
  EXPECT(ppgnas_int_graph_save(g, intp) == PPGNAS_OK);
  EXPECT(ppgnas_int_graph_load(intp, &g2) == PPGNAS_OK);
  EXPECT(ppgnas_int_graph_run(g2, q, o2) == PPGNAS_OK);
  EXPECT(o1[0] == o2[0]);
  float deq = 0;
  EXPECT(ppgnas_int_graph_dequantize_output(g, o1, &deq) == PPGNAS_OK);
  EXPECT(isfinite(deq));

  int compiled = 0;
  size_t mismatched = 99;
  EXPECT(ppgnas_verify_c(g, 4, 1, "ppgnas_c_api_test_c", "cc", &compiled, &mismatched) == PPGNAS_OK);
  EXPECT(compiled == 1 && mismatched == 0);

  free(q);
  free(x);
  remove(ckpt);
  remove(intp);
  ppgnas_int_graph_free(g);
  ppgnas_int_graph_free(g2);
  ppgnas_model_free(m);
  ppgnas_model_free(back);
  ppgnas_data_free(d);
  ppgnas_config_free(cfg);
}

int main(void) {
  test_errors();
  test_budget();
  test_flow();
  if (failures) {
    fprintf(stderr, "%d failure(s)\n", failures);
    return 1;
  }
  printf("c api: all checks passed\n");
  return 0;
}
