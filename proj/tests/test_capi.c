/* Exercises the C interface from plain C. */
#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "psss.h"

static int failures = 0;

#define EXPECT(cond)                                              \
  do {                                                            \
    if (!(cond)) {                                                \
      fprintf(stderr, "%s:%d: expected %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                 \
    }                                                             \
  } while (0)

static int log_count = 0;
static char last_log[512];

static void on_log(psss_log_level level, const char* message, void* user) {
  (void)level;
  ++*(int*)user;
  snprintf(last_log, sizeof last_log, "%s", message);
}

static void test_version_and_status(void) {
  EXPECT(strlen(psss_version()) > 0);
  EXPECT(strcmp(psss_status_name(PSSS_OK), "ok") == 0);
  EXPECT(strcmp(psss_status_name(PSSS_ERR_PARSE), "parse error") == 0);
}

static void test_config(void) {
  psss_config* cfg = NULL;
  char* js = NULL;
  EXPECT(psss_config_create(&cfg) == PSSS_OK);
  EXPECT(psss_config_set(cfg, "training.epochs", "3") == PSSS_OK);
  EXPECT(psss_config_to_json(cfg, &js) == PSSS_OK);
  EXPECT(js && strstr(js, "\"epochs\": 3") != NULL);
  psss_string_free(js);

  EXPECT(psss_config_set(cfg, "training.nonsense", "1") == PSSS_ERR_PARSE);
  EXPECT(strstr(psss_last_error(), "training.nonsense") != NULL);
  EXPECT(psss_config_load(cfg, "/nonexistent/config.json") == PSSS_ERR_IO);
  EXPECT(psss_config_create(NULL) == PSSS_ERR_INVALID_ARGUMENT);
  psss_config_destroy(cfg);
}

static void test_partial_loss(void) {
  /* One uncertain pixel with uniform logits: exclusion only, 3 ln 1.25. */
  double logits[4] = {0, 0, 0, 0};
  double grad[4];
  uint8_t partial = PSSS_UNKNOWN_LABEL, cls = 1;
  double conf = 0.99;
  psss_partial_loss out;
  EXPECT(psss_partial_loss_eval(logits, 1, 1, &partial, &cls, &conf, 0.95, &out, grad) == PSSS_OK);
  EXPECT(fabs(out.exclusion - 3.0 * log(1.25)) < 1e-12);
  EXPECT(fabs(out.total - out.exclusion) < 1e-15);
  EXPECT(out.n_s1 == 0 && out.n_s2 == 0 && out.n_s3 == 1);
  EXPECT(grad[3] < 0.0); /* raising the V3 logit lowers the loss */

  /* Labeled pixel with p = 0.5 on its class: ln 2. */
  double half[4] = {log(0.5), log(0.5 / 3), log(0.5 / 3), log(0.5 / 3)};
  partial = 0;
  EXPECT(psss_partial_loss_eval(half, 1, 1, &partial, &cls, &conf, 0.95, &out, NULL) == PSSS_ERR_VALIDATION);
  double half1[4] = {log(0.5 / 3), log(0.5), log(0.5 / 3), log(0.5 / 3)};
  partial = 1;
  EXPECT(psss_partial_loss_eval(half1, 1, 1, &partial, &cls, &conf, 0.95, &out, NULL) == PSSS_OK);
  EXPECT(fabs(out.supervised - log(2.0)) < 1e-12);
  EXPECT(psss_partial_loss_eval(half1, 1, 1, &partial, &cls, &conf, 1.0, &out, NULL) == PSSS_ERR_INVALID_ARGUMENT);
}

static void test_commands(const char* root) {
  psss_config* cfg = NULL;
  char* path = NULL;
  psss_prepare_summary prep;
  psss_eval_summary ev;
  char* table = NULL;

  psss_set_log_callback(on_log, &log_count, PSSS_LOG_INFO);
  EXPECT(psss_config_create(&cfg) == PSSS_OK);
  EXPECT(psss_config_set(cfg, "experiment_root", root) == PSSS_OK);
  EXPECT(psss_config_set(cfg, "synth.counts", "{\"full\":1,\"partial\":0,\"unlabeled\":0}") == PSSS_OK);
  EXPECT(psss_config_set(cfg, "synth.val", "0") == PSSS_OK);
  EXPECT(psss_config_set(cfg, "synth.test", "1") == PSSS_OK);
  EXPECT(psss_config_set(cfg, "synth.leaf.canvas", "{\"height\":64,\"width\":96}") == PSSS_OK);
  EXPECT(psss_synth(cfg, &path) == PSSS_OK);
  EXPECT(path && strstr(path, "manifest.txt") != NULL);
  psss_string_free(path);
  EXPECT(log_count > 0);

  EXPECT(psss_config_set(cfg, "tiling.patch", "32") == PSSS_OK);
  EXPECT(psss_prepare(cfg, &prep) == PSSS_OK);
  EXPECT(prep.kept + prep.dropped == 6);

  EXPECT(psss_config_set(cfg, "eval.model", "oracle") == PSSS_OK);
  EXPECT(psss_eval(cfg, &ev, NULL, &table) == PSSS_OK);
  EXPECT(ev.images == 1);
  EXPECT(ev.miou == 1.0);
  EXPECT(table && strstr(table, "mIoU") != NULL);
  psss_string_free(table);

  EXPECT(psss_config_set(cfg, "eval.model", "checkpoint") == PSSS_OK);
  EXPECT(psss_eval(cfg, &ev, NULL, NULL) == PSSS_ERR_IO);
  EXPECT(strstr(psss_last_error(), "best.pt") != NULL);

  psss_model* model = NULL;
  EXPECT(psss_model_load("/nonexistent.pt", &model) == PSSS_ERR_IO);
  EXPECT(model == NULL);

  psss_set_log_callback(NULL, NULL, PSSS_LOG_WARNING);
  psss_config_destroy(cfg);
}

int main(int argc, char** argv) {
  if (argc < 2) {
    fprintf(stderr, "usage: %s <scratch-dir>\n", argv[0]);
    return 2;
  }
  test_version_and_status();
  test_config();
  test_partial_loss();
  test_commands(argv[1]);
  if (failures) fprintf(stderr, "%d expectation(s) failed\n", failures);
  else printf("all C API checks passed\n");
  return failures ? 1 : 0;
}
