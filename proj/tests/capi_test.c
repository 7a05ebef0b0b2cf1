/* Exercises the C interface from plain C. argv[1] is a scratch directory. */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <sys/stat.h>

#include "mgd/mgd.h"

static int failures = 0;

#define EXPECT(cond)                                                        \
  do {                                                                      \
    if (!(cond)) {                                                          \
      fprintf(stderr, "%s:%d: expected %s (last error: %s)\n", __FILE__,    \
              __LINE__, #cond, mgd_last_error());                           \
      ++failures;                                                           \
    }                                                                       \
  } while (0)

static int log_count = 0;
static void count_log(const char* msg, void* user) {
  (void)msg;
  ++*(int*)user;
}

static void join(char* out, size_t cap, const char* dir, const char* name) {
  int n = snprintf(out, cap, "%s/%s", dir, name);
  if (n < 0 || (size_t)n >= cap) {
    fprintf(stderr, "path too long: %s/%s\n", dir, name);
    exit(2);
  }
}

int main(int argc, char** argv) {
  if (argc < 2) {
    fprintf(stderr, "usage: %s WORKDIR\n", argv[0]);
    return 2;
  }
  const char* work = argv[1];
  mkdir(work, 0755);
  char corpus[1024], manifest[1024], out[1024], log_path[1024], path[1024];
  join(corpus, sizeof corpus, work, "corpus");
  join(manifest, sizeof manifest, corpus, "manifest.csv");
  join(out, sizeof out, work, "out");
  join(log_path, sizeof log_path, work, "responses.csv");
  remove(log_path);

  EXPECT(strlen(mgd_version()) > 0);

  mgd_config* cfg = NULL;
  EXPECT(mgd_config_new(&cfg) == MGD_OK);
  EXPECT(mgd_config_set(cfg, "knn", "five") == MGD_ERR_INVALID_ARGUMENT);
  EXPECT(strstr(mgd_last_error(), "knn") != NULL);
  EXPECT(mgd_config_set(cfg, "no_such_key", "1") == MGD_ERR_INVALID_ARGUMENT);
  EXPECT(mgd_config_set(NULL, "knn", "1") == MGD_ERR_INVALID_ARGUMENT);
  EXPECT(mgd_config_apply_line(cfg, "# comment only") == MGD_OK);

  char* value = NULL;
  EXPECT(mgd_config_get(cfg, "nprobe", &value) == MGD_OK);
  EXPECT(value && strcmp(value, "32") == 0);
  mgd_string_free(value);

  EXPECT(mgd_synth_genre_corpus(corpus, 3, 6, 5) == MGD_OK);

  const char* settings[] = {"coarse_k=32", "train_sample=10000", "opq_iterations=3", "coarse_iterations=8",
                            "query_fraction=1", "K=3", "kmeans_restarts=2", "tasks_per_cluster=6",
                            "control_tasks=5"};
  for (size_t i = 0; i < sizeof settings / sizeof settings[0]; ++i)
    EXPECT(mgd_config_apply_line(cfg, settings[i]) == MGD_OK);
  EXPECT(mgd_config_set(cfg, "manifest", manifest) == MGD_OK);
  EXPECT(mgd_config_set(cfg, "out_dir", out) == MGD_OK);

  char* text = NULL;
  EXPECT(mgd_config_text(cfg, &text) == MGD_OK);
  EXPECT(text && strstr(text, "coarse_k=32\n") != NULL);
  mgd_string_free(text);

  mgd_pipeline* p = NULL;
  EXPECT(mgd_pipeline_new(cfg, count_log, &log_count, &p) == MGD_OK);
  mgd_config_free(cfg);
  EXPECT(mgd_pipeline_run_all(p, 0) == MGD_OK);
  EXPECT(log_count > 0);
  join(path, sizeof path, out, "assignment.csv");
  FILE* f = fopen(path, "r");
  EXPECT(f != NULL);
  if (f) fclose(f);

  EXPECT(mgd_pipeline_run_stage(p, (mgd_stage)42, 0) == MGD_ERR_INVALID_ARGUMENT);
  EXPECT(mgd_pipeline_eval_generate(p, "phash", NULL) != MGD_OK);

  size_t tasks = 0;
  EXPECT(mgd_pipeline_eval_generate(p, NULL, &tasks) == MGD_OK);
  EXPECT(tasks > 5);
  int ks[] = {1, 2, 400};
  EXPECT(mgd_pipeline_ksweep(p, ks, 3, "") == MGD_OK);

  mgd_server* server = NULL;
  EXPECT(mgd_server_new(p, NULL, "127.0.0.1", 0, NULL, log_path, &server) == MGD_OK);
  int port = 0;
  EXPECT(mgd_server_start(server, &port) == MGD_OK);
  EXPECT(port > 0);
  EXPECT(mgd_server_stop(server) == MGD_OK);
  mgd_server_free(server);

  f = fopen(log_path, "w");
  if (f) {
    fputs("annotator_id,task_id,chosen_position,timestamp\n", f);
    fclose(f);
  }
  char* report = NULL;
  EXPECT(mgd_pipeline_eval_score(p, log_path, NULL, &report) == MGD_OK);
  EXPECT(report && strstr(report, "\"defined\": false") != NULL);
  mgd_string_free(report);

  mgd_pipeline_free(p);

  mgd_config* bad = NULL;
  EXPECT(mgd_config_new(&bad) == MGD_OK);
  join(path, sizeof path, work, "missing.csv");
  EXPECT(mgd_config_set(bad, "manifest", path) == MGD_OK);
  join(path, sizeof path, work, "bad_out");
  EXPECT(mgd_config_set(bad, "out_dir", path) == MGD_OK);
  mgd_pipeline* q = NULL;
  EXPECT(mgd_pipeline_new(bad, NULL, NULL, &q) == MGD_OK);
  EXPECT(mgd_pipeline_run_stage(q, MGD_STAGE_INGEST, 0) == MGD_ERR_IO);
  EXPECT(strstr(mgd_last_error(), "ingest") != NULL);
  mgd_pipeline_free(q);
  mgd_config_free(bad);

  EXPECT(mgd_config_load("/nonexistent/config.txt", &bad) == MGD_ERR_IO);

  if (failures) {
    fprintf(stderr, "%d failure(s)\n", failures);
    return 1;
  }
  printf("capi: ok\n");
  return 0;
}
