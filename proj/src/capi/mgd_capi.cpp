#include "mgd/mgd.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <memory>
#include <new>
#include <string>

#include "mgd/config.hpp"
#include "mgd/corpus.hpp"
#include "mgd/error.hpp"
#include "mgd/eval_server.hpp"
#include "mgd/pipeline.hpp"
#include "mgd/synth.hpp"

struct mgd_config {
  mgd::RunConfig value;
};

struct mgd_pipeline {
  std::unique_ptr<mgd::Pipeline> value;
};

struct mgd_server {
  std::unique_ptr<mgd::EvalServer> value;
};

namespace {

thread_local std::string last_error;

mgd_status to_status(mgd::ErrorCode c) { return static_cast<mgd_status>(static_cast<int>(c)); }

template <typename F>
mgd_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return MGD_OK;
  } catch (const mgd::Error& e) {
    last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return MGD_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return MGD_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void need(const void* p, const char* what) {
  mgd::require(p != nullptr, mgd::ErrorCode::kInvalidArgument, std::string(what) + " must not be NULL");
}

std::string opt(const char* s) { return s ? s : ""; }

}  // namespace

extern "C" {

const char* mgd_last_error(void) { return last_error.c_str(); }

const char* mgd_version(void) {
  static const std::string v = mgd::version_summary();
  return v.c_str();
}

void mgd_string_free(char* s) { std::free(s); }

mgd_status mgd_config_new(mgd_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new mgd_config{};
  });
}

mgd_status mgd_config_load(const char* path, mgd_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    auto cfg = std::make_unique<mgd_config>();
    cfg->value = mgd::load_config(path);
    *out = cfg.release();
  });
}

mgd_status mgd_config_set(mgd_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    need(cfg, "cfg");
    need(key, "key");
    need(value, "value");
    mgd::apply_setting(cfg->value, key, value);
  });
}

mgd_status mgd_config_apply_line(mgd_config* cfg, const char* line) {
  return guarded([&] {
    need(cfg, "cfg");
    need(line, "line");
    mgd::apply_line(cfg->value, line);
  });
}

mgd_status mgd_config_get(const mgd_config* cfg, const char* key, char** value) {
  return guarded([&] {
    need(cfg, "cfg");
    need(key, "key");
    need(value, "value");
    *value = dup_string(mgd::config_value(cfg->value, key));
  });
}

mgd_status mgd_config_text(const mgd_config* cfg, char** text) {
  return guarded([&] {
    need(cfg, "cfg");
    need(text, "text");
    *text = dup_string(cfg->value.to_text());
  });
}

void mgd_config_free(mgd_config* cfg) { delete cfg; }

mgd_status mgd_synth_genre_corpus(const char* dir, int genres, int per_genre, uint64_t seed) {
  return guarded([&] {
    need(dir, "dir");
    mgd::require(genres >= 1 && per_genre >= 1, mgd::ErrorCode::kInvalidArgument,
                 "genres and per_genre must be positive");
    mgd::synth::GenreCorpusParams p;
    p.genres = genres;
    p.per_genre = per_genre;
    p.seed = seed;
    mgd::synth::generate_genre_corpus(dir, p);
  });
}

mgd_status mgd_pipeline_new(const mgd_config* cfg, mgd_log_fn log, void* user, mgd_pipeline** out) {
  return guarded([&] {
    need(cfg, "cfg");
    need(out, "out");
    mgd::Pipeline::Log sink;
    if (log) sink = [log, user](const std::string& m) { log(m.c_str(), user); };
    auto p = std::make_unique<mgd_pipeline>();
    p->value = std::make_unique<mgd::Pipeline>(cfg->value, std::move(sink));
    *out = p.release();
  });
}

mgd_status mgd_pipeline_run_stage(mgd_pipeline* p, mgd_stage stage, int force) {
  return guarded([&] {
    need(p, "pipeline");
    mgd::require(stage >= MGD_STAGE_INGEST && stage <= MGD_STAGE_REPORT, mgd::ErrorCode::kInvalidArgument,
                 "unknown stage");
    p->value->run_stage(static_cast<mgd::Stage>(stage), force != 0);
  });
}

mgd_status mgd_pipeline_run_all(mgd_pipeline* p, int force) {
  return guarded([&] {
    need(p, "pipeline");
    p->value->run_all(force != 0);
  });
}

mgd_status mgd_pipeline_eval_generate(mgd_pipeline* p, const char* baseline, size_t* task_count) {
  return guarded([&] {
    need(p, "pipeline");
    auto tasks = p->value->eval_generate(opt(baseline));
    if (task_count) *task_count = tasks.tasks.size();
  });
}

mgd_status mgd_pipeline_eval_score(mgd_pipeline* p, const char* responses_path, const char* baseline,
                                   char** report_json) {
  return guarded([&] {
    need(p, "pipeline");
    need(responses_path, "responses_path");
    auto rep = p->value->eval_score(responses_path, opt(baseline));
    if (report_json) *report_json = dup_string(mgd::report_json(rep));
  });
}

mgd_status mgd_pipeline_ksweep(mgd_pipeline* p, const int* ks, size_t count, const char* baseline) {
  return guarded([&] {
    need(p, "pipeline");
    mgd::require(count == 0 || ks != nullptr, mgd::ErrorCode::kInvalidArgument, "ks must not be NULL");
    p->value->k_sweep(std::vector<int>(ks, ks + count), opt(baseline));
  });
}

void mgd_pipeline_free(mgd_pipeline* p) { delete p; }

mgd_status mgd_server_new(const mgd_pipeline* p, const char* baseline, const char* host, int port,
                          const char* ui_dir, const char* response_log, mgd_server** out) {
  return guarded([&] {
    need(p, "pipeline");
    need(out, "out");
    const mgd::Pipeline& pl = *p->value;
    std::string b = opt(baseline);
    std::string sfx = b.empty() ? "" : "_" + b;
    mgd::EvalServerConfig sc;
    if (host && *host) sc.host = host;
    sc.port = port;
    sc.ui_dir = opt(ui_dir);
    sc.response_log = response_log && *response_log ? std::filesystem::path(response_log)
                                                    : pl.path("responses" + sfx + ".csv");
    sc.seed = pl.config().seed;
    auto snap = mgd::load_snapshot(pl.path("corpus.snapshot"));
    auto tasks = mgd::load_tasks(pl.path("tasks" + sfx + ".json"));
    auto asg = mgd::load_assignment(pl.path(pl.assignment_name(b)), pl.config().K);
    auto s = std::make_unique<mgd_server>();
    s->value = std::make_unique<mgd::EvalServer>(std::move(snap), std::move(tasks), std::move(asg), sc);
    *out = s.release();
  });
}

mgd_status mgd_server_start(mgd_server* s, int* bound_port) {
  return guarded([&] {
    need(s, "server");
    int port = s->value->start();
    if (bound_port) *bound_port = port;
  });
}

mgd_status mgd_server_wait(mgd_server* s) {
  return guarded([&] {
    need(s, "server");
    s->value->wait();
  });
}

mgd_status mgd_server_stop(mgd_server* s) {
  return guarded([&] {
    need(s, "server");
    s->value->stop();
  });
}

void mgd_server_free(mgd_server* s) { delete s; }

}  // extern "C"
