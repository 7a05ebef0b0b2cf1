#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "mgd/mgd.h"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitStage = 2;

std::atomic<bool> interrupted{false};

void on_signal(int) { interrupted = true; }

void log_line(const char* msg, void* user) {
  if (!*static_cast<bool*>(user)) std::fprintf(stderr, "%s\n", msg);
}

struct Options {
  std::string config;
  std::vector<std::string> sets;
  std::string out_dir;
  bool force = false;
  bool quiet = false;
};

struct UsageError {
  std::string message;
};

struct StageFailure {
  std::string message;
};

void check_usage(mgd_status s) {
  if (s != MGD_OK) throw UsageError{mgd_last_error()};
}

void check_stage(mgd_status s) {
  if (s != MGD_OK) throw StageFailure{mgd_last_error()};
}

class Config {
 public:
  explicit Config(const Options& o) {
    check_usage(o.config.empty() ? mgd_config_new(&cfg_) : mgd_config_load(o.config.c_str(), &cfg_));
    for (const auto& kv : o.sets) {
      if (kv.find('=') == std::string::npos) throw UsageError{"--set expects key=value, got '" + kv + "'"};
      check_usage(mgd_config_apply_line(cfg_, kv.c_str()));
    }
    if (!o.out_dir.empty()) set("out_dir", o.out_dir);
  }
  ~Config() { mgd_config_free(cfg_); }
  Config(const Config&) = delete;
  Config& operator=(const Config&) = delete;

  void set(const std::string& k, const std::string& v) { check_usage(mgd_config_set(cfg_, k.c_str(), v.c_str())); }
  const mgd_config* get() const { return cfg_; }

 private:
  mgd_config* cfg_ = nullptr;
};

class Pipeline {
 public:
  Pipeline(const Config& c, bool* quiet) { check_stage(mgd_pipeline_new(c.get(), log_line, quiet, &p_)); }
  ~Pipeline() { mgd_pipeline_free(p_); }
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;
  mgd_pipeline* get() { return p_; }

 private:
  mgd_pipeline* p_ = nullptr;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meme genre discovery: local-feature matching, affinity graphs and spectral clustering.\n"
               "Thread count can be overridden with the MGD_THREADS environment variable."};
  app.require_subcommand(1);
  Options o;
  app.add_option("-c,--config", o.config, "key=value configuration file")->check(CLI::ExistingFile);
  app.add_option("-s,--set", o.sets, "Override one config key (key=value), repeatable");
  app.add_option("-o,--out", o.out_dir, "Output directory (same as --set out_dir=...)");
  app.add_flag("-f,--force", o.force, "Rerun stages even when their artifacts are current");
  app.add_flag("-q,--quiet", o.quiet, "Suppress progress messages");
  app.add_flag_callback("--version", [] {
    std::printf("%s\n", mgd_version());
    throw CLI::Success();
  }, "Print version information");

  std::string synth_dir;
  int genres = 20, per_genre = 25;
  std::uint64_t synth_seed = 1;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic genre corpus with ground-truth labels");
  synth->add_option("dir", synth_dir, "Output directory")->required();
  synth->add_option("--genres", genres, "Number of genres")->check(CLI::PositiveNumber);
  synth->add_option("--per-genre", per_genre, "Images per genre")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "Generator seed");

  std::string manifest, image_root;
  auto* ingest = app.add_subcommand("ingest", "Read the manifest, hash and deduplicate images");
  ingest->add_option("--manifest", manifest, "CSV manifest with a path,source_tag header");
  ingest->add_option("--image-root", image_root, "Directory manifest paths are relative to");

  auto* extract = app.add_subcommand("extract", "Extract local features for every image");
  auto* index = app.add_subcommand("index", "Train the rotation and codebooks, build the inverted index");
  auto* affinity = app.add_subcommand("affinity", "Query sampled images and build the affinity graph");
  auto* cluster = app.add_subcommand("cluster", "Spectral clustering of the affinity graph");
  auto* report = app.add_subcommand("report", "Write HTML and JSON cluster reports");

  std::string kind, embeddings;
  auto* baseline = app.add_subcommand("baseline", "Build and cluster a baseline graph (phash or embedding)");
  baseline->add_option("--kind", kind, "phash or embedding")->check(CLI::IsMember({"phash", "embedding"}));
  baseline->add_option("--embeddings", embeddings, "Embedding sidecar file (MGDE)");

  auto* run = app.add_subcommand("run", "Run every stage, resuming from current artifacts");
  run->add_option("--manifest", manifest, "CSV manifest with a path,source_tag header");
  run->add_option("--image-root", image_root, "Directory manifest paths are relative to");

  std::string which;
  auto* eval_gen = app.add_subcommand("eval-gen", "Generate impostor-host tasks for a clustering");
  eval_gen->add_option("--baseline", which, "Use a baseline clustering instead of the main one");

  std::string host = "127.0.0.1", ui_dir, log_path;
  int port = 8080;
  auto* eval_serve = app.add_subcommand("eval-serve", "Serve annotation sessions over HTTP");
  eval_serve->add_option("--baseline", which, "Use a baseline clustering instead of the main one");
  eval_serve->add_option("--host", host, "Bind address");
  eval_serve->add_option("--port", port, "Port, 0 for any free port")->check(CLI::Range(0, 65535));
  eval_serve->add_option("--ui-dir", ui_dir, "Static annotation UI to serve at /")->check(CLI::ExistingDirectory);
  eval_serve->add_option("--log", log_path, "Response log (default: responses.csv in the output directory)");

  std::string responses;
  auto* eval_score = app.add_subcommand("eval-score", "Score a response log");
  eval_score->add_option("--baseline", which, "Use a baseline clustering instead of the main one");
  eval_score->add_option("responses", responses, "Response log (annotator_id,task_id,chosen_position,timestamp)")
      ->required()
      ->check(CLI::ExistingFile);

  std::vector<int> ks;
  auto* ksweep = app.add_subcommand("ksweep", "Cluster size statistics over a range of K");
  ksweep->add_option("--k", ks, "K values, comma separated")->delimiter(',')->required();
  ksweep->add_option("--baseline", which, "Sweep a baseline graph instead of the main one");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (synth->parsed()) {
      check_stage(mgd_synth_genre_corpus(synth_dir.c_str(), genres, per_genre, synth_seed));
      if (!o.quiet) std::fprintf(stderr, "wrote %d images to %s\n", genres * per_genre, synth_dir.c_str());
      return 0;
    }

    Config cfg(o);
    if (!manifest.empty()) cfg.set("manifest", manifest);
    if (!image_root.empty()) cfg.set("image_root", image_root);
    if (!kind.empty()) cfg.set("baseline", kind);
    if (!embeddings.empty()) cfg.set("embeddings", embeddings);
    Pipeline p(cfg, &o.quiet);
    int force = o.force ? 1 : 0;

    auto stage = [&](mgd_stage s) { check_stage(mgd_pipeline_run_stage(p.get(), s, force)); };
    if (ingest->parsed()) stage(MGD_STAGE_INGEST);
    if (extract->parsed()) stage(MGD_STAGE_EXTRACT);
    if (index->parsed()) stage(MGD_STAGE_INDEX);
    if (affinity->parsed()) stage(MGD_STAGE_AFFINITY);
    if (cluster->parsed()) stage(MGD_STAGE_CLUSTER);
    if (report->parsed()) stage(MGD_STAGE_REPORT);
    if (baseline->parsed()) {
      if (kind.empty()) throw UsageError{"baseline needs --kind phash|embedding"};
      stage(MGD_STAGE_BASELINE);
    }
    if (run->parsed()) check_stage(mgd_pipeline_run_all(p.get(), force));
    if (eval_gen->parsed()) {
      size_t n = 0;
      check_stage(mgd_pipeline_eval_generate(p.get(), which.c_str(), &n));
      if (!o.quiet) std::fprintf(stderr, "generated %zu tasks\n", n);
    }
    if (eval_score->parsed()) {
      char* json = nullptr;
      check_stage(mgd_pipeline_eval_score(p.get(), responses.c_str(), which.c_str(), &json));
      std::printf("%s\n", json);
      mgd_string_free(json);
    }
    if (ksweep->parsed()) check_stage(mgd_pipeline_ksweep(p.get(), ks.data(), ks.size(), which.c_str()));
    if (eval_serve->parsed()) {
      mgd_server* server = nullptr;
      check_stage(mgd_server_new(p.get(), which.c_str(), host.c_str(), port, ui_dir.empty() ? nullptr : ui_dir.c_str(),
                                 log_path.empty() ? nullptr : log_path.c_str(), &server));
      int bound = 0;
      if (mgd_server_start(server, &bound) != MGD_OK) {
        std::string msg = mgd_last_error();
        mgd_server_free(server);
        throw StageFailure{msg};
      }
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::fprintf(stderr, "serving on http://%s:%d (Ctrl-C to stop)\n", host.c_str(), bound);
      while (!interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(200));
      mgd_server_stop(server);
      mgd_server_free(server);
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.message.c_str());
    return kExitUsage;
  } catch (const StageFailure& e) {
    std::fprintf(stderr, "error: %s\n", e.message.c_str());
    return kExitStage;
  }
  return 0;
}
