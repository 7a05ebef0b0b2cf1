#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "mgd/config.hpp"
#include "mgd/error.hpp"
#include "mgd/eval.hpp"
#include "mgd/spectral.hpp"

namespace mgd {

enum class Stage { kIngest, kExtract, kIndex, kAffinity, kCluster, kBaseline, kReport };

std::string_view stage_name(Stage s);

struct StageOutcome {
  Stage stage = Stage::kIngest;
  bool skipped = false;  // resumed from matching artifacts
  double seconds = 0;
  std::vector<std::string> notes;
};

// Thrown when a stage fails; carries the stage name in what().
class StageError : public Error {
 public:
  StageError(Stage s, const Error& cause)
      : Error(cause.code(), "stage '" + std::string(stage_name(s)) + "' failed: " + cause.what()), stage_(s) {}
  Stage stage() const { return stage_; }

 private:
  Stage stage_;
};

struct KSweepRow {
  int K = 0;
  bool skipped = false;
  std::string note;
  ClusterStats stats;
};

// Every stage reads its inputs from and writes its outputs to out_dir. A
// stage whose stamp (its settings plus the stamps of its inputs) matches the
// one on disk, and whose outputs exist, is skipped unless forced.
class Pipeline {
 public:
  using Log = std::function<void(const std::string&)>;

  explicit Pipeline(RunConfig config, Log log = {});

  const RunConfig& config() const { return config_; }
  std::filesystem::path path(std::string_view artifact) const { return config_.out_dir / std::string(artifact); }

  StageOutcome run_stage(Stage s, bool force = false);
  // ingest, extract, index, affinity, cluster, the configured baseline, report.
  std::vector<StageOutcome> run_all(bool force = false);

  // Tasks for the MGD assignment, or for `baseline`'s when given.
  TaskSet eval_generate(const std::string& baseline = "");
  EvalReport eval_score(const std::filesystem::path& responses, const std::string& baseline = "");

  // Reuses the persisted affinity (MGD, or the named baseline's).
  std::vector<KSweepRow> k_sweep(const std::vector<int>& ks, const std::string& baseline = "");

  std::string assignment_name(const std::string& baseline = "") const;
  std::string affinity_name(const std::string& baseline = "") const;

 private:
  void ingest(StageOutcome& o);
  void extract(StageOutcome& o);
  void index(StageOutcome& o);
  void affinity(StageOutcome& o);
  void cluster(StageOutcome& o);
  void baseline(StageOutcome& o);
  void report(StageOutcome& o);

  std::string stamp_for(Stage s) const;
  std::vector<std::string> outputs(Stage s) const;
  void record(const StageOutcome& o);
  void say(const std::string& m) const {
    if (log_) log_(m);
  }

  RunConfig config_;
  Log log_;
};

// Library, codec and numeric backend versions.
std::string version_summary();

}  // namespace mgd
