#include "mgd/pipeline.hpp"

#include <Eigen/Core>
#include <openssl/crypto.h>
#include <opencv2/core/version.hpp>

#include <chrono>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mgd/affinity.hpp"
#include "mgd/baselines.hpp"
#include "mgd/corpus.hpp"
#include "mgd/digest.hpp"
#include "mgd/error.hpp"
#include "mgd/image.hpp"
#include "mgd/index.hpp"
#include "mgd/parallel.hpp"
#include "mgd/report.hpp"
#include "mgd/surf.hpp"

namespace mgd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

constexpr const char* kCorpus = "corpus.snapshot";
constexpr const char* kSkipped = "skipped.csv";
constexpr const char* kDedupMap = "dedup_map.csv";
constexpr const char* kFeatures = "features.mgdf";
constexpr const char* kIndex = "index.mgdi";
constexpr const char* kOpqHistory = "opq_history.csv";
constexpr const char* kQueries = "queries.csv";
constexpr const char* kMatchDebug = "matches_debug.txt";
constexpr const char* kEigenvalues = "eigenvalues.csv";
constexpr const char* kReportHtml = "report.html";
constexpr const char* kReportJson = "report.json";
constexpr const char* kMeta = "run_meta.json";

std::string suffix(const std::string& baseline) { return baseline.empty() ? "" : "_" + baseline; }

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + p.string());
  out << text;
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed: " + p.string());
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return {};
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void save_clustering(const fs::path& dir, const std::string& sfx, const ClusterRun& run) {
  save_assignment(dir / ("assignment" + sfx + ".csv"), run.assignment);
  save_stats(dir / ("stats" + sfx + ".txt"), cluster_stats(run.assignment));
  std::ostringstream ev;
  ev << "index,eigenvalue\n";
  ev.precision(17);
  for (std::size_t i = 0; i < run.embedding.eigenvalues.size(); ++i) ev << i << ',' << run.embedding.eigenvalues[i] << '\n';
  write_text(dir / ("eigenvalues" + sfx + ".csv"), ev.str());
}

}  // namespace

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::kIngest: return "ingest";
    case Stage::kExtract: return "extract";
    case Stage::kIndex: return "index";
    case Stage::kAffinity: return "affinity";
    case Stage::kCluster: return "cluster";
    case Stage::kBaseline: return "baseline";
    case Stage::kReport: return "report";
  }
  return "unknown";
}

std::string version_summary() {
  std::ostringstream s;
  s << "mgd " << kVersion << "; opencv " << CV_VERSION << "; eigen " << EIGEN_WORLD_VERSION << '.'
    << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION << "; " << OpenSSL_version(OPENSSL_VERSION);
  return s.str();
}

Pipeline::Pipeline(RunConfig config, Log log) : config_(std::move(config)), log_(std::move(log)) {
  require(!config_.out_dir.empty(), ErrorCode::kInvalidArgument, "out_dir must be set");
  fs::create_directories(config_.out_dir / "stamps");
  save_config(path("config.txt"), config_);
}

std::string Pipeline::assignment_name(const std::string& baseline) const {
  return "assignment" + suffix(baseline) + ".csv";
}

std::string Pipeline::affinity_name(const std::string& baseline) const {
  return "affinity" + suffix(baseline) + ".tsv";
}

std::vector<std::string> Pipeline::outputs(Stage s) const {
  switch (s) {
    case Stage::kIngest: return {kCorpus, kSkipped, kDedupMap};
    case Stage::kExtract: return {kFeatures};
    case Stage::kIndex: return {kIndex, kOpqHistory};
    case Stage::kAffinity: return {affinity_name(), kQueries};
    case Stage::kCluster: return {assignment_name(), "stats.txt", kEigenvalues};
    case Stage::kBaseline:
      if (config_.baseline == "none") return {};
      return {affinity_name(config_.baseline), assignment_name(config_.baseline), "stats_" + config_.baseline + ".txt"};
    case Stage::kReport: return {kReportHtml, kReportJson};
  }
  return {};
}

std::string Pipeline::stamp_for(Stage s) const {
  std::vector<std::string> keys;
  std::vector<fs::path> inputs;
  switch (s) {
    case Stage::kIngest:
      keys = {"manifest", "image_root", "dedup"};
      inputs = {config_.manifest};
      break;
    case Stage::kExtract:
      keys = {"feature_cap"};
      inputs = {path(kCorpus)};
      break;
    case Stage::kIndex:
      keys = {"coarse_k", "subspaces", "opq_iterations", "train_sample", "coarse_iterations", "seed"};
      inputs = {path(kFeatures)};
      break;
    case Stage::kAffinity:
      keys = {"knn", "nprobe", "query_fraction", "top_j", "ratio", "ransac_iterations", "inlier_px",
              "min_inliers", "keypoint_consistency", "max_false_alarms", "debug_matches", "seed"};
      inputs = {path(kCorpus), path(kFeatures), path(kIndex)};
      break;
    case Stage::kCluster:
      keys = {"K", "kmeans_restarts", "seed"};
      inputs = {path(affinity_name())};
      break;
    case Stage::kBaseline:
      keys = {"baseline", "phash_max_distance", "embedding_knn", "embeddings", "K", "kmeans_restarts", "seed"};
      inputs = {path(kCorpus)};
      if (config_.baseline == "embedding") inputs.push_back(config_.embeddings);
      break;
    case Stage::kReport:
      keys = {"K"};
      inputs = {path(kCorpus), path(assignment_name()), path(affinity_name())};
      break;
  }
  std::string text = std::string(stage_name(s)) + '\n';
  for (const auto& k : keys) text += k + '=' + config_value(config_, k) + '\n';
  for (const auto& p : inputs) {
    std::error_code ec;
    text += p.filename().string() + '=' + (fs::exists(p, ec) ? to_hex(sha256_file(p)) : "missing") + '\n';
  }
  return to_hex(sha256({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()}));
}

StageOutcome Pipeline::run_stage(Stage s, bool force) {
  StageOutcome o;
  o.stage = s;
  const fs::path stamp_path = config_.out_dir / "stamps" / std::string(stage_name(s));
  try {
    std::string stamp = stamp_for(s);
    bool complete = true;
    for (const auto& out : outputs(s)) complete = complete && fs::exists(path(out));
    if (!force && complete && read_text(stamp_path) == stamp) {
      o.skipped = true;
      say(std::string(stage_name(s)) + ": up to date, skipped");
      record(o);
      return o;
    }
    fs::remove(stamp_path);
    say(std::string(stage_name(s)) + ": running");
    auto t0 = std::chrono::steady_clock::now();
    switch (s) {
      case Stage::kIngest: ingest(o); break;
      case Stage::kExtract: extract(o); break;
      case Stage::kIndex: index(o); break;
      case Stage::kAffinity: affinity(o); break;
      case Stage::kCluster: cluster(o); break;
      case Stage::kBaseline: baseline(o); break;
      case Stage::kReport: report(o); break;
    }
    o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_text(stamp_path, stamp);
    for (const auto& n : o.notes) say(std::string(stage_name(s)) + ": " + n);
    say(std::string(stage_name(s)) + ": done in " + std::to_string(o.seconds) + " s");
    record(o);
    return o;
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(s, e);
  } catch (const std::exception& e) {
    throw StageError(s, Error(ErrorCode::kInternal, e.what()));
  }
}

std::vector<StageOutcome> Pipeline::run_all(bool force) {
  std::vector<StageOutcome> out;
  for (Stage s : {Stage::kIngest, Stage::kExtract, Stage::kIndex, Stage::kAffinity, Stage::kCluster,
                  Stage::kBaseline, Stage::kReport}) {
    if (s == Stage::kBaseline && config_.baseline == "none") continue;
    out.push_back(run_stage(s, force));
  }
  return out;
}

void Pipeline::ingest(StageOutcome& o) {
  require(!config_.manifest.empty(), ErrorCode::kInvalidArgument, "manifest path not set");
  fs::path root = config_.image_root.empty() ? config_.manifest.parent_path() : config_.image_root;
  IngestResult ing = ingest_manifest(config_.manifest, root);
  CorpusSnapshot snap = std::move(ing.snapshot);
  std::vector<ImageId> map(snap.size());
  for (std::size_t i = 0; i < map.size(); ++i) map[i] = static_cast<ImageId>(i);
  std::size_t removed = 0;
  if (config_.dedup) {
    DedupResult d = dedup_exact(snap);
    snap = std::move(d.snapshot);
    map = std::move(d.old_to_new);
    removed = d.removed;
  }
  save_snapshot(path(kCorpus), snap);
  save_skip_report(path(kSkipped), ing.skipped);
  save_dedup_map(path(kDedupMap), map);
  o.notes.push_back(std::to_string(ing.manifest_rows) + " manifest rows, " + std::to_string(snap.size()) +
                    " images kept, " + std::to_string(ing.skipped.size()) + " skipped, " + std::to_string(removed) +
                    " exact duplicates removed");
}

void Pipeline::extract(StageOutcome& o) {
  CorpusSnapshot snap = load_snapshot(path(kCorpus));
  std::vector<FeatureSet> sets(snap.size());
  parallel_for(snap.size(), [&](std::size_t i) {
    const auto& rec = snap.records[i];
    auto img = load_for_features(rec.path);
    require(img.has_value(), ErrorCode::kIo, "cannot decode " + rec.path.string());
    sets[i] = extract_features(*img, rec.image_id, config_.feature_cap);
  });
  std::size_t total = 0, empty = 0;
  for (const auto& s : sets) {
    total += s.size();
    empty += s.size() == 0;
  }
  save_features(path(kFeatures), sets);
  o.notes.push_back(std::to_string(total) + " descriptors over " + std::to_string(sets.size()) + " images, " +
                    std::to_string(empty) + " images without features");
}

void Pipeline::index(StageOutcome& o) {
  require(config_.subspaces == kSubspaces, ErrorCode::kInvalidArgument,
          "only " + std::to_string(kSubspaces) + " subspaces are supported");
  auto sets = load_features(path(kFeatures));
  std::size_t total = 0;
  for (const auto& s : sets) total += s.size();
  require(total >= static_cast<std::size_t>(config_.coarse_k), ErrorCode::kInsufficientData,
          "only " + std::to_string(total) + " descriptors for " + std::to_string(config_.coarse_k) +
              " coarse lists; lower coarse_k");
  auto sample = sample_descriptors(sets, config_.train_sample, config_.seed);
  auto opq = train_opq(sample, config_.opq_iterations, config_.seed);
  std::ostringstream h;
  h << "iteration,mse\n";
  h.precision(9);
  for (std::size_t i = 0; i < opq.error_history.size(); ++i) h << i << ',' << opq.error_history[i] << '\n';
  write_text(path(kOpqHistory), h.str());
  IndexBuildParams bp;
  bp.coarse_k = config_.coarse_k;
  bp.coarse_iterations = config_.coarse_iterations;
  bp.train_sample = config_.train_sample;
  bp.seed = config_.seed;
  auto idx = build_index(sets, opq.model, bp);
  save_index(path(kIndex), idx);
  o.notes.push_back(std::to_string(idx.total_entries()) + " entries in " + std::to_string(idx.coarse_k()) +
                    " lists; OPQ error " + std::to_string(opq.error_history.front()) + " -> " +
                    std::to_string(opq.error_history.back()));
}

void Pipeline::affinity(StageOutcome& o) {
  CorpusSnapshot snap = load_snapshot(path(kCorpus));
  auto sets = load_features(path(kFeatures));
  auto idx = load_index(path(kIndex));
  auto n = static_cast<std::uint32_t>(snap.size());
  QueryPlan plan = sample_queries(n, config_.query_fraction, config_.seed);
  AffinityParams ap;
  ap.search.knn = config_.knn;
  ap.search.nprobe = config_.nprobe;
  ap.match.ratio = static_cast<float>(config_.ratio);
  ap.match.ransac_iterations = config_.ransac_iterations;
  ap.match.inlier_px = config_.inlier_px;
  ap.match.min_inliers = config_.min_inliers;
  ap.match.top_j = config_.top_j;
  ap.match.keypoint_consistency = config_.keypoint_consistency;
  ap.match.max_false_alarms = config_.max_false_alarms;
  ap.match.seed = config_.seed;
  AffinityBuildReport rep;
  SparseAffinity a = build_affinity(idx, sets, n, plan, ap, &rep, config_.debug_matches);
  save_affinity(path(affinity_name()), a);
  std::ostringstream q;
  q << "image_id\n";
  for (auto id : plan.query_ids) q << id << '\n';
  write_text(path(kQueries), q.str());
  if (config_.debug_matches) {
    std::ostringstream d;
    for (const auto& line : rep.debug_records) d << line << '\n';
    write_text(path(kMatchDebug), d.str());
  }
  auto comps = connected_components(a);
  std::size_t active = 0;
  for (auto c : a.edge_counts()) active += c > 0;
  o.notes = rep.warnings;
  o.notes.push_back(std::to_string(plan.query_ids.size()) + " queries, " + std::to_string(a.edges.size()) +
                    " edges, " + std::to_string(active) + " images with edges, largest component " +
                    std::to_string(comps.empty() ? 0 : comps.front()));
}

void Pipeline::cluster(StageOutcome& o) {
  SparseAffinity a = load_affinity(path(affinity_name()));
  ClusterRun run = cluster_graph(a, config_.K, config_.seed, config_.kmeans_restarts);
  save_clustering(config_.out_dir, "", run);
  auto st = cluster_stats(run.assignment);
  o.notes = run.warnings;
  o.notes.push_back(std::to_string(st.non_empty) + " non-empty clusters, sizes min " + std::to_string(st.min) +
                    " median " + std::to_string(st.median) + " max " + std::to_string(st.max) + ", overflow " +
                    std::to_string(st.overflow));
}

void Pipeline::baseline(StageOutcome& o) {
  const std::string& b = config_.baseline;
  if (b == "none") {
    o.notes.push_back("no baseline configured");
    return;
  }
  CorpusSnapshot snap = load_snapshot(path(kCorpus));
  auto n = static_cast<std::uint32_t>(snap.size());
  SparseAffinity a;
  if (b == "phash") {
    auto hashes = hash_corpus(snap);
    save_hashes(path("hashes.csv"), hashes);
    a = affinity_from_hashes(hashes, config_.phash_max_distance);
  } else {
    require(!config_.embeddings.empty(), ErrorCode::kInvalidArgument, "embeddings path not set");
    a = affinity_from_embeddings(load_embeddings(config_.embeddings), n, config_.embedding_knn);
  }
  a.seed = config_.seed;
  save_affinity(path(affinity_name(b)), a);
  ClusterRun run = cluster_graph(a, config_.K, config_.seed, config_.kmeans_restarts);
  save_clustering(config_.out_dir, suffix(b), run);
  auto st = cluster_stats(run.assignment);
  o.notes = run.warnings;
  o.notes.push_back(b + ": " + std::to_string(a.edges.size()) + " edges, largest cluster " + std::to_string(st.max) +
                    ", overflow " + std::to_string(st.overflow));
}

void Pipeline::report(StageOutcome& o) {
  CorpusSnapshot snap = load_snapshot(path(kCorpus));
  ClusterAssignment asg = load_assignment(path(assignment_name()), config_.K);
  SparseAffinity a = load_affinity(path(affinity_name()));
  ClusterReport rep = build_report(asg, snap, a);
  write_text(path(kReportJson), report_to_json(rep, snap) + "\n");
  write_text(path(kReportHtml), report_to_html(rep, snap, cluster_stats(asg)));
  o.notes.push_back(std::to_string(rep.sections.size()) + " cluster sections");
}

void Pipeline::record(const StageOutcome& o) {
  json meta;
  std::string text = read_text(path(kMeta));
  if (!text.empty()) {
    try {
      meta = json::parse(text);
    } catch (const json::exception&) {
      meta = json::object();
    }
  }
  json cfg = json::object();
  for (const auto& k : config_keys()) cfg[k] = config_value(config_, k);
  meta["config"] = cfg;
  meta["versions"] = version_summary();
  meta["threads"] = thread_count();
  auto& st = meta["stages"][std::string(stage_name(o.stage))];
  if (!o.skipped) {
    st["seconds"] = o.seconds;
    st["notes"] = o.notes;
    st["finished_at"] = utc_timestamp();
  }
  st["last_run_skipped"] = o.skipped;

  std::error_code ec;
  if (fs::exists(path(kCorpus), ec)) {
    std::size_t n = 0;
    try {
      n = load_snapshot(path(kCorpus)).size();
    } catch (const Error&) {
    }
    double secs = 0;
    for (const char* name : {"extract", "index"})
      if (meta["stages"].contains(name) && meta["stages"][name].contains("seconds"))
        secs += meta["stages"][name]["seconds"].get<double>();
    meta["throughput"]["images"] = n;
    meta["throughput"]["extract_index_seconds"] = secs;
    if (secs > 0) meta["throughput"]["images_per_hour"] = static_cast<double>(n) / secs * 3600.0;
  }
  write_text(path(kMeta), meta.dump(2) + "\n");
}

TaskSet Pipeline::eval_generate(const std::string& baseline) {
  ClusterAssignment asg = load_assignment(path(assignment_name(baseline)), config_.K);
  TaskSet tasks = generate_tasks(asg, config_.tasks_per_cluster, config_.seed, config_.control_tasks);
  save_tasks(path("tasks" + suffix(baseline) + ".json"), tasks);
  for (auto [c, size] : tasks.skipped_clusters)
    say("eval-gen: cluster " + std::to_string(c) + " has " + std::to_string(size) + " images; no tasks");
  return tasks;
}

EvalReport Pipeline::eval_score(const fs::path& responses, const std::string& baseline) {
  ClusterAssignment asg = load_assignment(path(assignment_name(baseline)), config_.K);
  TaskSet tasks = load_tasks(path("tasks" + suffix(baseline) + ".json"));
  EvalReport rep = score(tasks, load_responses(responses), asg);
  write_text(path("eval_report" + suffix(baseline) + ".json"), report_json(rep) + "\n");
  return rep;
}

std::vector<KSweepRow> Pipeline::k_sweep(const std::vector<int>& ks, const std::string& baseline) {
  SparseAffinity a = load_affinity(path(affinity_name(baseline)));
  auto [sub, map] = active_subgraph(a);
  std::vector<KSweepRow> rows;
  for (int k : ks) {
    KSweepRow r;
    r.K = k;
    if (k < 1 || static_cast<std::uint32_t>(k) > sub.n) {
      r.skipped = true;
      r.note = "K exceeds the " + std::to_string(sub.n) + " images with edges";
      say("ksweep: K=" + std::to_string(k) + " skipped: " + r.note);
      rows.push_back(r);
      continue;
    }
    ClusterRun run = cluster_graph(a, k, config_.seed, config_.kmeans_restarts);
    r.stats = cluster_stats(run.assignment);
    say("ksweep: K=" + std::to_string(k) + " min " + std::to_string(r.stats.min) + " median " +
        std::to_string(r.stats.median) + " max " + std::to_string(r.stats.max));
    rows.push_back(r);
  }
  std::ostringstream csvs;
  csvs << "K,non_empty,min,median,max,overflow,note\n";
  json plot{{"K", json::array()}, {"min", json::array()}, {"median", json::array()}, {"max", json::array()}};
  for (const auto& r : rows) {
    if (r.skipped) {
      csvs << r.K << ",,,,,,\"" << r.note << "\"\n";
      continue;
    }
    csvs << r.K << ',' << r.stats.non_empty << ',' << r.stats.min << ',' << r.stats.median << ',' << r.stats.max
         << ',' << r.stats.overflow << ",\n";
    plot["K"].push_back(r.K);
    plot["min"].push_back(r.stats.min);
    plot["median"].push_back(r.stats.median);
    plot["max"].push_back(r.stats.max);
  }
  std::string name = "ksweep" + suffix(baseline);
  write_text(path(name + ".csv"), csvs.str());
  write_text(path(name + "_plot.json"), plot.dump(2) + "\n");
  return rows;
}

}  // namespace mgd
