#include "doctest.h"

#include <fstream>

#include "json.hpp"
#include "mgd/pipeline.hpp"
#include "mgd/synth.hpp"
#include "support/support.hpp"

using namespace mgd;
namespace fs = std::filesystem;

namespace {

// One small corpus shared by the suite; generation dominates the cost.
struct SmallCorpus {
  test::TempDir dir{"mgd-pipe"};
  synth::GeneratedCorpus corpus;
  SmallCorpus() {
    synth::GenreCorpusParams p;
    p.genres = 4;
    p.per_genre = 8;
    p.seed = 11;
    corpus = synth::generate_genre_corpus(dir / "corpus", p);
  }
};

SmallCorpus& small() {
  static SmallCorpus c;
  return c;
}

RunConfig small_config(const fs::path& out) {
  RunConfig c;
  c.manifest = small().corpus.manifest;
  c.out_dir = out;
  c.coarse_k = 64;
  c.train_sample = 20000;
  c.opq_iterations = 4;
  c.coarse_iterations = 10;
  c.query_fraction = 1.0;
  c.K = 4;
  c.kmeans_restarts = 4;
  c.tasks_per_cluster = 10;
  c.control_tasks = 5;
  return c;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("full run, rerun skips everything and reproduces the bytes") {
    test::TempDir out;
    std::vector<std::string> log;
    Pipeline p(small_config(out.path()), [&](const std::string& m) { log.push_back(m); });
    auto first = p.run_all();
    for (const auto& o : first) CHECK_FALSE(o.skipped);

    auto snap = load_snapshot(p.path("corpus.snapshot"));
    CHECK(snap.size() == 32);
    auto a = load_assignment(p.path("assignment.csv"), 4);
    REQUIRE(a.assignments.size() == 32);
    for (auto c : a.assignments) CHECK(c <= 4);
    auto truth = test::genre_labels(snap, small().corpus.labels);
    double pur = test::purity(truth, a.assignments);
    MESSAGE("small-corpus purity " << pur);
    CHECK(pur >= 0.5);

    std::string bytes = test::read_file(p.path("assignment.csv"));
    auto second = p.run_all();
    for (const auto& o : second) CHECK(o.skipped);
    CHECK(test::read_file(p.path("assignment.csv")) == bytes);

    auto forced = Pipeline(small_config(out.path())).run_all(true);
    for (const auto& o : forced) CHECK_FALSE(o.skipped);
    CHECK(test::read_file(p.path("assignment.csv")) == bytes);

    auto meta = nlohmann::json::parse(test::read_file(p.path("run_meta.json")));
    CHECK(meta["throughput"]["images"] == 32);
    CHECK(meta["throughput"].contains("images_per_hour"));
    CHECK(meta["stages"].contains("affinity"));
    CHECK(load_config(p.path("config.txt")).to_text() == p.config().to_text());
    CHECK(fs::exists(p.path("report.html")));
    CHECK(fs::exists(p.path("report.json")));

    // A changed downstream setting reruns only from that stage on.
    RunConfig k3 = small_config(out.path());
    k3.K = 3;
    auto partial = Pipeline(k3).run_all();
    CHECK(partial[0].skipped);
    CHECK(partial[3].skipped);
    CHECK_FALSE(partial[4].skipped);
  }

  TEST_CASE("stage-by-stage run equals a one-shot run") {
    test::TempDir a, b;
    Pipeline one(small_config(a.path()));
    one.run_all();
    Pipeline staged(small_config(b.path()));
    for (Stage s : {Stage::kIngest, Stage::kExtract, Stage::kIndex, Stage::kAffinity, Stage::kCluster, Stage::kReport})
      staged.run_stage(s);
    for (const char* f : {"features.mgdf", "index.mgdi", "affinity.tsv", "assignment.csv"})
      CHECK_MESSAGE(test::read_file(a / f) == test::read_file(b / f), f);
  }

  TEST_CASE("k sweep, baseline and eval stages") {
    test::TempDir out;
    RunConfig c = small_config(out.path());
    c.baseline = "phash";
    Pipeline p(c);
    p.run_all();
    CHECK(fs::exists(p.path("assignment_phash.csv")));

    auto rows = p.k_sweep({1, 10, 50, 100, 140});
    REQUIRE(rows.size() == 5);
    CHECK_FALSE(rows[0].skipped);
    CHECK(rows[0].stats.min == rows[0].stats.max);
    CHECK(rows[0].stats.median == static_cast<double>(rows[0].stats.max));
    CHECK(rows[0].stats.max + rows[0].stats.overflow == 32);
    CHECK_FALSE(rows[1].skipped);
    CHECK(rows[2].skipped);
    CHECK_FALSE(rows[2].note.empty());
    auto csv = test::read_file(p.path("ksweep.csv"));
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
    CHECK(fs::exists(p.path("ksweep_plot.json")));

    auto tasks = p.eval_generate();
    CHECK(fs::exists(p.path("tasks.json")));
    auto answers = simulate_random_annotator(tasks, 3);
    answers.erase(std::remove_if(answers.begin(), answers.end(),
                                 [&](const Response& r) { return tasks.tasks[r.task_id].is_control; }),
                  answers.end());
    // Synthetic annotator passes every control.
    for (const auto& t : tasks.tasks)
      if (t.is_control) answers.push_back({"random", t.task_id, t.impostor_position, ""});
    test::write_file(out / "responses.csv", "annotator_id,task_id,chosen_position,timestamp\n");
    append_responses(out / "responses.csv", answers);
    auto rep = p.eval_score(out / "responses.csv");
    CHECK(rep.defined);
    CHECK(rep.annotators_qualified == 1);
    CHECK(fs::exists(p.path("eval_report.json")));
  }

  TEST_CASE("stage failure names the stage") {
    test::TempDir out;
    RunConfig c = small_config(out.path());
    c.manifest = out / "missing.csv";
    Pipeline p(c);
    try {
      p.run_stage(Stage::kIngest);
      FAIL("expected failure");
    } catch (const StageError& e) {
      CHECK(e.stage() == Stage::kIngest);
      CHECK(std::string(e.what()).find("ingest") != std::string::npos);
    }
  }
}
