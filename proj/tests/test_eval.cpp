#include "doctest.h"

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "json.hpp"
#include "mgd/error.hpp"
#include "mgd/eval.hpp"
#include "support/support.hpp"

using namespace mgd;

namespace {

ClusterAssignment uniform_assignment(int clusters, int per_cluster, int extra_overflow = 0) {
  ClusterAssignment a;
  a.K = clusters;
  for (int c = 0; c < clusters; ++c)
    for (int i = 0; i < per_cluster; ++i) a.assignments.push_back(static_cast<std::uint32_t>(c));
  for (int i = 0; i < extra_overflow; ++i) a.assignments.push_back(static_cast<std::uint32_t>(clusters));
  return a;
}

// Answers controls per `control_correct`, real tasks correctly.
std::vector<Response> session_answers(const TaskSet& tasks, const std::vector<std::uint32_t>& ids,
                                      const std::string& who, int control_correct) {
  std::vector<Response> out;
  int controls = 0;
  for (auto id : ids) {
    const auto& t = tasks.tasks[id];
    int pos = t.impostor_position;
    if (t.is_control && controls++ >= control_correct) pos = pos % kTaskImages + 1;
    out.push_back({who, id, pos, "2026-01-01T00:00:00Z"});
  }
  return out;
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("task counts and skip report") {
    auto a = uniform_assignment(100, 6);
    auto tasks = generate_tasks(a, 200, 1, 0);
    CHECK(tasks.tasks.size() == 20000);
    CHECK(tasks.skipped_clusters.empty());

    a.assignments.insert(a.assignments.end(), {100, 100, 100});
    a.K = 101;
    auto with_small = generate_tasks(a, 10, 1, 0);
    CHECK(with_small.tasks.size() == 1000);
    REQUIRE(with_small.skipped_clusters.count(100) == 1);
    CHECK(with_small.skipped_clusters.at(100) == 3);
    for (const auto& t : with_small.tasks) CHECK(t.host_cluster != 100);
  }

  TEST_CASE("same seed, same tasks") {
    auto a = uniform_assignment(7, 9, 5);
    auto x = generate_tasks(a, 30, 42, 10);
    auto y = generate_tasks(a, 30, 42, 10);
    REQUIRE(x.tasks.size() == y.tasks.size());
    for (std::size_t i = 0; i < x.tasks.size(); ++i) {
      CHECK(x.tasks[i].host_images == y.tasks[i].host_images);
      CHECK(x.tasks[i].impostor_image == y.tasks[i].impostor_image);
      CHECK(x.tasks[i].impostor_position == y.tasks[i].impostor_position);
    }
  }

  TEST_CASE("task structure holds for every task") {
    std::mt19937_64 rng(3);
    ClusterAssignment a;
    a.K = 12;
    for (int i = 0; i < 700; ++i) a.assignments.push_back(static_cast<std::uint32_t>(rng() % 13));
    auto tasks = generate_tasks(a, 100, 8, 50);
    std::size_t controls = 0;
    for (const auto& t : tasks.tasks) {
      CHECK(a.assignments[t.impostor_image] != t.host_cluster);
      CHECK(t.impostor_position >= 1);
      CHECK(t.impostor_position <= 5);
      for (auto h : t.host_images) CHECK(a.assignments[h] == t.host_cluster);
      if (t.is_control) {
        ++controls;
        REQUIRE(t.control_answer.has_value());
        CHECK(*t.control_answer == t.impostor_position);
        CHECK(std::set<ImageId>(t.host_images.begin(), t.host_images.end()).size() == 1);
      } else {
        CHECK(std::set<ImageId>(t.host_images.begin(), t.host_images.end()).size() == 4);
      }
      auto s = t.slots();
      CHECK(s[static_cast<std::size_t>(t.impostor_position - 1)] == t.impostor_image);
    }
    CHECK(controls == 50);
  }

  TEST_CASE("impostor position is uniform") {
    auto tasks = generate_tasks(uniform_assignment(60, 8), 200, 5, 0);
    std::array<double, 5> counts{};
    for (const auto& t : tasks.tasks) counts[static_cast<std::size_t>(t.impostor_position - 1)] += 1;
    double expected = tasks.tasks.size() / 5.0, chi2 = 0;
    for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
    // 99th percentile of chi-square with 4 degrees of freedom.
    CHECK(chi2 < 13.277);
    CHECK(tasks.tasks.size() >= 10000);
  }

  TEST_CASE("one non-empty cluster cannot form impostors") {
    ClusterAssignment a;
    a.K = 3;
    a.assignments.assign(20, 1);
    try {
      generate_tasks(a, 5, 1, 0);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("cannot form impostor") != std::string::npos);
    }
  }

  TEST_CASE("qualification boundaries") {
    auto a = uniform_assignment(10, 10);
    auto tasks = generate_tasks(a, 20, 3, 40);
    SessionDealer dealer(tasks, 9);
    std::vector<Response> all;
    std::map<std::string, int> correct_controls = {{"five", 5}, {"four", 4}, {"three", 3}, {"zero", 0}};
    for (const auto& [who, ok] : correct_controls) {
      auto plan = dealer.next(who);
      auto r = session_answers(tasks, plan.task_ids, who, ok);
      all.insert(all.end(), r.begin(), r.end());
    }
    auto q = qualify_annotators(tasks, all);
    CHECK(q.control_misses["five"] == 0);
    CHECK(q.control_misses["four"] == 1);
    CHECK(q.control_misses["three"] == 2);
    std::set<std::string> qualified(q.qualified.begin(), q.qualified.end());
    CHECK(qualified == std::set<std::string>{"five", "four"});
    CHECK(std::set<std::string>(q.discarded.begin(), q.discarded.end()) == std::set<std::string>{"three", "zero"});

    // Dropping a discarded annotator changes nobody else.
    std::vector<Response> without;
    std::copy_if(all.begin(), all.end(), std::back_inserter(without), [](const Response& r) { return r.annotator_id != "three"; });
    auto q2 = qualify_annotators(tasks, without);
    CHECK(q2.control_misses["five"] == 0);
    CHECK(q2.control_misses["four"] == 1);
    CHECK(q2.control_misses["zero"] == 5);

    // Unanswered controls count as misses.
    auto plan = dealer.next("quitter");
    std::vector<Response> partial;
    for (auto id : plan.task_ids)
      if (!tasks.tasks[id].is_control) partial.push_back({"quitter", id, 1, ""});
    CHECK(qualify_annotators(tasks, partial).control_misses["quitter"] == 5);

    auto rep = score(tasks, all, a);
    CHECK(rep.annotators_qualified == 2);
    CHECK(rep.annotators_discarded == 2);
    CHECK(rep.responses_scored == 40);
    CHECK(rep.overall_accuracy == doctest::Approx(1.0));
  }

  TEST_CASE("delta arithmetic on injected cluster data") {
    std::vector<ClusterTally> t = {{0, 629250, 10000, 4242}, {1, 370750, 10000, 8242}};
    auto rep = score_tallies(t);
    CHECK(rep.avg_accuracy == doctest::Approx(0.6242).epsilon(1e-12));
    CHECK(rep.normalized_avg_accuracy == doctest::Approx(0.5725).epsilon(1e-9));
    CHECK(std::abs(100 * rep.normalized_delta - 5.17) <= 0.01);
  }

  TEST_CASE("hand-computed toy") {
    std::vector<ClusterTally> t = {{0, 90, 10, 3}, {1, 10, 10, 9}};
    auto rep = score_tallies(t);
    CHECK(rep.normalized_avg_accuracy == doctest::Approx(0.36).epsilon(1e-12));
    CHECK(rep.avg_accuracy == doctest::Approx(0.60).epsilon(1e-12));
    CHECK(rep.normalized_delta == doctest::Approx(0.24).epsilon(1e-12));
    CHECK(rep.covered_weight == doctest::Approx(1.0));
    double psum = 0;
    for (const auto& c : rep.clusters) psum += c.p;
    CHECK(psum == doctest::Approx(1.0));
  }

  TEST_CASE("single cluster: normalized equals average") {
    auto rep = score_tallies({{0, 500, 40, 13}});
    CHECK(rep.normalized_avg_accuracy == rep.avg_accuracy);
    CHECK(rep.normalized_delta == 0);
  }

  TEST_CASE("normalized accuracy is a convex combination") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<ClusterTally> t;
      int n = 1 + static_cast<int>(rng() % 12);
      double lo = 1, hi = 0;
      for (int c = 0; c < n; ++c) {
        std::size_t answered = rng() % 30;
        std::size_t correct = answered ? rng() % (answered + 1) : 0;
        t.push_back({static_cast<std::uint32_t>(c), 1 + rng() % 1000, answered, correct});
        if (answered) {
          double acc = static_cast<double>(correct) / answered;
          lo = std::min(lo, acc);
          hi = std::max(hi, acc);
        }
      }
      auto rep = score_tallies(t);
      if (!rep.defined) continue;
      CHECK(rep.normalized_avg_accuracy >= lo - 1e-12);
      CHECK(rep.normalized_avg_accuracy <= hi + 1e-12);
      CHECK(rep.covered_weight <= 1 + 1e-12);
    }
  }

  TEST_CASE("no qualified responses leaves metrics undefined") {
    auto a = uniform_assignment(4, 6);
    auto tasks = generate_tasks(a, 5, 1, 10);
    auto rep = score(tasks, {}, a);
    CHECK_FALSE(rep.defined);
    auto doc = nlohmann::json::parse(report_json(rep));
    CHECK(doc["avg_accuracy"].is_null());
    CHECK(doc["normalized_avg_accuracy"].is_null());
    CHECK(doc["defined"] == false);
  }

  TEST_CASE("random annotator sits at one in five") {
    auto a = uniform_assignment(100, 8);
    auto tasks = generate_tasks(a, 200, 6, 0);
    auto r = simulate_random_annotator(tasks, 77);
    REQUIRE(r.size() == 20000);
    auto rep = score(tasks, r, a, false);
    MESSAGE("random accuracy " << rep.overall_accuracy);
    CHECK(std::abs(rep.overall_accuracy - 0.2) <= 0.01);
    auto again = simulate_random_annotator(tasks, 77);
    for (std::size_t i = 0; i < r.size(); ++i) REQUIRE(r[i].chosen_position == again[i].chosen_position);

    auto few = generate_tasks(uniform_assignment(2, 5), 5, 1, 0);
    few.tasks.resize(5);
    auto rep5 = score(few, simulate_random_annotator(few, 3), uniform_assignment(2, 5), false);
    double scaled = rep5.overall_accuracy * 5;
    CHECK(scaled == doctest::Approx(std::round(scaled)));
  }

  TEST_CASE("duplicate responses: the first one counts") {
    auto a = uniform_assignment(3, 5);
    auto tasks = generate_tasks(a, 4, 2, 0);
    const auto& t = tasks.tasks[0];
    std::vector<Response> r = {{"x", 0, t.impostor_position, ""}, {"x", 0, t.impostor_position % 5 + 1, ""}};
    auto rep = score(tasks, r, a, false);
    CHECK(rep.responses_scored == 1);
    CHECK(rep.responses_ignored == 1);
    CHECK(rep.overall_accuracy == 1.0);
  }

  TEST_CASE("sessions: 25 tasks, 5 controls, real tasks dealt round robin") {
    auto a = uniform_assignment(5, 8);
    auto tasks = generate_tasks(a, 20, 1, 30);
    SessionDealer dealer(tasks, 4);
    std::map<std::uint32_t, int> dealt;
    for (int s = 0; s < 5; ++s) {
      auto plan = dealer.next("a" + std::to_string(s));
      REQUIRE(plan.task_ids.size() == 25);
      int controls = 0;
      for (auto id : plan.task_ids) {
        controls += tasks.tasks[id].is_control;
        if (!tasks.tasks[id].is_control) ++dealt[id];
      }
      CHECK(controls == 5);
    }
    CHECK(dealt.size() == 100);
    for (const auto& [id, n] : dealt) CHECK(n == 1);
  }

  TEST_CASE("task and response persistence") {
    test::TempDir dir;
    auto a = uniform_assignment(4, 5, 2);
    a.assignments.push_back(3);
    auto tasks = generate_tasks(a, 6, 9, 4);
    save_tasks(dir / "t.json", tasks);
    auto back = load_tasks(dir / "t.json");
    REQUIRE(back.tasks.size() == tasks.tasks.size());
    CHECK(back.K == tasks.K);
    CHECK(back.skipped_clusters == tasks.skipped_clusters);
    for (std::size_t i = 0; i < tasks.tasks.size(); ++i) {
      CHECK(back.tasks[i].host_images == tasks.tasks[i].host_images);
      CHECK(back.tasks[i].control_answer == tasks.tasks[i].control_answer);
    }
    std::vector<Response> r = {{"ann,1", 3, 2, "2026-01-02T03:04:05Z"}, {"b", 4, 5, ""}};
    test::write_file(dir / "r.csv", "annotator_id,task_id,chosen_position,timestamp\n");
    append_responses(dir / "r.csv", r);
    auto loaded = load_responses(dir / "r.csv");
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].annotator_id == "ann,1");
    CHECK(loaded[0].task_id == 3);
    CHECK(loaded[1].chosen_position == 5);
    test::write_file(dir / "bad.csv", "x,1,9,t\n");
    CHECK_THROWS_AS(load_responses(dir / "bad.csv"), Error);
  }
}
