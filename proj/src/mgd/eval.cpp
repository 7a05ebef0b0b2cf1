#include "mgd/eval.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "json.hpp"
#include "mgd/csv.hpp"
#include "mgd/error.hpp"

namespace mgd {

using nlohmann::json;

std::array<ImageId, kTaskImages> ImpostorTask::slots() const {
  std::array<ImageId, kTaskImages> out{};
  std::size_t h = 0;
  for (int pos = 1; pos <= kTaskImages; ++pos)
    out[static_cast<std::size_t>(pos - 1)] = pos == impostor_position ? impostor_image : host_images[h++];
  return out;
}

TaskSet generate_tasks(const ClusterAssignment& assignment, int tasks_per_cluster, std::uint64_t seed, int controls) {
  require(tasks_per_cluster >= 0 && controls >= 0, ErrorCode::kInvalidArgument, "task counts must be non-negative");
  const std::size_t clusters = static_cast<std::size_t>(assignment.K) + 1;
  std::vector<std::vector<ImageId>> members(clusters);
  for (std::size_t i = 0; i < assignment.assignments.size(); ++i) {
    auto c = assignment.assignments[i];
    require(c < clusters, ErrorCode::kInvalidArgument, "cluster id out of range");
    members[c].push_back(static_cast<ImageId>(i));
  }
  std::size_t non_empty = 0;
  for (const auto& m : members) non_empty += !m.empty();
  require(non_empty >= 2, ErrorCode::kPrecondition, "cannot form impostor: fewer than 2 non-empty clusters");

  // Images grouped by cluster; cluster c occupies [offset[c], offset[c+1]).
  std::vector<ImageId> by_cluster;
  std::vector<std::size_t> offset(clusters + 1, 0);
  for (std::size_t c = 0; c < clusters; ++c) {
    offset[c] = by_cluster.size();
    by_cluster.insert(by_cluster.end(), members[c].begin(), members[c].end());
  }
  offset[clusters] = by_cluster.size();

  std::mt19937_64 rng(seed);
  auto impostor_for = [&](std::size_t c) {
    std::size_t outside = by_cluster.size() - members[c].size();
    std::uniform_int_distribution<std::size_t> pick(0, outside - 1);
    std::size_t r = pick(rng);
    if (r >= offset[c]) r += members[c].size();
    return by_cluster[r];
  };
  std::uniform_int_distribution<int> position(1, kTaskImages);

  TaskSet out;
  out.K = assignment.K;
  out.seed = seed;
  out.tasks_per_cluster = static_cast<std::size_t>(tasks_per_cluster);
  for (std::size_t c = 0; c < clusters; ++c) {
    if (members[c].empty()) continue;
    if (members[c].size() < 4) {
      out.skipped_clusters[static_cast<std::uint32_t>(c)] = members[c].size();
      continue;
    }
    std::vector<ImageId> pool = members[c];
    for (int t = 0; t < tasks_per_cluster; ++t) {
      ImpostorTask task;
      task.task_id = static_cast<std::uint32_t>(out.tasks.size());
      task.host_cluster = static_cast<std::uint32_t>(c);
      for (std::size_t h = 0; h < 4; ++h) {
        std::uniform_int_distribution<std::size_t> pick(h, pool.size() - 1);
        std::swap(pool[h], pool[pick(rng)]);
        task.host_images[h] = pool[h];
      }
      task.impostor_image = impostor_for(c);
      task.impostor_position = position(rng);
      out.tasks.push_back(task);
    }
  }
  std::uniform_int_distribution<std::size_t> any(0, by_cluster.size() - 1);
  for (int t = 0; t < controls; ++t) {
    ImageId host = by_cluster[any(rng)];
    std::size_t c = assignment.assignments[host];
    ImpostorTask task;
    task.task_id = static_cast<std::uint32_t>(out.tasks.size());
    task.host_cluster = static_cast<std::uint32_t>(c);
    task.host_images.fill(host);
    task.impostor_image = impostor_for(c);
    task.impostor_position = position(rng);
    task.is_control = true;
    task.control_answer = task.impostor_position;
    out.tasks.push_back(task);
  }
  return out;
}

namespace {

// First response per (annotator, task) wins; later ones are dropped.
std::vector<const Response*> first_responses(const std::vector<Response>& responses, std::size_t* dropped) {
  std::set<std::pair<std::string, std::uint32_t>> seen;
  std::vector<const Response*> out;
  for (const auto& r : responses) {
    if (seen.insert({r.annotator_id, r.task_id}).second)
      out.push_back(&r);
    else if (dropped)
      ++*dropped;
  }
  return out;
}

}  // namespace

Qualification qualify_annotators(const TaskSet& tasks, const std::vector<Response>& responses) {
  std::map<std::string, int> correct;
  for (const Response* r : first_responses(responses, nullptr)) {
    correct.try_emplace(r->annotator_id, 0);
    const ImpostorTask* t = tasks.find(r->task_id);
    if (t && t->is_control && t->control_answer == r->chosen_position) ++correct[r->annotator_id];
  }
  Qualification q;
  for (const auto& [id, ok] : correct) {
    int misses = std::max(0, kSessionControls - ok);
    q.control_misses[id] = misses;
    (misses <= kMaxControlMisses ? q.qualified : q.discarded).push_back(id);
  }
  return q;
}

EvalReport score_tallies(const std::vector<ClusterTally>& tallies) {
  EvalReport rep;
  std::size_t total_images = 0;
  for (const auto& t : tallies) total_images += t.images;
  double acc_sum = 0, weighted = 0;
  std::size_t answered = 0, correct = 0;
  for (const auto& t : tallies) {
    require(t.correct <= t.answered, ErrorCode::kInvalidArgument, "more correct answers than answered tasks");
    ClusterScore s;
    s.cluster = t.cluster;
    s.images = t.images;
    s.p = total_images ? static_cast<double>(t.images) / static_cast<double>(total_images) : 0.0;
    s.answered = t.answered;
    s.correct = t.correct;
    if (t.answered > 0) {
      s.accuracy = static_cast<double>(t.correct) / static_cast<double>(t.answered);
      acc_sum += *s.accuracy;
      weighted += s.p * *s.accuracy;
      rep.covered_weight += s.p;
      ++rep.clusters_with_responses;
      answered += t.answered;
      correct += t.correct;
    }
    rep.clusters.push_back(s);
  }
  rep.responses_scored = answered;
  if (rep.clusters_with_responses == 0) return rep;
  rep.defined = true;
  rep.avg_accuracy = acc_sum / static_cast<double>(rep.clusters_with_responses);
  rep.normalized_avg_accuracy = rep.covered_weight > 0 ? weighted / rep.covered_weight : rep.avg_accuracy;
  rep.normalized_delta = rep.avg_accuracy - rep.normalized_avg_accuracy;
  rep.overall_accuracy = static_cast<double>(correct) / static_cast<double>(answered);
  return rep;
}

EvalReport score(const TaskSet& tasks, const std::vector<Response>& responses, const ClusterAssignment& assignment,
                 bool apply_qualification) {
  std::set<std::string> allowed;
  Qualification q;
  if (apply_qualification) {
    q = qualify_annotators(tasks, responses);
    allowed.insert(q.qualified.begin(), q.qualified.end());
  }
  std::vector<ClusterTally> tallies(static_cast<std::size_t>(assignment.K) + 1);
  for (std::size_t c = 0; c < tallies.size(); ++c) tallies[c].cluster = static_cast<std::uint32_t>(c);
  for (auto c : assignment.assignments) {
    require(c < tallies.size(), ErrorCode::kInvalidArgument, "cluster id out of range");
    ++tallies[c].images;
  }
  std::size_t ignored = 0;
  for (const Response* r : first_responses(responses, &ignored)) {
    const ImpostorTask* t = tasks.find(r->task_id);
    if (!t || t->is_control || t->host_cluster >= tallies.size() ||
        (apply_qualification && !allowed.count(r->annotator_id))) {
      ++ignored;
      continue;
    }
    auto& tally = tallies[t->host_cluster];
    ++tally.answered;
    tally.correct += r->chosen_position == t->impostor_position;
  }
  // Clusters without images carry no weight and no tasks.
  std::erase_if(tallies, [](const ClusterTally& t) { return t.images == 0; });
  EvalReport rep = score_tallies(tallies);
  rep.responses_ignored = ignored;
  rep.annotators_qualified = q.qualified.size();
  rep.annotators_discarded = q.discarded.size();
  return rep;
}

std::vector<Response> simulate_random_annotator(const TaskSet& tasks, std::uint64_t seed,
                                                const std::string& annotator_id) {
  require(!tasks.tasks.empty(), ErrorCode::kInvalidArgument, "no tasks to answer");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(1, kTaskImages);
  std::vector<Response> out;
  out.reserve(tasks.tasks.size());
  for (const auto& t : tasks.tasks) out.push_back({annotator_id, t.task_id, pick(rng), utc_timestamp()});
  return out;
}

SessionDealer::SessionDealer(const TaskSet& tasks, std::uint64_t seed) : tasks_(tasks), state_(seed) {
  for (const auto& t : tasks.tasks) (t.is_control ? controls_ : real_).push_back(t.task_id);
  std::mt19937_64 rng(seed);
  std::shuffle(real_.begin(), real_.end(), rng);
}

SessionPlan SessionDealer::next(const std::string& annotator_id) {
  SessionPlan plan;
  plan.annotator_id = annotator_id;
  const int real_count = kSessionTasks - kSessionControls;
  for (int i = 0; i < real_count && !real_.empty(); ++i) {
    plan.task_ids.push_back(real_[cursor_]);
    cursor_ = (cursor_ + 1) % real_.size();
  }
  std::mt19937_64 rng(state_++);
  if (!controls_.empty()) {
    std::vector<std::uint32_t> pool = controls_;
    std::shuffle(pool.begin(), pool.end(), rng);
    for (int i = 0; i < kSessionControls; ++i) plan.task_ids.push_back(pool[static_cast<std::size_t>(i) % pool.size()]);
  }
  std::shuffle(plan.task_ids.begin(), plan.task_ids.end(), rng);
  return plan;
}

void save_tasks(const std::filesystem::path& path, const TaskSet& tasks) {
  json doc;
  doc["K"] = tasks.K;
  doc["seed"] = tasks.seed;
  doc["tasks_per_cluster"] = tasks.tasks_per_cluster;
  json skipped = json::array();
  for (auto [c, size] : tasks.skipped_clusters) skipped.push_back({{"cluster", c}, {"size", size}});
  doc["skipped_clusters"] = skipped;
  json list = json::array();
  for (const auto& t : tasks.tasks) {
    json j{{"task_id", t.task_id},
           {"host_cluster", t.host_cluster},
           {"host_images", t.host_images},
           {"impostor_image", t.impostor_image},
           {"impostor_position", t.impostor_position},
           {"is_control", t.is_control}};
    j["control_answer"] = t.control_answer ? json(*t.control_answer) : json(nullptr);
    list.push_back(std::move(j));
  }
  doc["tasks"] = std::move(list);
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out << doc.dump(1) << '\n';
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed: " + path.string());
}

TaskSet load_tasks(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot read " + path.string());
  TaskSet out;
  try {
    json doc = json::parse(in);
    out.K = doc.at("K").get<int>();
    out.seed = doc.at("seed").get<std::uint64_t>();
    out.tasks_per_cluster = doc.at("tasks_per_cluster").get<std::size_t>();
    for (const auto& s : doc.at("skipped_clusters"))
      out.skipped_clusters[s.at("cluster").get<std::uint32_t>()] = s.at("size").get<std::size_t>();
    for (const auto& j : doc.at("tasks")) {
      ImpostorTask t;
      t.task_id = j.at("task_id").get<std::uint32_t>();
      t.host_cluster = j.at("host_cluster").get<std::uint32_t>();
      t.host_images = j.at("host_images").get<std::array<ImageId, 4>>();
      t.impostor_image = j.at("impostor_image").get<ImageId>();
      t.impostor_position = j.at("impostor_position").get<int>();
      t.is_control = j.at("is_control").get<bool>();
      if (!j.at("control_answer").is_null()) t.control_answer = j.at("control_answer").get<int>();
      require(t.task_id == out.tasks.size(), ErrorCode::kFormat, path.string() + ": task ids must be dense");
      require(t.impostor_position >= 1 && t.impostor_position <= kTaskImages, ErrorCode::kFormat,
              path.string() + ": impostor position out of range");
      out.tasks.push_back(t);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
  return out;
}

std::string response_line(const Response& r) {
  return csv::quote(r.annotator_id) + ',' + std::to_string(r.task_id) + ',' + std::to_string(r.chosen_position) +
         ',' + csv::quote(r.timestamp);
}

void append_responses(const std::filesystem::path& path, const std::vector<Response>& responses) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot append to " + path.string());
  for (const auto& r : responses) out << response_line(r) << '\n';
  out.flush();
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed: " + path.string());
}

std::vector<Response> load_responses(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot read " + path.string());
  std::vector<Response> out;
  std::vector<std::string> f;
  std::size_t line = 0;
  while (csv::read_row(in, f)) {
    ++line;
    if (f.size() == 1 && f[0].empty()) continue;
    if (line == 1 && !f.empty() && f[0] == "annotator_id") continue;
    require(f.size() == 4, ErrorCode::kFormat, path.string() + ": line " + std::to_string(line) + " needs 4 fields");
    Response r;
    r.annotator_id = f[0];
    try {
      r.task_id = static_cast<std::uint32_t>(std::stoul(f[1]));
      r.chosen_position = std::stoi(f[2]);
    } catch (const std::logic_error&) {
      fail(ErrorCode::kFormat, path.string() + ": line " + std::to_string(line) + " is not numeric");
    }
    require(r.chosen_position >= 1 && r.chosen_position <= kTaskImages, ErrorCode::kFormat,
            path.string() + ": line " + std::to_string(line) + " position out of range");
    r.timestamp = f[3];
    out.push_back(std::move(r));
  }
  return out;
}

std::string report_json(const EvalReport& report, int indent) {
  json doc;
  doc["defined"] = report.defined;
  auto metric = [&](double v) { return report.defined ? json(v) : json(nullptr); };
  doc["avg_accuracy"] = metric(report.avg_accuracy);
  doc["normalized_avg_accuracy"] = metric(report.normalized_avg_accuracy);
  doc["normalized_delta"] = metric(report.normalized_delta);
  doc["overall_accuracy"] = metric(report.overall_accuracy);
  doc["covered_weight"] = report.covered_weight;
  doc["clusters_with_responses"] = report.clusters_with_responses;
  doc["responses_scored"] = report.responses_scored;
  doc["responses_ignored"] = report.responses_ignored;
  doc["annotators_qualified"] = report.annotators_qualified;
  doc["annotators_discarded"] = report.annotators_discarded;
  json clusters = json::array();
  for (const auto& c : report.clusters)
    clusters.push_back({{"cluster", c.cluster},
                        {"images", c.images},
                        {"p", c.p},
                        {"answered", c.answered},
                        {"correct", c.correct},
                        {"accuracy", c.accuracy ? json(*c.accuracy) : json(nullptr)}});
  doc["clusters"] = std::move(clusters);
  return doc.dump(indent);
}

}  // namespace mgd
