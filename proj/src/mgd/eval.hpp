#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mgd/corpus.hpp"
#include "mgd/spectral.hpp"

namespace mgd {

inline constexpr int kTaskImages = 5;
inline constexpr int kSessionTasks = 25;
inline constexpr int kSessionControls = 5;
inline constexpr int kMaxControlMisses = 1;

struct ImpostorTask {
  std::uint32_t task_id = 0;
  std::uint32_t host_cluster = 0;
  std::array<ImageId, 4> host_images{};
  ImageId impostor_image = 0;
  int impostor_position = 1;  // 1..5
  bool is_control = false;
  // Controls show one host image four times; the answer is known upfront.
  std::optional<int> control_answer;

  // Images in display order, positions 1..5 mapping to indices 0..4.
  std::array<ImageId, kTaskImages> slots() const;
};

struct TaskSet {
  std::vector<ImpostorTask> tasks;  // real tasks first, then controls; task_id = index
  std::map<std::uint32_t, std::size_t> skipped_clusters;  // cluster -> size (< 4 images)
  int K = 0;
  std::uint64_t seed = 0;
  std::size_t tasks_per_cluster = 0;

  const ImpostorTask* find(std::uint32_t task_id) const {
    return task_id < tasks.size() ? &tasks[task_id] : nullptr;
  }
};

// Per cluster with >= 4 images: 4 hosts without replacement, one impostor
// from the other clusters, uniform position. The overflow cluster counts as a
// cluster. `controls` control tasks are appended for session building.
TaskSet generate_tasks(const ClusterAssignment& assignment, int tasks_per_cluster = 200, std::uint64_t seed = 0,
                       int controls = 100);

struct Response {
  std::string annotator_id;
  std::uint32_t task_id = 0;
  int chosen_position = 0;
  std::string timestamp;
};

struct Qualification {
  std::vector<std::string> qualified;
  std::vector<std::string> discarded;
  std::map<std::string, int> control_misses;
};

// Misses = controls not answered correctly, out of five per session.
Qualification qualify_annotators(const TaskSet& tasks, const std::vector<Response>& responses);

struct ClusterTally {
  std::uint32_t cluster = 0;
  std::size_t images = 0;
  std::size_t answered = 0;
  std::size_t correct = 0;
};

struct ClusterScore {
  std::uint32_t cluster = 0;
  std::size_t images = 0;
  double p = 0;                 // image fraction
  std::size_t answered = 0;
  std::size_t correct = 0;
  std::optional<double> accuracy;
};

struct EvalReport {
  std::vector<ClusterScore> clusters;
  bool defined = false;  // false when no response was scored
  double avg_accuracy = 0;
  double normalized_avg_accuracy = 0;
  double normalized_delta = 0;
  double overall_accuracy = 0;  // correct / answered over all scored tasks
  double covered_weight = 0;    // sum of p_i over clusters with responses
  std::size_t clusters_with_responses = 0;
  std::size_t responses_scored = 0;
  std::size_t responses_ignored = 0;
  std::size_t annotators_qualified = 0;
  std::size_t annotators_discarded = 0;
};

// avg = mean acc_i over answered clusters; normalized = sum p_i acc_i over
// the same clusters, divided by their total weight.
EvalReport score_tallies(const std::vector<ClusterTally>& tallies);

// Scores non-control responses from qualified annotators only.
EvalReport score(const TaskSet& tasks, const std::vector<Response>& responses, const ClusterAssignment& assignment,
                 bool apply_qualification = true);

std::vector<Response> simulate_random_annotator(const TaskSet& tasks, std::uint64_t seed,
                                                const std::string& annotator_id = "random");

struct SessionPlan {
  std::string annotator_id;
  std::vector<std::uint32_t> task_ids;  // kSessionTasks entries, shuffled
};

// Deals real tasks round-robin from a seeded shuffle so repeated sessions
// cover the whole set, plus controls drawn at random.
class SessionDealer {
 public:
  SessionDealer(const TaskSet& tasks, std::uint64_t seed);
  SessionPlan next(const std::string& annotator_id);

 private:
  const TaskSet& tasks_;
  std::vector<std::uint32_t> real_, controls_;
  std::size_t cursor_ = 0;
  std::uint64_t state_;
};

void save_tasks(const std::filesystem::path& path, const TaskSet& tasks);
TaskSet load_tasks(const std::filesystem::path& path);

std::string response_line(const Response& r);
void append_responses(const std::filesystem::path& path, const std::vector<Response>& responses);
std::vector<Response> load_responses(const std::filesystem::path& path);

std::string report_json(const EvalReport& report, int indent = 2);

}  // namespace mgd
