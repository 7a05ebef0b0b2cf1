#include "mgd/eval_server.hpp"

#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "mgd/error.hpp"

namespace mgd {

using nlohmann::json;

namespace {

std::string content_type(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".gif") return "image/gif";
  if (ext == ".webp") return "image/webp";
  if (ext == ".bmp") return "image/bmp";
  return "application/octet-stream";
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

struct EvalServer::Impl {
  CorpusSnapshot snapshot;
  TaskSet tasks;
  ClusterAssignment assignment;
  EvalServerConfig config;

  httplib::Server server;
  std::thread thread;
  int bound_port = -1;

  std::mutex mu;
  SessionDealer dealer;
  std::mt19937_64 ids;
  std::uint64_t session_counter = 0;
  std::map<std::string, SessionPlan> sessions;
  std::map<std::string, std::set<std::uint32_t>> session_tasks;
  std::set<std::pair<std::string, std::uint32_t>> answered;
  std::vector<Response> responses;

  Impl(CorpusSnapshot s, TaskSet t, ClusterAssignment a, EvalServerConfig c)
      : snapshot(std::move(s)), tasks(std::move(t)), assignment(std::move(a)), config(std::move(c)),
        dealer(tasks, config.seed), ids(config.seed ^ 0xa11ce5ULL) {
    require(!config.response_log.empty(), ErrorCode::kInvalidArgument, "response log path required");
    if (std::filesystem::exists(config.response_log)) {
      responses = load_responses(config.response_log);
      for (const auto& r : responses) answered.insert({r.annotator_id, r.task_id});
    } else {
      std::ofstream out(config.response_log, std::ios::binary);
      require(static_cast<bool>(out), ErrorCode::kIo, "cannot create " + config.response_log.string());
      out << "annotator_id,task_id,chosen_position,timestamp\n";
    }
    routes();
  }

  json session_json(const SessionPlan& plan) const {
    json list = json::array();
    for (auto id : plan.task_ids) {
      const ImpostorTask& t = tasks.tasks[id];
      json images = json::array();
      auto slots = t.slots();
      for (int pos = 1; pos <= kTaskImages; ++pos) {
        ImageId img = slots[static_cast<std::size_t>(pos - 1)];
        images.push_back({{"position", pos}, {"image_id", img}, {"url", "/api/image/" + std::to_string(img)}});
      }
      list.push_back({{"task_id", t.task_id}, {"images", std::move(images)}});
    }
    return {{"annotator_id", plan.annotator_id}, {"tasks", std::move(list)}};
  }

  std::string new_annotator_id() {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "a%06llu-%08llx", static_cast<unsigned long long>(++session_counter),
                  static_cast<unsigned long long>(ids() & 0xffffffffULL));
    return buf;
  }

  void routes() {
    server.Get("/api/session", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mu);
      if (req.has_param("annotator_id")) {
        auto it = sessions.find(req.get_param_value("annotator_id"));
        if (it != sessions.end()) return send_json(res, 200, session_json(it->second));
      }
      std::string id = new_annotator_id();
      SessionPlan plan = dealer.next(id);
      session_tasks[id] = {plan.task_ids.begin(), plan.task_ids.end()};
      auto [it, _] = sessions.emplace(id, std::move(plan));
      send_json(res, 200, session_json(it->second));
    });

    server.Get(R"(/api/image/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      unsigned long id = 0;
      try {
        id = std::stoul(req.matches[1].str());
      } catch (const std::exception&) {
        return send_json(res, 404, {{"error", "unknown image"}});
      }
      if (id >= snapshot.records.size()) return send_json(res, 404, {{"error", "unknown image"}});
      const auto& path = snapshot.records[id].path;
      std::ifstream in(path, std::ios::binary);
      if (!in) return send_json(res, 404, {{"error", "image file missing"}});
      std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      res.status = 200;
      res.set_content(std::move(bytes), content_type(path));
    });

    server.Post("/api/response", [this](const httplib::Request& req, httplib::Response& res) {
      Response r;
      try {
        json body = json::parse(req.body);
        r.annotator_id = body.at("annotator_id").get<std::string>();
        r.task_id = body.at("task_id").get<std::uint32_t>();
        r.chosen_position = body.at("chosen_position").get<int>();
      } catch (const json::exception& e) {
        return send_json(res, 400, {{"error", std::string("malformed body: ") + e.what()}});
      }
      if (r.chosen_position < 1 || r.chosen_position > kTaskImages)
        return send_json(res, 400, {{"error", "chosen_position must be 1..5"}});
      std::lock_guard lock(mu);
      // Checked first: the log replay knows answers but not sessions.
      if (answered.count({r.annotator_id, r.task_id})) return send_json(res, 409, {{"error", "duplicate response"}});
      auto st = session_tasks.find(r.annotator_id);
      if (st == session_tasks.end()) return send_json(res, 404, {{"error", "unknown annotator"}});
      if (!st->second.count(r.task_id)) return send_json(res, 400, {{"error", "task not in this session"}});
      r.timestamp = utc_timestamp();
      try {
        append_responses(config.response_log, {r});
      } catch (const Error& e) {
        return send_json(res, 500, {{"error", e.what()}});
      }
      answered.insert({r.annotator_id, r.task_id});
      responses.push_back(r);
      send_json(res, 200, {{"status", "recorded"}});
    });

    server.Get("/api/report", [this](const httplib::Request&, httplib::Response& res) {
      std::lock_guard lock(mu);
      EvalReport rep = score(tasks, responses, assignment);
      res.status = 200;
      res.set_content(report_json(rep), "application/json");
    });

    if (!config.ui_dir.empty()) {
      require(server.set_mount_point("/", config.ui_dir.string()), ErrorCode::kIo,
              "cannot serve UI directory " + config.ui_dir.string());
    }
  }
};

EvalServer::EvalServer(CorpusSnapshot snapshot, TaskSet tasks, ClusterAssignment assignment, EvalServerConfig config)
    : impl_(std::make_unique<Impl>(std::move(snapshot), std::move(tasks), std::move(assignment), std::move(config))) {}

EvalServer::~EvalServer() { stop(); }

int EvalServer::start() {
  require(!impl_->thread.joinable(), ErrorCode::kPrecondition, "server already started");
  auto& s = impl_->server;
  int port = impl_->config.port == 0 ? s.bind_to_any_port(impl_->config.host)
                                     : (s.bind_to_port(impl_->config.host, impl_->config.port) ? impl_->config.port : -1);
  require(port > 0, ErrorCode::kIo,
          "cannot bind " + impl_->config.host + ":" + std::to_string(impl_->config.port));
  impl_->bound_port = port;
  impl_->thread = std::thread([&s] { s.listen_after_bind(); });
  s.wait_until_ready();
  return port;
}

void EvalServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void EvalServer::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

int EvalServer::port() const { return impl_->bound_port; }

}  // namespace mgd
