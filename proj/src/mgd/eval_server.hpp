#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "mgd/corpus.hpp"
#include "mgd/eval.hpp"

namespace mgd {

struct EvalServerConfig {
  std::string host = "127.0.0.1";
  int port = 0;  // 0 picks a free port
  std::filesystem::path response_log;
  std::filesystem::path ui_dir;  // served at / when set
  std::uint64_t seed = 0;
};

// HTTP front end for annotation sessions:
//   GET  /api/session[?annotator_id=]   new (or resumed) 25-task session
//   GET  /api/image/{id}                image bytes
//   POST /api/response                  200 accepted, 409 duplicate
//   GET  /api/report                    current EvalReport as JSON
// Responses are appended to the log one line per accept; an existing log is
// replayed at start so duplicates stay rejected across restarts.
class EvalServer {
 public:
  EvalServer(CorpusSnapshot snapshot, TaskSet tasks, ClusterAssignment assignment, EvalServerConfig config);
  ~EvalServer();
  EvalServer(const EvalServer&) = delete;
  EvalServer& operator=(const EvalServer&) = delete;

  // Binds and serves on a background thread; returns the bound port.
  int start();
  void stop();
  // Blocks until stop() is called from elsewhere.
  void wait();
  int port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mgd
