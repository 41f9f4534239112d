#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <string>

#include <json.hpp>

#include "termreward/config.hpp"
#include "termreward/pipeline.hpp"

namespace httplib {
class Server;
}

namespace termreward {

/// HTTP front end for ScoringEngine.
///
///   POST /v1/score   {"records": [...], "config": {overrides}, "advantages": bool}
///   GET  /v1/health
///
/// The server may start listening before load() finishes; until then score
/// requests get 503 and health reports "loading".
class RewardService {
 public:
  enum class State { kLoading, kReady, kFailed };

  explicit RewardService(RewardConfig config);
  ~RewardService();
  RewardService(const RewardService&) = delete;
  RewardService& operator=(const RewardService&) = delete;

  /// Loads table, lexicon and scorer. Safe to call from a background thread.
  void load();
  /// Installs an already-built engine (tests, embedding).
  void set_engine(ScoringEngine engine);

  State state() const noexcept { return state_.load(); }
  nlohmann::ordered_json health() const;

  /// Handles a /v1/score body. Returns (HTTP status, response body).
  std::pair<int, std::string> handle_score(const std::string& body) const;

  /// Binds to `port` (0 = any free port) and returns the bound port, or -1.
  int bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  bool serve();
  void stop();

 private:
  std::shared_ptr<const ScoringEngine> engine() const;

  RewardConfig config_;
  std::unique_ptr<httplib::Server> server_;
  std::atomic<State> state_{State::kLoading};
  mutable std::mutex mutex_;
  std::shared_ptr<const ScoringEngine> engine_;
  std::string load_error_;
};

}  // namespace termreward
