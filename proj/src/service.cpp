#include "termreward/service.hpp"

#include <chrono>

// Eigen before httplib: <resolv.h> (pulled in by httplib) #defines _res,
// which Eigen uses as a parameter name.
#include "termreward/grpo.hpp"

#include <httplib.h>

#include "termreward/error.hpp"

namespace termreward {

namespace {

using nlohmann::json;

std::string error_body(std::string_view message, std::optional<std::size_t> position = std::nullopt,
                       std::optional<std::size_t> record = std::nullopt) {
  nlohmann::ordered_json j;
  j["error"] = std::string(message);
  if (position) j["position"] = *position;
  if (record) j["record"] = *record;
  return j.dump();
}

}  // namespace

RewardService::RewardService(RewardConfig config)
    : config_(std::move(config)), server_(std::make_unique<httplib::Server>()) {
  server_->Post("/v1/score", [this](const httplib::Request& req, httplib::Response& res) {
    auto [status, body] = handle_score(req.body);
    res.status = status;
    res.set_content(body, "application/json");
  });
  server_->Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(health().dump(), "application/json");
  });
}

RewardService::~RewardService() { stop(); }

void RewardService::load() {
  try {
    set_engine(ScoringEngine::load(config_));
  } catch (const std::exception& e) {
    std::lock_guard lock(mutex_);
    load_error_ = e.what();
    state_ = State::kFailed;
    throw;
  }
}

void RewardService::set_engine(ScoringEngine engine) {
  std::lock_guard lock(mutex_);
  engine_ = std::make_shared<const ScoringEngine>(std::move(engine));
  state_ = State::kReady;
}

std::shared_ptr<const ScoringEngine> RewardService::engine() const {
  std::lock_guard lock(mutex_);
  return engine_;
}

nlohmann::ordered_json RewardService::health() const {
  nlohmann::ordered_json j;
  const State s = state_.load();
  j["status"] = s == State::kReady ? "ready" : (s == State::kLoading ? "loading" : "failed");
  const auto eng = engine();
  auto resource = [&](bool configured, bool loaded) -> std::string {
    if (!configured) return "not-configured";
    if (loaded) return "loaded";
    return s == State::kFailed ? "failed" : "loading";
  };
  j["table"] = resource(config_.alignment.kind == AlignmentSourceKind::kTable, eng && eng->has_table());
  j["lexicon"] = resource(config_.lexicon.has_value(), eng && eng->has_lexicon());
  j["scorer"]["binding"] = config_.scorer.describe();
  if (config_.scorer.kind == ScorerKind::kPrecomputed)
    j["scorer"]["reachable"] = nullptr;
  else
    j["scorer"]["reachable"] = eng && eng->scorer() && eng->scorer()->reachable();
  j["config_hash"] = config_.hash();
  if (s == State::kFailed) {
    std::lock_guard lock(mutex_);
    j["error"] = load_error_;
  }
  return j;
}

std::pair<int, std::string> RewardService::handle_score(const std::string& body) const {
  const auto eng = engine();
  if (!eng) return {503, error_body(state_ == State::kFailed ? "service failed to load" : "service is loading")};

  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    return {400, error_body(std::string("malformed JSON body: ") + e.what(), e.byte)};
  }
  if (!doc.is_object() || !doc.contains("records") || !doc["records"].is_array())
    return {400, error_body("body must be an object with a 'records' array")};

  std::vector<ScoringRecord> records;
  records.reserve(doc["records"].size());
  for (std::size_t i = 0; i < doc["records"].size(); ++i) {
    try {
      records.push_back(parse_record(doc["records"][i]));
    } catch (const Error& e) {
      return {400, error_body(e.what(), std::nullopt, i)};
    }
  }

  std::optional<ScoringEngine> overridden;
  if (auto it = doc.find("config"); it != doc.end() && !it->is_null()) {
    try {
      overridden.emplace(eng->with_config(apply_overrides(eng->config(), *it)));
    } catch (const Error& e) {
      return {400, error_body(e.what())};
    }
  }
  const ScoringEngine& active = overridden ? *overridden : *eng;

  std::vector<RecordResult> results;
  try {
    results = active.score_batch(records);
  } catch (const ScorerUnavailable& e) {
    return {503, error_body(e.what())};
  }

  nlohmann::ordered_json out;
  out["results"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < results.size(); ++i) out["results"].push_back(result_to_json(results[i], i, true));

  if (doc.value("advantages", false)) {
    std::vector<double> rewards;
    for (const auto& r : results) {
      if (!r.ok()) {
        rewards.clear();
        break;
      }
      rewards.push_back(r.breakdown->r_all);
    }
    if (rewards.size() >= 2) {
      const auto adv = grpo::normalize_advantages(Eigen::Map<const Eigen::VectorXd>(
          rewards.data(), static_cast<Eigen::Index>(rewards.size())));
      out["advantages"] = std::vector<double>(adv.data(), adv.data() + adv.size());
    } else {
      out["advantages"] = nullptr;
    }
  }
  out["summary"] = summary_json(results, active.config())["summary"];
  return {200, out.dump()};
}

int RewardService::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

bool RewardService::serve() { return server_->listen_after_bind(); }

void RewardService::stop() {
  if (server_) server_->stop();
}

}  // namespace termreward
