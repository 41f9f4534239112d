#include "termreward/scorer.hpp"

#include <chrono>
#include <cmath>
#include <future>
#include <semaphore>
#include <sstream>

#include <httplib.h>

#include "termreward/error.hpp"

namespace termreward {

std::string ConstantScorer::describe() const {
  std::ostringstream os;
  os << "mock:" << value_;
  return os.str();
}

HttpScorer::HttpScorer(ScorerBinding binding) : binding_(std::move(binding)) {
  std::string rest = binding_.url;
  if (rest.rfind("http://", 0) == 0) rest = rest.substr(7);
  else if (rest.find("://") != std::string::npos)
    throw ConfigError("scorer endpoint must be an http:// URL: " + binding_.url);
  if (auto slash = rest.find('/'); slash != std::string::npos) rest = rest.substr(0, slash);
  host_ = rest;
  if (auto colon = rest.rfind(':'); colon != std::string::npos) {
    host_ = rest.substr(0, colon);
    try {
      port_ = std::stoi(rest.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("scorer endpoint has an invalid port: " + binding_.url);
    }
  }
  if (host_.empty()) throw ConfigError("scorer endpoint has no host: " + binding_.url);
}

namespace {

void set_timeouts(httplib::Client& client, int timeout_ms) {
  const auto sec = timeout_ms / 1000;
  const auto usec = (timeout_ms % 1000) * 1000;
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);
}

}  // namespace

std::vector<double> HttpScorer::score_chunk(std::span<const ScoreItem> items) const {
  const std::string body = score_request_json(items, binding_.model).dump();
  std::string last_error;
  for (std::size_t attempt = 0; attempt <= binding_.retries; ++attempt) {
    httplib::Client client(host_, port_);
    set_timeouts(client, binding_.timeout_ms);
    auto res = client.Post("/v1/semantic-score", body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    try {
      return parse_score_response(nlohmann::json::parse(res->body), items.size());
    } catch (const nlohmann::json::exception& e) {
      last_error = std::string("unparseable response: ") + e.what();
    }
  }
  throw ScorerUnavailable("semantic scorer at " + binding_.url + " failed: " + last_error);
}

std::vector<double> HttpScorer::score(std::span<const ScoreItem> items) const {
  std::vector<double> out(items.size(), 0.0);
  if (items.empty()) return out;
  const std::size_t chunk = std::max<std::size_t>(1, binding_.batch_size);
  std::counting_semaphore<> slots(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, binding_.max_in_flight)));
  std::vector<std::future<void>> pending;
  for (std::size_t begin = 0; begin < items.size(); begin += chunk) {
    const std::size_t n = std::min(chunk, items.size() - begin);
    slots.acquire();
    pending.push_back(std::async(std::launch::async, [&, begin, n] {
      struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
      } release{slots};
      auto scores = score_chunk(items.subspan(begin, n));
      std::copy(scores.begin(), scores.end(), out.begin() + static_cast<std::ptrdiff_t>(begin));
    }));
  }
  // Drain every request before rethrowing so no task outlives `out`.
  std::exception_ptr failure;
  for (auto& f : pending) {
    try {
      f.get();
    } catch (...) {
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

bool HttpScorer::reachable() const {
  httplib::Client client(host_, port_);
  set_timeouts(client, std::min(binding_.timeout_ms, 2000));
  auto res = client.Get("/v1/health");
  return res && res->status == 200;
}

std::shared_ptr<const SemanticScorer> make_scorer(const ScorerBinding& binding) {
  switch (binding.kind) {
    case ScorerKind::kMock:
      return std::make_shared<ConstantScorer>(binding.constant);
    case ScorerKind::kEndpoint:
      return std::make_shared<HttpScorer>(binding);
    case ScorerKind::kPrecomputed:
      return nullptr;
  }
  return nullptr;
}

nlohmann::json score_request_json(std::span<const ScoreItem> items, const std::string& model) {
  nlohmann::json j;
  j["model"] = model;
  j["items"] = nlohmann::json::array();
  for (const auto& item : items) j["items"].push_back({{"src", item.src}, {"ref", item.ref}, {"hyp", item.hyp}});
  return j;
}

std::vector<double> parse_score_response(const nlohmann::json& body, std::size_t expected) {
  if (!body.is_object() || !body.contains("scores") || !body["scores"].is_array())
    throw ScorerUnavailable("scorer response lacks a 'scores' array");
  const auto& scores = body["scores"];
  if (scores.size() != expected)
    throw ScorerUnavailable("scorer returned " + std::to_string(scores.size()) + " scores for " +
                            std::to_string(expected) + " items");
  std::vector<double> out;
  out.reserve(expected);
  for (const auto& s : scores) {
    if (!s.is_number()) throw ScorerUnavailable("scorer returned a non-numeric score");
    const double v = s.get<double>();
    if (!std::isfinite(v)) throw ScorerUnavailable("scorer returned a non-finite score");
    out.push_back(v);
  }
  return out;
}

void install_constant_scorer_routes(httplib::Server& server, double value, const std::string& model) {
  server.Post("/v1/semantic-score", [value, model](const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::parse_error& e) {
      res.status = 400;
      res.set_content(nlohmann::json{{"error", e.what()}, {"position", e.byte}}.dump(), "application/json");
      return;
    }
    if (!body.contains("items") || !body["items"].is_array()) {
      res.status = 400;
      res.set_content(R"({"error":"missing items array"})", "application/json");
      return;
    }
    const auto n = body["items"].size();
    nlohmann::json out;
    out["model"] = body.value("model", model);
    out["scores"] = std::vector<double>(n, value);
    out["latency_ms"] = std::vector<double>(n, 0.0);
    res.set_content(out.dump(), "application/json");
  });
  server.Get("/v1/health", [model](const httplib::Request&, httplib::Response& res) {
    res.set_content(nlohmann::json{{"status", "ready"}, {"model", model}}.dump(), "application/json");
  });
}

}  // namespace termreward
