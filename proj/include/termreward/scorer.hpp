#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "termreward/config.hpp"

namespace httplib {
class Server;
}

namespace termreward {

/// One (source, reference, hypothesis) triple. The reference may be empty
/// for reference-free scorers.
struct ScoreItem {
  std::string src;
  std::string ref;
  std::string hyp;
};

/// Source of raw semantic scores. Implementations never round; rounding is
/// applied when rewards are combined.
class SemanticScorer {
 public:
  virtual ~SemanticScorer() = default;

  /// One score per item, same order. Throws ScorerUnavailable on transport
  /// or protocol failure.
  virtual std::vector<double> score(std::span<const ScoreItem> items) const = 0;
  virtual bool reachable() const = 0;
  virtual std::string describe() const = 0;
};

class ConstantScorer final : public SemanticScorer {
 public:
  explicit ConstantScorer(double value) : value_(value) {}
  std::vector<double> score(std::span<const ScoreItem> items) const override {
    return std::vector<double>(items.size(), value_);
  }
  bool reachable() const override { return true; }
  std::string describe() const override;

 private:
  double value_;
};

/// Client for `POST /v1/semantic-score` and `GET /v1/health`.
///
/// Items are sent in chunks of `batch_size`; at most `max_in_flight` chunks
/// are outstanding at once. Failed chunks are retried `retries` times.
class HttpScorer final : public SemanticScorer {
 public:
  explicit HttpScorer(ScorerBinding binding);
  std::vector<double> score(std::span<const ScoreItem> items) const override;
  bool reachable() const override;
  std::string describe() const override { return binding_.describe(); }

 private:
  std::vector<double> score_chunk(std::span<const ScoreItem> items) const;

  ScorerBinding binding_;
  std::string host_;
  int port_ = 80;
};

/// Scorer for a binding; nullptr for `precomputed`.
std::shared_ptr<const SemanticScorer> make_scorer(const ScorerBinding& binding);

// Wire format shared with external scorer sidecars.

nlohmann::json score_request_json(std::span<const ScoreItem> items, const std::string& model);

/// Validates a response body: `scores` must hold exactly `expected` finite
/// numbers. Throws ScorerUnavailable otherwise.
std::vector<double> parse_score_response(const nlohmann::json& body, std::size_t expected);

/// Installs the scorer wire protocol on `server`, answering every item with
/// `value`. Used for protocol tests and local dry runs.
void install_constant_scorer_routes(httplib::Server& server, double value, const std::string& model);

}  // namespace termreward
