#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "gentkg/kg_store.h"
#include "gentkg/prompter.h"
#include "gentkg/retriever.h"
#include "gentkg/rule_miner.h"

namespace gentkg {

inline constexpr std::size_t kMaxPredictions = 10;
inline constexpr const char* kEndpointEnv = "GENTKG_ENDPOINT";

struct GenParams {
  std::uint32_t max_new_tokens = 128;
  std::uint32_t num_sequences = 10;
  double temperature = 0.0;
  // Extra request fields forwarded verbatim (beam width, top_p, ...).
  nlohmann::json passthrough = nlohmann::json::object();
  std::chrono::milliseconds timeout{30000};
  std::uint32_t retry_budget = 3;
  std::chrono::milliseconds backoff{200};
  std::chrono::milliseconds max_backoff{5000};
  std::size_t max_in_flight = 8;

  void validate() const;
};

nlohmann::json to_json(const GenParams& p);
GenParams gen_params_from_json(const nlohmann::json& j);

enum class ClientErrorKind { kTransport, kMalformedResponse, kEndpoint };

class ClientError : public std::runtime_error {
 public:
  ClientError(ClientErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ClientErrorKind kind() const { return kind_; }

 private:
  ClientErrorKind kind_;
};

std::string to_string(ClientErrorKind kind);

struct Endpoint {
  std::string scheme_host_port;  // e.g. "http://127.0.0.1:8080"
  std::string path = "/";

  // Accepts "http://host[:port][/path]". Throws std::invalid_argument.
  static Endpoint parse(std::string_view url);
};

// Blocking client for the completion wire contract:
//   POST {"prompt", "max_new_tokens", "num_sequences", "temperature", ...}
//   -> {"sequences": [...]} | {"error": "..."}
// Transport failures, HTTP 429 and 5xx are retried with exponential backoff,
// at most 1 + retry_budget attempts per request.
class CompletionClient {
 public:
  CompletionClient(Endpoint endpoint, GenParams params);

  std::vector<std::string> generate(std::string_view prompt) const;

  struct BatchItem {
    std::vector<std::string> sequences;
    std::optional<ClientError> error;
  };
  // Sends every prompt with at most params.max_in_flight requests
  // outstanding. Results come back in input order.
  std::vector<BatchItem> generate_batch(
      std::span<const std::string> prompts) const;

  const GenParams& params() const { return params_; }

 private:
  Endpoint endpoint_;
  GenParams params_;
};

struct PredictionList {
  std::vector<EntityId> ranked;
  // Generation each ranked entity was read from.
  std::vector<std::string> raw_texts;
  std::size_t unresolved = 0;
};

// Display-name lookup for generated entity names.
class EntityResolver {
 public:
  explicit EntityResolver(const SharedVocab& vocab);
  std::optional<EntityId> find(std::string_view display) const;
  const SharedVocab& vocab() const { return *vocab_; }

 private:
  const SharedVocab* vocab_;
  std::unordered_map<std::string, EntityId> by_display_;
};

PredictionList parse_predictions(std::span<const std::string> completions,
                                 const Prompt& prompt,
                                 const EntityResolver& resolver);

// Serializes a ranked list back into completion strings ("n.name]" for
// entities in the prompt's index map, "name]" otherwise).
std::vector<std::string> render_predictions(const PredictionList& list,
                                            const Prompt& prompt,
                                            const SharedVocab& vocab);

// LLM-free predictor: score(o) sums, over history facts with object o, the
// bank confidence of (query.relation <- fact relation) plus 1 when the fact
// relation is the query relation. Ties go to the most recent supporting fact,
// then the lower entity id.
PredictionList rule_score_predict(const RetrievedHistory& history,
                                  const RuleBank& bank, const Query& query);

}  // namespace gentkg
