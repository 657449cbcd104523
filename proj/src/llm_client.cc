#include "gentkg/llm_client.h"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <map>
#include <thread>
#include <unordered_set>

#include <httplib.h>

#include "gentkg/parallel.h"

namespace gentkg {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

std::optional<std::uint32_t> parse_index(std::string_view s) {
  if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) {
        return c >= '0' && c <= '9';
      })) {
    return std::nullopt;
  }
  std::uint32_t n = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return n;
}

// Sequences from a response body, or a ClientError describing why not.
std::vector<std::string> decode_response(const std::string& body, int status,
                                         std::size_t limit) {
  auto j = nlohmann::json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) {
    throw ClientError(ClientErrorKind::kMalformedResponse,
                      "response (HTTP " + std::to_string(status) +
                          ") is not a JSON object");
  }
  if (j.contains("error")) {
    const auto& e = j.at("error");
    throw ClientError(ClientErrorKind::kEndpoint,
                      "endpoint error (HTTP " + std::to_string(status) +
                          "): " + (e.is_string() ? e.get<std::string>()
                                                 : e.dump()));
  }
  if (status < 200 || status >= 300) {
    throw ClientError(ClientErrorKind::kEndpoint,
                      "endpoint returned HTTP " + std::to_string(status));
  }
  if (!j.contains("sequences") || !j.at("sequences").is_array()) {
    throw ClientError(ClientErrorKind::kMalformedResponse,
                      "response lacks a 'sequences' array");
  }
  std::vector<std::string> out;
  for (const auto& s : j.at("sequences")) {
    if (!s.is_string()) {
      throw ClientError(ClientErrorKind::kMalformedResponse,
                        "non-string entry in 'sequences'");
    }
    if (out.size() < limit) out.push_back(s.get<std::string>());
  }
  return out;
}

}  // namespace

void GenParams::validate() const {
  if (num_sequences < 1) throw std::invalid_argument("num_sequences must be >= 1");
  if (max_new_tokens < 1) throw std::invalid_argument("max_new_tokens must be >= 1");
  if (max_in_flight < 1) throw std::invalid_argument("max_in_flight must be >= 1");
  if (timeout.count() < 1) throw std::invalid_argument("timeout must be positive");
  if (!passthrough.is_object()) {
    throw std::invalid_argument("passthrough parameters must be an object");
  }
}

nlohmann::json to_json(const GenParams& p) {
  return {{"max_new_tokens", p.max_new_tokens},
          {"num_sequences", p.num_sequences},
          {"temperature", p.temperature},
          {"passthrough", p.passthrough},
          {"timeout_ms", p.timeout.count()},
          {"retry_budget", p.retry_budget},
          {"backoff_ms", p.backoff.count()},
          {"max_backoff_ms", p.max_backoff.count()},
          {"max_in_flight", p.max_in_flight}};
}

GenParams gen_params_from_json(const nlohmann::json& j) {
  GenParams p;
  p.max_new_tokens = j.value("max_new_tokens", p.max_new_tokens);
  p.num_sequences = j.value("num_sequences", p.num_sequences);
  p.temperature = j.value("temperature", p.temperature);
  if (j.contains("passthrough")) p.passthrough = j.at("passthrough");
  p.timeout = std::chrono::milliseconds(j.value("timeout_ms", p.timeout.count()));
  p.retry_budget = j.value("retry_budget", p.retry_budget);
  p.backoff = std::chrono::milliseconds(j.value("backoff_ms", p.backoff.count()));
  p.max_backoff =
      std::chrono::milliseconds(j.value("max_backoff_ms", p.max_backoff.count()));
  p.max_in_flight = j.value("max_in_flight", p.max_in_flight);
  p.validate();
  return p;
}

std::string to_string(ClientErrorKind kind) {
  switch (kind) {
    case ClientErrorKind::kTransport: return "transport";
    case ClientErrorKind::kMalformedResponse: return "malformed-response";
    case ClientErrorKind::kEndpoint: return "endpoint";
  }
  return "transport";
}

Endpoint Endpoint::parse(std::string_view url) {
  constexpr std::string_view kScheme = "http://";
  if (url.substr(0, kScheme.size()) != kScheme) {
    throw std::invalid_argument("endpoint must start with http://: " +
                                std::string(url));
  }
  const auto rest = url.substr(kScheme.size());
  const auto slash = rest.find('/');
  Endpoint e;
  const auto authority = rest.substr(0, slash);
  if (authority.empty()) {
    throw std::invalid_argument("endpoint has no host: " + std::string(url));
  }
  e.scheme_host_port = std::string(kScheme) + std::string(authority);
  if (slash != std::string_view::npos) e.path = std::string(rest.substr(slash));
  return e;
}

CompletionClient::CompletionClient(Endpoint endpoint, GenParams params)
    : endpoint_(std::move(endpoint)), params_(std::move(params)) {
  params_.validate();
}

std::vector<std::string> CompletionClient::generate(
    std::string_view prompt) const {
  nlohmann::json request = params_.passthrough;
  request["prompt"] = prompt;
  request["max_new_tokens"] = params_.max_new_tokens;
  request["num_sequences"] = params_.num_sequences;
  request["temperature"] = params_.temperature;
  const auto body = request.dump();

  httplib::Client http(endpoint_.scheme_host_port);
  http.set_connection_timeout(params_.timeout);
  http.set_read_timeout(params_.timeout);
  http.set_write_timeout(params_.timeout);

  std::string last_error;
  std::optional<ClientError> last_endpoint_error;
  const std::uint32_t attempts = 1 + params_.retry_budget;
  for (std::uint32_t attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) {
      auto delay = params_.backoff * (std::int64_t{1} << std::min(attempt - 1, 20u));
      std::this_thread::sleep_for(std::min(delay, params_.max_backoff));
    }
    auto res = http.Post(endpoint_.path, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      last_endpoint_error.reset();
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      try {
        decode_response(res->body, res->status, params_.num_sequences);
        last_endpoint_error.reset();
      } catch (const ClientError& e) {
        if (e.kind() == ClientErrorKind::kEndpoint) {
          last_endpoint_error = e;
        } else {
          last_endpoint_error.reset();
        }
      }
      continue;
    }
    return decode_response(res->body, res->status, params_.num_sequences);
  }
  if (last_endpoint_error) throw *last_endpoint_error;
  throw ClientError(ClientErrorKind::kTransport,
                    endpoint_.scheme_host_port + endpoint_.path + ": " +
                        last_error + " after " + std::to_string(attempts) +
                        " attempt(s)");
}

std::vector<CompletionClient::BatchItem> CompletionClient::generate_batch(
    std::span<const std::string> prompts) const {
  std::vector<BatchItem> out(prompts.size());
  // Each worker holds one request at a time, so the worker count is the
  // in-flight bound.
  const auto workers = static_cast<unsigned>(
      std::min(params_.max_in_flight, std::max<std::size_t>(1, prompts.size())));
  parallel_for(prompts.size(), workers, [&](std::size_t i) {
    try {
      out[i].sequences = generate(prompts[i]);
    } catch (const ClientError& e) {
      out[i].error = e;
    }
  });
  return out;
}

EntityResolver::EntityResolver(const SharedVocab& vocab) : vocab_(&vocab) {
  for (EntityId id = 0; id < vocab.entities.size(); ++id) {
    by_display_.emplace(display_name(vocab.entity_name(id)), id);
  }
}

std::optional<EntityId> EntityResolver::find(std::string_view display) const {
  auto it = by_display_.find(display_name(display));
  if (it == by_display_.end()) return std::nullopt;
  return it->second;
}

PredictionList parse_predictions(std::span<const std::string> completions,
                                 const Prompt& prompt,
                                 const EntityResolver& resolver) {
  PredictionList out;
  std::unordered_set<EntityId> seen;
  const auto& vocab = resolver.vocab();
  const bool indexed = prompt.format == PromptFormat::kIndex;

  for (const auto& completion : completions) {
    std::string_view text = trim(completion);
    text = trim(text.substr(0, text.find_first_of("]\n")));

    std::optional<EntityId> resolved;
    const auto dot = text.find('.');
    if (indexed && dot != std::string_view::npos) {
      const auto index = parse_index(text.substr(0, dot));
      const auto name = trim(text.substr(dot + 1));
      if (index) {
        auto entity = prompt.entity_at(*index);
        if (entity && display_name(vocab.entity_name(*entity)) ==
                          display_name(name)) {
          resolved = entity;
        } else {
          resolved = resolver.find(name);
        }
      }
    }
    if (!resolved && indexed) {
      if (auto index = parse_index(text)) resolved = prompt.entity_at(*index);
    }
    if (!resolved && !text.empty()) {
      const bool looks_indexed =
          indexed && dot != std::string_view::npos &&
          parse_index(text.substr(0, dot)).has_value();
      if (!looks_indexed) resolved = resolver.find(text);
    }

    if (!resolved || *resolved >= vocab.entities.size()) {
      ++out.unresolved;
      continue;
    }
    if (out.ranked.size() < kMaxPredictions && seen.insert(*resolved).second) {
      out.ranked.push_back(*resolved);
      out.raw_texts.push_back(completion);
    }
  }
  return out;
}

std::vector<std::string> render_predictions(const PredictionList& list,
                                            const Prompt& prompt,
                                            const SharedVocab& vocab) {
  std::vector<std::string> out;
  for (EntityId e : list.ranked) {
    std::string s;
    if (prompt.format == PromptFormat::kIndex) {
      auto it = prompt.index_map.find(e);
      if (it != prompt.index_map.end()) s = std::to_string(it->second) + ".";
    }
    out.push_back(s + display_name(vocab.entity_name(e)) + "]");
  }
  return out;
}

PredictionList rule_score_predict(const RetrievedHistory& history,
                                  const RuleBank& bank, const Query& query) {
  struct Score {
    double score = 0.0;
    TimeStep latest = -1;
  };
  std::map<EntityId, Score> scores;
  for (const auto& rf : history.facts) {
    const auto& f = rf.fact;
    double w = bank.confidence(query.relation, f.relation).value_or(0.0);
    if (f.relation == query.relation) w += 1.0;
    if (w <= 0.0) continue;
    auto& s = scores[f.object];
    s.score += w;
    s.latest = std::max(s.latest, f.t);
  }
  std::vector<std::pair<EntityId, Score>> ranked(scores.begin(), scores.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second.score != b.second.score) return a.second.score > b.second.score;
    if (a.second.latest != b.second.latest) {
      return a.second.latest > b.second.latest;
    }
    return a.first < b.first;
  });
  PredictionList out;
  for (const auto& [entity, score] : ranked) {
    if (out.ranked.size() == kMaxPredictions) break;
    out.ranked.push_back(entity);
    out.raw_texts.push_back("score=" + std::to_string(score.score));
  }
  return out;
}

}  // namespace gentkg
