#include "gentkg/retriever.h"

#include <algorithm>
#include <tuple>
#include <unordered_set>

#include "gentkg/parallel.h"

namespace gentkg {

void RetrievalConfig::validate() const {
  if (window && *window < 1) {
    throw std::invalid_argument("retrieval window must be >= 1");
  }
  if (max_history < 1) {
    throw std::invalid_argument("max history length must be >= 1");
  }
}

RetrievedHistory retrieve(const TemporalKG& kg, const RuleBank& bank,
                          const Query& query, const RetrievalConfig& cfg) {
  cfg.validate();
  RetrievedHistory out{query, {}};
  const TimeStep t = query.t;
  const TimeStep w = cfg.window ? std::min(*cfg.window, t) : t;
  if (t <= 0 || w <= 0) return out;

  std::vector<Provenance> groups{{0, query.relation, 1.0}};
  auto rules = bank.rules_for(query.relation);
  const auto k = std::min(rules.size(), cfg.top_k.value_or(rules.size()));
  for (std::size_t i = 0; i < k; ++i) {
    groups.push_back({static_cast<std::uint32_t>(i + 1), rules[i].body,
                      rules[i].confidence});
  }

  std::vector<std::pair<TimeStep, TimeStep>> windows;
  if (cfg.stepwise) {
    for (TimeStep hi = t; hi > 0; hi -= w) {
      windows.emplace_back(std::max<TimeStep>(0, hi - w), hi);
    }
  } else {
    windows.emplace_back(t - w, t);
  }

  std::unordered_set<Quadruple, QuadrupleHash> seen;
  auto& selected = out.facts;
  auto full = [&] { return selected.size() >= cfg.max_history; };
  for (const auto& [lo, hi] : windows) {
    for (const auto& group : groups) {
      if (full()) break;
      auto facts = edges_for(kg, query.subject, group.body, lo, hi);
      // Most recent first; equal times keep ascending object ids.
      std::stable_sort(facts.begin(), facts.end(),
                       [](const Quadruple& a, const Quadruple& b) {
                         return a.t > b.t;
                       });
      for (const auto& f : facts) {
        if (full()) break;
        if (seen.insert(f).second) selected.push_back({f, group});
      }
    }
  }
  std::sort(selected.begin(), selected.end(),
            [](const RetrievedFact& a, const RetrievedFact& b) {
              return std::tie(a.fact.t, a.provenance.rank, a.fact.object) <
                     std::tie(b.fact.t, b.provenance.rank, b.fact.object);
            });
  return out;
}

std::vector<RetrievedHistory> retrieve_batch(const TemporalKG& kg,
                                             const RuleBank& bank,
                                             std::span<const Query> queries,
                                             const RetrievalConfig& cfg,
                                             unsigned threads) {
  cfg.validate();
  std::vector<RetrievedHistory> out(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t i) {
    out[i] = retrieve(kg, bank, queries[i], cfg);
  });
  return out;
}

nlohmann::json to_json(const Query& q) {
  nlohmann::json j{{"s", q.subject}, {"r", q.relation}, {"t", q.t}};
  if (q.gold) j["gold"] = *q.gold;
  return j;
}

Query query_from_json(const nlohmann::json& j) {
  Query q;
  q.subject = j.at("s").get<EntityId>();
  q.relation = j.at("r").get<RelationId>();
  q.t = j.at("t").get<TimeStep>();
  if (j.contains("gold") && !j.at("gold").is_null()) {
    q.gold = j.at("gold").get<EntityId>();
  }
  return q;
}

nlohmann::json to_json(const RetrievalConfig& cfg) {
  nlohmann::json j{{"max_history", cfg.max_history},
                   {"stepwise", cfg.stepwise}};
  j["window"] = cfg.window ? nlohmann::json(*cfg.window) : nlohmann::json();
  j["top_k"] = cfg.top_k ? nlohmann::json(*cfg.top_k) : nlohmann::json();
  return j;
}

RetrievalConfig retrieval_config_from_json(const nlohmann::json& j) {
  RetrievalConfig cfg;
  if (j.contains("window") && !j.at("window").is_null()) {
    cfg.window = j.at("window").get<TimeStep>();
  }
  if (j.contains("top_k") && !j.at("top_k").is_null()) {
    cfg.top_k = j.at("top_k").get<std::size_t>();
  }
  cfg.max_history = j.value("max_history", cfg.max_history);
  cfg.stepwise = j.value("stepwise", cfg.stepwise);
  cfg.validate();
  return cfg;
}

nlohmann::json to_json(const RetrievedHistory& h) {
  auto facts = nlohmann::json::array();
  for (const auto& f : h.facts) {
    nlohmann::json item{{"s", f.fact.subject},
                        {"r", f.fact.relation},
                        {"o", f.fact.object},
                        {"t", f.fact.t}};
    if (f.provenance.is_head()) {
      item["provenance"] = "rule-head";
    } else {
      item["provenance"] = "rule-body";
      item["rank"] = f.provenance.rank;
      item["body"] = f.provenance.body;
      item["confidence"] = f.provenance.confidence;
    }
    facts.push_back(std::move(item));
  }
  return {{"query", to_json(h.query)}, {"facts", std::move(facts)}};
}

RetrievedHistory history_from_json(const nlohmann::json& j) {
  RetrievedHistory h;
  h.query = query_from_json(j.at("query"));
  for (const auto& item : j.at("facts")) {
    RetrievedFact f;
    f.fact = {item.at("s").get<EntityId>(), item.at("r").get<RelationId>(),
              item.at("o").get<EntityId>(), item.at("t").get<TimeStep>()};
    const auto kind = item.at("provenance").get<std::string>();
    if (kind == "rule-head") {
      f.provenance = {0, f.fact.relation, 1.0};
    } else if (kind == "rule-body") {
      f.provenance = {item.at("rank").get<std::uint32_t>(),
                      item.at("body").get<RelationId>(),
                      item.at("confidence").get<double>()};
    } else {
      throw std::invalid_argument("unknown provenance '" + kind + "'");
    }
    h.facts.push_back(f);
  }
  return h;
}

}  // namespace gentkg
