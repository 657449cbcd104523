#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gentkg/kg_store.h"
#include "gentkg/rule_miner.h"

namespace gentkg {

struct Query {
  EntityId subject = 0;
  RelationId relation = 0;
  TimeStep t = 0;
  std::optional<EntityId> gold;

  friend bool operator==(const Query&, const Query&) = default;
};

inline Query query_of(const Quadruple& q) {
  return {q.subject, q.relation, q.t, q.object};
}

struct RetrievalConfig {
  // Window length; nullopt covers the full strict past [0, t).
  std::optional<TimeStep> window;
  // Number of rule bodies used; nullopt uses every rule for the relation.
  std::optional<std::size_t> top_k;
  std::size_t max_history = 50;
  // Walk back window by window instead of a
  // single collection over [t - w, t). Identical when the window is full.
  bool stepwise = false;

  void validate() const;
  friend bool operator==(const RetrievalConfig&,
                         const RetrievalConfig&) = default;
};

struct Provenance {
  // 0 for rule-head facts, i + 1 for the i-th rule body in bank order.
  std::uint32_t rank = 0;
  RelationId body = 0;
  double confidence = 1.0;

  bool is_head() const { return rank == 0; }
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct RetrievedFact {
  Quadruple fact;
  Provenance provenance;

  friend bool operator==(const RetrievedFact&, const RetrievedFact&) = default;
};

struct RetrievedHistory {
  Query query;
  // Ascending t, ties by provenance rank then object id.
  std::vector<RetrievedFact> facts;
};

RetrievedHistory retrieve(const TemporalKG& kg, const RuleBank& bank,
                          const Query& query, const RetrievalConfig& cfg);

std::vector<RetrievedHistory> retrieve_batch(const TemporalKG& kg,
                                             const RuleBank& bank,
                                             std::span<const Query> queries,
                                             const RetrievalConfig& cfg,
                                             unsigned threads = 0);

nlohmann::json to_json(const Query& q);
Query query_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RetrievalConfig& cfg);
RetrievalConfig retrieval_config_from_json(const nlohmann::json& j);
// One JSON-lines record: {query, facts: [{s, r, o, t, provenance, ...}]}.
nlohmann::json to_json(const RetrievedHistory& h);
RetrievedHistory history_from_json(const nlohmann::json& j);

}  // namespace gentkg
