#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gentkg/kg_store.h"

namespace gentkg {

class MiningError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A cyclic length-1 rule: (E1, head, E2, T2) <- (E1, body, E2, T1), T2 > T1.
struct TemporalRule {
  RelationId head = 0;
  RelationId body = 0;
  std::uint64_t body_support = 0;
  std::uint64_t rule_support = 0;
  double confidence = 0.0;

  friend bool operator==(const TemporalRule&, const TemporalRule&) = default;
};

struct MiningParams {
  std::uint32_t num_walks = 200;
  std::uint32_t rule_length = 1;
  std::uint64_t min_body_support = 2;
  std::uint64_t grounding_cap = 100000;
  std::uint64_t seed = 1;
  // Worker threads for mining; 0 picks hardware concurrency.
  unsigned threads = 0;

  void validate() const;
  friend bool operator==(const MiningParams&, const MiningParams&) = default;
};

// Rules grouped per head relation, each group ordered by confidence
// descending, then rule support descending, then body id ascending.
class RuleBank {
 public:
  RuleBank() = default;
  RuleBank(MiningParams params, std::vector<TemporalRule> rules);

  const MiningParams& params() const { return params_; }
  // Rules for `head` in bank order; empty if none.
  std::span<const TemporalRule> rules_for(RelationId head) const;
  // All rules, grouped by ascending head id.
  const std::vector<TemporalRule>& rules() const { return rules_; }
  std::size_t size() const { return rules_.size(); }
  // Confidence of (head <- body) if present.
  std::optional<double> confidence(RelationId head, RelationId body) const;

 private:
  MiningParams params_;
  std::vector<TemporalRule> rules_;
  std::vector<std::pair<RelationId, std::pair<std::size_t, std::size_t>>>
      ranges_;
};

bool rule_order_less(const TemporalRule& a, const TemporalRule& b);

// Exponentially weighted transition probabilities over walk candidates, all
// of which must be strictly earlier than `t`.
std::vector<double> transition_distribution(
    std::span<const Quadruple> candidates, TimeStep t);

// One temporal random walk step from `head_edge`. Candidates are the edges
// that close the cycle between the head's subject and object strictly before
// the head time. The returned relation r_b is oriented like the head, i.e.
// (subject, r_b, object, t') is in the graph.
std::optional<RelationId> sample_walk(const TemporalKG& kg,
                                      const Quadruple& head_edge,
                                      std::mt19937_64& rng);

struct ConfidenceEstimate {
  std::uint64_t body_support = 0;
  std::uint64_t rule_support = 0;
  double confidence = 0.0;
};

// Body groundings are the distinct (E1, body, E2, T1) edges. Enumerated
// exhaustively up to `grounding_cap`, otherwise a uniform sample
// of `grounding_cap` groundings drawn with `rng`. Returns nullopt when there
// are no body groundings.
std::optional<ConfidenceEstimate> estimate_confidence(
    const TemporalKG& kg, RelationId head, RelationId body,
    std::uint64_t grounding_cap, std::mt19937_64& rng);

RuleBank learn_rules(const TemporalKG& kg, const MiningParams& params);

nlohmann::json to_json(const MiningParams& params);
MiningParams mining_params_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RuleBank& bank);
// Validates rule invariants and bank order; throws MiningError.
RuleBank rule_bank_from_json(const nlohmann::json& j);

}  // namespace gentkg
