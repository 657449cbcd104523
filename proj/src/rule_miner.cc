#include "gentkg/rule_miner.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <tuple>

#include "gentkg/parallel.h"

namespace gentkg {
namespace {

// Salts keep walk streams and grounding-sampling streams disjoint.
constexpr std::uint64_t kWalkSalt = 0x57414c4bULL;
constexpr std::uint64_t kGroundSalt = 0x47524e44ULL;

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

void MiningParams::validate() const {
  if (num_walks < 1) throw MiningError("num_walks must be >= 1");
  if (rule_length != 1) {
    throw MiningError("only rule_length 1 is supported, got " +
                      std::to_string(rule_length));
  }
  if (min_body_support < 1) throw MiningError("min_body_support must be >= 1");
  if (grounding_cap < 1) throw MiningError("grounding_cap must be >= 1");
}

bool rule_order_less(const TemporalRule& a, const TemporalRule& b) {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  if (a.rule_support != b.rule_support) return a.rule_support > b.rule_support;
  return a.body < b.body;
}

RuleBank::RuleBank(MiningParams params, std::vector<TemporalRule> rules)
    : params_(params), rules_(std::move(rules)) {
  std::sort(rules_.begin(), rules_.end(),
            [](const TemporalRule& a, const TemporalRule& b) {
              if (a.head != b.head) return a.head < b.head;
              return rule_order_less(a, b);
            });
  std::size_t begin = 0;
  while (begin < rules_.size()) {
    std::size_t end = begin;
    std::set<RelationId> bodies;
    while (end < rules_.size() && rules_[end].head == rules_[begin].head) {
      if (!bodies.insert(rules_[end].body).second) {
        throw MiningError("duplicate rule body " +
                          std::to_string(rules_[end].body) + " for head " +
                          std::to_string(rules_[end].head));
      }
      ++end;
    }
    ranges_.push_back({rules_[begin].head, {begin, end}});
    begin = end;
  }
}

std::span<const TemporalRule> RuleBank::rules_for(RelationId head) const {
  auto it = std::lower_bound(
      ranges_.begin(), ranges_.end(), head,
      [](const auto& entry, RelationId h) { return entry.first < h; });
  if (it == ranges_.end() || it->first != head) return {};
  const auto [b, e] = it->second;
  return std::span<const TemporalRule>(rules_).subspan(b, e - b);
}

std::optional<double> RuleBank::confidence(RelationId head,
                                           RelationId body) const {
  for (const auto& rule : rules_for(head)) {
    if (rule.body == body) return rule.confidence;
  }
  return std::nullopt;
}

std::vector<double> transition_distribution(
    std::span<const Quadruple> candidates, TimeStep t) {
  if (candidates.empty()) {
    throw std::invalid_argument("transition_distribution: no candidates");
  }
  TimeStep latest = candidates.front().t;
  for (const auto& c : candidates) {
    if (c.t >= t) {
      throw std::invalid_argument(
          "transition_distribution: candidate at t=" + std::to_string(c.t) +
          " is not before " + std::to_string(t));
    }
    latest = std::max(latest, c.t);
  }
  // exp(t_u - t) / sum exp(t_u' - t) == exp(t_u - latest) / sum exp(...).
  std::vector<double> p(candidates.size());
  double total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    p[i] = std::exp(static_cast<double>(candidates[i].t - latest));
    total += p[i];
  }
  for (auto& v : p) v /= total;
  return p;
}

std::optional<RelationId> sample_walk(const TemporalKG& kg,
                                      const Quadruple& head_edge,
                                      std::mt19937_64& rng) {
  if (!kg.contains(head_edge)) {
    throw std::invalid_argument("sample_walk: head edge is not in the graph");
  }
  auto positions = kg.positions_so(head_edge.subject, head_edge.object);
  auto edges = kg.edges();
  auto end = std::partition_point(
      positions.begin(), positions.end(),
      [&](std::uint32_t p) { return edges[p].t < head_edge.t; });
  if (end == positions.begin()) return std::nullopt;

  std::vector<Quadruple> candidates;
  candidates.reserve(static_cast<std::size_t>(end - positions.begin()));
  for (auto it = positions.begin(); it != end; ++it) {
    candidates.push_back(edges[*it]);
  }
  const auto p = transition_distribution(candidates, head_edge.t);
  const double u = uniform01(rng);
  double cumulative = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    cumulative += p[i];
    if (u < cumulative) return candidates[i].relation;
  }
  return candidates.back().relation;
}

std::optional<ConfidenceEstimate> estimate_confidence(
    const TemporalKG& kg, RelationId head, RelationId body,
    std::uint64_t grounding_cap, std::mt19937_64& rng) {
  auto groundings = kg.positions_r(body);
  if (grounding_cap < 1) {
    throw std::invalid_argument("estimate_confidence: grounding cap must be >= 1");
  }
  if (groundings.empty()) return std::nullopt;
  auto edges = kg.edges();

  ConfidenceEstimate est;
  auto count = [&](std::uint32_t pos) {
    const auto& g = edges[pos];
    ++est.body_support;
    if (kg.latest(g.subject, head, g.object) > g.t) ++est.rule_support;
  };
  if (groundings.size() <= grounding_cap) {
    for (auto pos : groundings) count(pos);
  } else {
    std::vector<std::uint32_t> sample;
    sample.reserve(grounding_cap);
    std::sample(groundings.begin(), groundings.end(),
                std::back_inserter(sample), grounding_cap, rng);
    for (auto pos : sample) count(pos);
  }
  est.confidence = static_cast<double>(est.rule_support) /
                   static_cast<double>(est.body_support);
  return est;
}

RuleBank learn_rules(const TemporalKG& kg, const MiningParams& params) {
  params.validate();
  if (kg.empty()) throw MiningError("cannot mine rules on an empty graph");

  const auto heads = kg.relations_present();
  std::vector<std::vector<TemporalRule>> per_head(heads.size());
  auto edges = kg.edges();

  parallel_for(heads.size(), params.threads, [&](std::size_t h) {
    const RelationId head = heads[h];
    auto positions = kg.positions_r(head);
    std::set<RelationId> bodies;
    for (std::uint32_t walk = 0; walk < params.num_walks; ++walk) {
      std::mt19937_64 rng(derive_seed(params.seed, kWalkSalt, head, walk));
      std::uniform_int_distribution<std::size_t> pick(0, positions.size() - 1);
      const auto& head_edge = edges[positions[pick(rng)]];
      if (auto body = sample_walk(kg, head_edge, rng)) bodies.insert(*body);
    }
    for (RelationId body : bodies) {
      std::mt19937_64 rng(derive_seed(params.seed, kGroundSalt, head, body));
      auto est = estimate_confidence(kg, head, body, params.grounding_cap, rng);
      if (!est || est->rule_support == 0 ||
          est->body_support < params.min_body_support) {
        continue;
      }
      per_head[h].push_back({head, body, est->body_support, est->rule_support,
                             est->confidence});
    }
  });

  std::vector<TemporalRule> rules;
  for (auto& group : per_head) {
    rules.insert(rules.end(), group.begin(), group.end());
  }
  return RuleBank(params, std::move(rules));
}

nlohmann::json to_json(const MiningParams& params) {
  return {{"num_walks", params.num_walks},
          {"rule_length", params.rule_length},
          {"min_body_support", params.min_body_support},
          {"grounding_cap", params.grounding_cap},
          {"seed", params.seed}};
}

MiningParams mining_params_from_json(const nlohmann::json& j) {
  MiningParams p;
  p.num_walks = j.value("num_walks", p.num_walks);
  p.rule_length = j.value("rule_length", p.rule_length);
  p.min_body_support = j.value("min_body_support", p.min_body_support);
  p.grounding_cap = j.value("grounding_cap", p.grounding_cap);
  p.seed = j.value("seed", p.seed);
  p.validate();
  return p;
}

nlohmann::json to_json(const RuleBank& bank) {
  auto rules = nlohmann::json::array();
  for (const auto& r : bank.rules()) {
    rules.push_back({{"head", r.head},
                     {"body", r.body},
                     {"body_support", r.body_support},
                     {"rule_support", r.rule_support},
                     {"confidence", r.confidence}});
  }
  return {{"params", to_json(bank.params())}, {"rules", std::move(rules)}};
}

RuleBank rule_bank_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("params") || !j.contains("rules") ||
      !j.at("rules").is_array()) {
    throw MiningError("rule bank: expected {params, rules: [...]}");
  }
  const auto params = mining_params_from_json(j.at("params"));
  std::vector<TemporalRule> rules;
  for (std::size_t i = 0; i < j.at("rules").size(); ++i) {
    const auto& item = j.at("rules")[i];
    TemporalRule r;
    try {
      r.head = item.at("head").get<RelationId>();
      r.body = item.at("body").get<RelationId>();
      r.body_support = item.at("body_support").get<std::uint64_t>();
      r.rule_support = item.at("rule_support").get<std::uint64_t>();
      r.confidence = item.at("confidence").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw MiningError("rule bank: rules[" + std::to_string(i) +
                        "]: " + e.what());
    }
    const auto where = "rule bank: rules[" + std::to_string(i) + "]: ";
    if (r.rule_support > r.body_support) {
      throw MiningError(where + "rule_support exceeds body_support");
    }
    if (r.body_support < params.min_body_support) {
      throw MiningError(where + "body_support below min_body_support");
    }
    if (r.rule_support < 1 || !(r.confidence > 0.0 && r.confidence <= 1.0)) {
      throw MiningError(where + "confidence must lie in (0, 1]");
    }
    const double expected = static_cast<double>(r.rule_support) /
                            static_cast<double>(r.body_support);
    if (std::abs(expected - r.confidence) > 1e-12) {
      throw MiningError(where + "confidence != rule_support / body_support");
    }
    rules.push_back(r);
  }
  RuleBank bank(params, rules);
  if (bank.rules() != rules) throw MiningError("rule bank: rules out of order");
  return bank;
}

}  // namespace gentkg
