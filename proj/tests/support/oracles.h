#pragma once

// Index-free reference implementations used as test oracles. Everything here
// works on flat edge lists with linear scans and global sorts so that it
// shares no code path with the library beyond the plain data types.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "gentkg/kg_store.h"
#include "gentkg/retriever.h"
#include "gentkg/rule_miner.h"

namespace gentkg::testing {

using BigFloat = boost::multiprecision::cpp_bin_float_50;

// p_u = exp(t_u - t) / sum_v exp(t_v - t), evaluated in 50-digit arithmetic
// straight from the definition.
inline std::vector<BigFloat> transition_oracle(const std::vector<TimeStep>& tu,
                                               TimeStep t) {
  std::vector<BigFloat> w;
  BigFloat total = 0;
  for (auto x : tu) {
    w.push_back(boost::multiprecision::exp(BigFloat(x - t)));
    total += w.back();
  }
  for (auto& x : w) x /= total;
  return w;
}

inline std::shared_ptr<SharedVocab> numbered_vocab(std::size_t entities,
                                                   std::size_t relations,
                                                   bool inverse) {
  auto v = std::make_shared<SharedVocab>();
  v->inverse = inverse;
  for (std::size_t i = 0; i < entities; ++i) {
    v->entities.intern("e" + std::to_string(i));
  }
  for (std::size_t i = 0; i < relations; ++i) {
    v->relations.intern("r" + std::to_string(i));
  }
  return v;
}

// Flat edge list of a graph, including any inverse edges.
inline std::vector<Quadruple> flat(const TemporalKG& kg) {
  return {kg.edges().begin(), kg.edges().end()};
}

struct Counts {
  std::uint64_t body_support = 0;
  std::uint64_t rule_support = 0;
};

inline Counts brute_confidence(const std::vector<Quadruple>& edges,
                               RelationId head, RelationId body) {
  std::set<std::tuple<EntityId, EntityId, TimeStep>> bodies;
  for (const auto& e : edges) {
    if (e.relation == body) bodies.insert({e.subject, e.object, e.t});
  }
  Counts c;
  for (const auto& [s, o, t1] : bodies) {
    ++c.body_support;
    for (const auto& e : edges) {
      if (e.relation == head && e.subject == s && e.object == o && e.t > t1) {
        ++c.rule_support;
        break;
      }
    }
  }
  return c;
}

// Reference retrieval: rank every candidate by a single priority key
// (window, group, recency, object), keep the first occurrence of each fact
// and the first N, then order for output.
inline std::vector<RetrievedFact> brute_retrieve(
    const std::vector<Quadruple>& edges, const RuleBank& bank, const Query& q,
    const RetrievalConfig& cfg) {
  if (q.t <= 0) return {};
  const TimeStep w = cfg.window ? std::min(*cfg.window, q.t) : q.t;

  std::vector<Provenance> groups{{0, q.relation, 1.0}};
  const auto rules = bank.rules_for(q.relation);
  for (std::size_t i = 0; i < rules.size(); ++i) {
    if (cfg.top_k && i >= *cfg.top_k) break;
    groups.push_back(
        {static_cast<std::uint32_t>(i + 1), rules[i].body, rules[i].confidence});
  }

  using Key = std::tuple<TimeStep, std::size_t, TimeStep, EntityId>;
  std::vector<std::pair<Key, RetrievedFact>> cands;
  for (const auto& e : edges) {
    if (e.subject != q.subject || e.t >= q.t) continue;
    if (!cfg.stepwise && e.t < q.t - w) continue;
    // Window index counted backwards from the query time.
    const TimeStep win = cfg.stepwise ? (q.t - 1 - e.t) / w : 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (groups[g].body == e.relation) {
        cands.push_back({Key{win, g, -e.t, e.object}, {e, groups[g]}});
      }
    }
  }
  std::sort(cands.begin(), cands.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<RetrievedFact> out;
  for (const auto& [key, rf] : cands) {
    if (out.size() == cfg.max_history) break;
    bool dup = false;
    for (const auto& x : out) dup = dup || x.fact == rf.fact;
    if (!dup) out.push_back(rf);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::make_tuple(a.fact.t, a.provenance.rank, a.fact.object) <
           std::make_tuple(b.fact.t, b.provenance.rank, b.fact.object);
  });
  return out;
}

// Reference scorer: sum of (bank confidence + 1 for the query relation) per
// object, ties by latest supporting time then lower id, top 10.
inline std::vector<EntityId> brute_score(const std::vector<RetrievedFact>& facts,
                                         const RuleBank& bank, const Query& q) {
  std::map<EntityId, std::pair<double, TimeStep>> score;
  for (const auto& rf : facts) {
    double w = rf.fact.relation == q.relation ? 1.0 : 0.0;
    for (const auto& r : bank.rules()) {
      if (r.head == q.relation && r.body == rf.fact.relation) w += r.confidence;
    }
    if (w <= 0) continue;
    auto& [s, latest] = score[rf.fact.object];
    s += w;
    latest = std::max(latest, rf.fact.t);
  }
  std::vector<std::tuple<double, TimeStep, EntityId>> order;
  for (const auto& [e, st] : score) order.push_back({-st.first, -st.second, e});
  std::sort(order.begin(), order.end());
  std::vector<EntityId> out;
  for (const auto& [neg, negt, e] : order) {
    if (out.size() == 10) break;
    out.push_back(e);
  }
  return out;
}

// Filtered rank of the gold object: entities ahead of gold that are true at
// (s, r, t) in `truth` are skipped.
inline std::optional<std::size_t> brute_filtered_rank(
    const std::vector<EntityId>& ranked, const Query& q, EntityId gold,
    const std::vector<Quadruple>& truth) {
  std::size_t rank = 0;
  for (EntityId e : ranked) {
    if (e == gold) return rank + 1;
    const bool co_true =
        std::any_of(truth.begin(), truth.end(), [&](const Quadruple& f) {
          return f.subject == q.subject && f.relation == q.relation &&
                 f.object == e && f.t == q.t;
        });
    if (!co_true) ++rank;
  }
  return std::nullopt;
}

}  // namespace gentkg::testing
