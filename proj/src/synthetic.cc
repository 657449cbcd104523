#include "gentkg/synthetic.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace gentkg {
namespace {

std::shared_ptr<SharedVocab> numbered_vocab(std::uint32_t entities,
                                            std::vector<std::string> relations,
                                            bool inverse) {
  auto vocab = std::make_shared<SharedVocab>();
  vocab->inverse = inverse;
  for (std::uint32_t e = 0; e < entities; ++e) {
    vocab->entities.intern("entity_" + std::to_string(e));
  }
  for (const auto& r : relations) vocab->relations.intern(r);
  return vocab;
}

Dataset split_by_time(std::shared_ptr<SharedVocab> vocab,
                      std::vector<Quadruple> edges, TimeStep train_end,
                      TimeStep valid_end) {
  std::vector<Quadruple> train, valid, test;
  for (const auto& q : edges) {
    if (q.t < train_end) {
      train.push_back(q);
    } else if (q.t < valid_end) {
      valid.push_back(q);
    } else {
      test.push_back(q);
    }
  }
  return make_dataset(std::move(vocab), std::move(train), std::move(valid),
                      std::move(test));
}

}  // namespace

Dataset make_planted_dataset(const PlantedSpec& spec) {
  if (spec.entities < 4 || spec.relations < 2 || spec.time_span < 3) {
    throw std::invalid_argument("planted spec too small");
  }
  std::vector<std::string> names{"body", "head"};
  for (std::uint32_t r = 2; r < spec.relations; ++r) {
    names.push_back("noise_" + std::to_string(r - 1));
  }
  auto vocab = numbered_vocab(spec.entities, names, spec.inverse);

  std::mt19937_64 rng(spec.seed);
  const std::uint32_t block = spec.entities / 2;
  auto pair_in = [&](std::uint32_t lo, std::uint32_t hi) {
    std::uniform_int_distribution<std::uint32_t> pick(lo, hi - 1);
    const auto s = pick(rng);
    auto o = pick(rng);
    while (o == s) o = pick(rng);
    return std::pair{s, o};
  };
  std::uniform_int_distribution<TimeStep> body_time(0, spec.time_span - 2);
  std::uniform_int_distribution<TimeStep> any_time(0, spec.time_span - 1);
  std::bernoulli_distribution follows(spec.follow_p);

  std::vector<Quadruple> edges;
  for (std::uint32_t i = 0; i < spec.body_events; ++i) {
    const auto [s, o] = pair_in(0, block);
    const auto t = body_time(rng);
    edges.push_back({s, kPlantedBody, o, t});
    if (follows(rng)) edges.push_back({s, kPlantedHead, o, t + 1});
  }
  for (RelationId r = 2; r < spec.relations; ++r) {
    for (std::uint32_t i = 0; i < spec.noise_events; ++i) {
      const auto [s, o] = pair_in(block, spec.entities);
      edges.push_back({s, r, o, any_time(rng)});
    }
  }
  const auto span = static_cast<double>(spec.time_span);
  return split_by_time(vocab, std::move(edges),
                       static_cast<TimeStep>(spec.train_frac * span),
                       static_cast<TimeStep>(spec.valid_frac * span));
}

Dataset make_random_dataset(const RandomGraphSpec& spec) {
  std::vector<std::string> names;
  for (std::uint32_t r = 0; r < spec.relations; ++r) {
    names.push_back("relation_" + std::to_string(r));
  }
  auto vocab = numbered_vocab(spec.entities, names, spec.inverse);

  std::mt19937_64 rng(spec.seed);
  auto zipf = [&](std::uint32_t n) {
    std::vector<double> w(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      w[i] = 1.0 / std::pow(static_cast<double>(i + 1), spec.zipf_exponent);
    }
    return std::discrete_distribution<std::uint32_t>(w.begin(), w.end());
  };
  auto entity = zipf(spec.entities);
  auto relation = zipf(spec.relations);
  std::uniform_int_distribution<TimeStep> time(0, spec.time_span - 1);

  std::vector<Quadruple> edges(spec.edges);
  for (auto& q : edges) {
    q.subject = entity(rng);
    do {
      q.object = entity(rng);
    } while (q.object == q.subject && spec.entities > 1);
    q.relation = relation(rng);
    q.t = time(rng);
  }
  std::sort(edges.begin(), edges.end(), edge_less);
  const auto train_end = static_cast<TimeStep>(0.8 * static_cast<double>(spec.time_span));
  const auto valid_end = static_cast<TimeStep>(0.9 * static_cast<double>(spec.time_span));
  return split_by_time(vocab, std::move(edges), train_end, valid_end);
}

}  // namespace gentkg
