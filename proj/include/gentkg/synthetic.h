#pragma once

#include <cstdint>

#include "gentkg/kg_store.h"

namespace gentkg {

// Generator for a small graph with one planted implication
// (E1, body, E2, T) => (E1, head, E2, T + 1) with probability `follow_p`.
// Entities are split in two blocks: the planted relations live on pairs of
// the first block, the noise relations on pairs of the second, each noise
// relation with `noise_events` edges at uniform times.
struct PlantedSpec {
  std::uint32_t entities = 20;
  std::uint32_t relations = 5;  // body, head, then noise relations
  std::uint32_t body_events = 2000;
  double follow_p = 0.8;
  std::uint32_t noise_events = 30;
  TimeStep time_span = 100;
  // Train covers t < train_frac * span, valid up to valid_frac, test after.
  double train_frac = 0.8;
  double valid_frac = 0.9;
  bool inverse = true;
  std::uint64_t seed = 7;
};

inline constexpr RelationId kPlantedBody = 0;
inline constexpr RelationId kPlantedHead = 1;

Dataset make_planted_dataset(const PlantedSpec& spec = {});

// Uniform-time random graph with Zipf-like entity popularity; for load and
// throughput tests.
struct RandomGraphSpec {
  std::uint32_t entities = 7128;
  std::uint32_t relations = 230;
  std::uint32_t edges = 74854;
  TimeStep time_span = 365;
  double zipf_exponent = 1.0;
  bool inverse = true;
  std::uint64_t seed = 11;
};

Dataset make_random_dataset(const RandomGraphSpec& spec);

}  // namespace gentkg
