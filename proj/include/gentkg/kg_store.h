#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace gentkg {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;
using TimeStep = std::int64_t;

inline constexpr TimeStep kTimeInfinity = std::numeric_limits<TimeStep>::max();

struct Quadruple {
  EntityId subject = 0;
  RelationId relation = 0;
  EntityId object = 0;
  TimeStep t = 0;

  friend bool operator==(const Quadruple&, const Quadruple&) = default;
};

// Canonical edge order: (t, subject, relation, object).
bool edge_less(const Quadruple& a, const Quadruple& b);

struct QuadrupleHash {
  std::size_t operator()(const Quadruple& q) const noexcept;
};

class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Append-only name <-> dense id table.
class Vocabulary {
 public:
  // Returns the existing id for `name` or assigns the next dense id.
  std::uint32_t intern(std::string_view name);
  // Places `name` at an explicit id (id-map files); gaps are not allowed once
  // loading finishes.
  void assign(std::string_view name, std::uint32_t id);

  const std::string& name(std::uint32_t id) const { return names_.at(id); }
  const std::uint32_t* find(std::string_view name) const;
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> ids_;
};

// Entity and relation tables shared by every split of one dataset. Inverse
// relations are not stored: when enabled they occupy ids
// [num_base_relations, 2 * num_base_relations) and render as "inv_<name>".
struct SharedVocab {
  Vocabulary entities;
  Vocabulary relations;
  bool inverse = false;

  std::size_t num_base_relations() const { return relations.size(); }
  std::size_t num_relations() const {
    return inverse ? 2 * relations.size() : relations.size();
  }
  bool is_inverse(RelationId r) const { return r >= relations.size(); }
  RelationId inverse_of(RelationId r) const;
  std::string relation_name(RelationId r) const;
  const std::string& entity_name(EntityId e) const {
    return entities.name(e);
  }
};

// Immutable, temporally indexed edge store. Edges are deduplicated and sorted
// by (t, subject, relation, object); every index list holds edge positions in
// ascending order, which is ascending time with object-id ties inside a
// (subject, relation) bucket.
class TemporalKG {
 public:
  TemporalKG() = default;
  // `edges` must hold base relations only; inverse edges are added here when
  // the vocabulary has inverse augmentation on.
  TemporalKG(std::shared_ptr<const SharedVocab> vocab,
             std::vector<Quadruple> edges);

  const SharedVocab& vocab() const { return *vocab_; }
  std::shared_ptr<const SharedVocab> shared_vocab() const { return vocab_; }

  std::span<const Quadruple> edges() const { return edges_; }
  std::size_t size() const { return edges_.size(); }
  bool empty() const { return edges_.empty(); }
  // Number of edges with a base relation.
  std::size_t num_original() const { return num_original_; }
  std::size_t dropped_duplicates() const { return dropped_duplicates_; }
  TimeStep t_max() const { return t_max_; }

  bool contains(const Quadruple& q) const;

  std::span<const std::uint32_t> positions_sr(EntityId s, RelationId r) const;
  std::span<const std::uint32_t> positions_so(EntityId s, EntityId o) const;
  std::span<const std::uint32_t> positions_r(RelationId r) const;

  // Latest time of (s, r, o), or -1 when the triple never occurs.
  TimeStep latest(EntityId s, RelationId r, EntityId o) const;

  // Relations with at least one edge, ascending.
  std::vector<RelationId> relations_present() const;

 private:
  std::shared_ptr<const SharedVocab> vocab_ = std::make_shared<SharedVocab>();
  std::vector<Quadruple> edges_;
  std::size_t num_original_ = 0;
  std::size_t dropped_duplicates_ = 0;
  TimeStep t_max_ = -1;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> index_sr_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> index_so_;
  std::vector<std::vector<std::uint32_t>> index_r_;
  std::unordered_map<std::uint64_t, TimeStep> latest_sro_;
};

// Edges with the given subject and relation and t_lo <= t < t_hi, ascending
// by t with ties by object id.
std::vector<Quadruple> edges_for(const TemporalKG& kg, EntityId subject,
                                 RelationId relation, TimeStep t_lo,
                                 TimeStep t_hi);

enum class NameFormat { kAuto, kIds, kNames };

struct DatasetSpec {
  TimeStep time_gap = 1;
  NameFormat format = NameFormat::kAuto;
  bool inverse = true;
};

struct DatasetStats {
  std::size_t n_train = 0;
  std::size_t n_valid = 0;
  std::size_t n_test = 0;
  std::size_t n_entities = 0;
  std::size_t n_relations = 0;
  TimeStep time_gap = 1;
  std::size_t dropped_duplicates = 0;

  friend bool operator==(const DatasetStats&, const DatasetStats&) = default;
};

struct Dataset {
  std::shared_ptr<const SharedVocab> vocab;
  TemporalKG train;
  TemporalKG valid;
  TemporalKG test;
  DatasetSpec spec;
  // Raw timestamp that maps to step 0.
  TimeStep time_origin = 0;
  // True when entity2id.txt / relation2id.txt were read.
  bool id_form = false;
};

// Reads train.txt / valid.txt / test.txt (and entity2id.txt /
// relation2id.txt if present) from `dir`. Throws LoadError.
Dataset load_dataset(const std::filesystem::path& dir, const DatasetSpec& spec);

// Builds a dataset from in-memory splits. Timestamps are already steps.
Dataset make_dataset(std::shared_ptr<const SharedVocab> vocab,
                     std::vector<Quadruple> train,
                     std::vector<Quadruple> valid,
                     std::vector<Quadruple> test, TimeStep time_gap = 1);

// Writes the canonical layout. Id-form datasets get id columns plus id-map
// files; name-form datasets get name columns.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);

DatasetStats stats(const Dataset& ds);

// Union of the given views as a single graph over the same vocabulary.
TemporalKG merge(std::span<const TemporalKG* const> views);

// Base-relation edges of a view in canonical order (object-prediction
// queries).
std::vector<Quadruple> original_edges(const TemporalKG& kg);

}  // namespace gentkg
