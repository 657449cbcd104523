#include "gentkg/kg_store.h"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <tuple>
#include <utility>

namespace gentkg {
namespace {

constexpr std::size_t kMaxEntities = std::size_t{1} << 21;
constexpr std::size_t kMaxRelations = std::size_t{1} << 22;

std::uint64_t pair_key(std::uint32_t a, std::uint32_t b) {
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

std::uint64_t triple_key(EntityId s, RelationId r, EntityId o) {
  return (static_cast<std::uint64_t>(s) << 43) |
         (static_cast<std::uint64_t>(r) << 21) | o;
}

template <typename Map>
std::span<const std::uint32_t> lookup(const Map& map, std::uint64_t key) {
  auto it = map.find(key);
  if (it == map.end()) return {};
  return it->second;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      cols.push_back(line.substr(start));
      break;
    }
    cols.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return cols;
}

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

template <typename Int>
bool parse_int(std::string_view text, Int& out) {
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && ptr == text.data() + text.size();
}

struct RawQuad {
  std::uint32_t s, r, o;
  TimeStep raw_t;
};

std::string where(const std::filesystem::path& file, std::size_t line_no) {
  return file.string() + ":" + std::to_string(line_no);
}

void read_id_map(const std::filesystem::path& file, Vocabulary& vocab) {
  std::ifstream in(file);
  if (!in) throw LoadError("cannot open " + file.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = strip_cr(line);
    if (view.empty()) continue;
    auto cols = split_tabs(view);
    std::uint32_t id = 0;
    if (cols.size() != 2 || !parse_int(cols[1], id)) {
      throw LoadError(where(file, line_no) + ": expected 'name<TAB>id'");
    }
    vocab.assign(cols[0], id);
  }
}

std::vector<RawQuad> read_split(const std::filesystem::path& file,
                                SharedVocab& vocab, bool id_form,
                                TimeStep time_gap) {
  std::ifstream in(file);
  if (!in) throw LoadError("cannot open " + file.string());
  std::vector<RawQuad> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = strip_cr(line);
    if (view.empty()) continue;
    auto cols = split_tabs(view);
    // Some published dumps carry a fifth, unused column.
    if (cols.size() != 4 && cols.size() != 5) {
      throw LoadError(where(file, line_no) + ": expected 4 tab-separated " +
                      "columns, got " + std::to_string(cols.size()));
    }
    RawQuad q{};
    if (!parse_int(cols[3], q.raw_t) || q.raw_t < 0) {
      throw LoadError(where(file, line_no) + ": bad timestamp '" +
                      std::string(cols[3]) + "'");
    }
    if (q.raw_t % time_gap != 0) {
      throw LoadError(where(file, line_no) + ": timestamp " +
                      std::to_string(q.raw_t) +
                      " is not divisible by time gap " +
                      std::to_string(time_gap));
    }
    if (id_form) {
      auto id_col = [&](std::string_view col, const Vocabulary& table,
                        const char* what) {
        std::uint32_t id = 0;
        if (!parse_int(col, id) || id >= table.size()) {
          throw LoadError(where(file, line_no) + ": unknown " + what +
                          " id '" + std::string(col) + "'");
        }
        return id;
      };
      q.s = id_col(cols[0], vocab.entities, "entity");
      q.r = id_col(cols[1], vocab.relations, "relation");
      q.o = id_col(cols[2], vocab.entities, "entity");
    } else {
      q.s = vocab.entities.intern(cols[0]);
      q.r = vocab.relations.intern(cols[1]);
      q.o = vocab.entities.intern(cols[2]);
    }
    out.push_back(q);
  }
  return out;
}

}  // namespace

bool edge_less(const Quadruple& a, const Quadruple& b) {
  return std::tie(a.t, a.subject, a.relation, a.object) <
         std::tie(b.t, b.subject, b.relation, b.object);
}

std::size_t QuadrupleHash::operator()(const Quadruple& q) const noexcept {
  std::uint64_t h = triple_key(q.subject, q.relation, q.object);
  h ^= static_cast<std::uint64_t>(q.t) + 0x9e3779b97f4a7c15ULL + (h << 6) +
       (h >> 2);
  return std::hash<std::uint64_t>{}(h);
}

std::uint32_t Vocabulary::intern(std::string_view name) {
  auto it = ids_.find(std::string(name));
  if (it != ids_.end()) return it->second;
  auto id = static_cast<std::uint32_t>(names_.size());
  names_.emplace_back(name);
  ids_.emplace(std::string(name), id);
  return id;
}

void Vocabulary::assign(std::string_view name, std::uint32_t id) {
  if (ids_.count(std::string(name))) {
    throw LoadError("duplicate name in id map: " + std::string(name));
  }
  if (id >= names_.size()) names_.resize(id + 1);
  if (!names_[id].empty()) {
    throw LoadError("duplicate id in id map: " + std::to_string(id));
  }
  names_[id] = std::string(name);
  ids_.emplace(std::string(name), id);
}

const std::uint32_t* Vocabulary::find(std::string_view name) const {
  auto it = ids_.find(std::string(name));
  return it == ids_.end() ? nullptr : &it->second;
}

RelationId SharedVocab::inverse_of(RelationId r) const {
  auto base = static_cast<RelationId>(relations.size());
  return r < base ? r + base : r - base;
}

std::string SharedVocab::relation_name(RelationId r) const {
  if (is_inverse(r)) return "inv_" + relations.name(r - relations.size());
  return relations.name(r);
}

TemporalKG::TemporalKG(std::shared_ptr<const SharedVocab> vocab,
                       std::vector<Quadruple> edges)
    : vocab_(std::move(vocab)), edges_(std::move(edges)) {
  const auto n_ent = vocab_->entities.size();
  const auto n_base = vocab_->num_base_relations();
  if (n_ent > kMaxEntities || vocab_->num_relations() > kMaxRelations) {
    throw LoadError("vocabulary exceeds index capacity");
  }
  for (const auto& q : edges_) {
    if (q.subject >= n_ent || q.object >= n_ent || q.relation >= n_base ||
        q.t < 0) {
      throw LoadError("edge out of vocabulary bounds");
    }
  }

  std::sort(edges_.begin(), edges_.end(), edge_less);
  auto last = std::unique(edges_.begin(), edges_.end());
  dropped_duplicates_ = static_cast<std::size_t>(edges_.end() - last);
  edges_.erase(last, edges_.end());
  num_original_ = edges_.size();

  if (vocab_->inverse) {
    const auto n = edges_.size();
    edges_.reserve(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto q = edges_[i];
      edges_.push_back({q.object, vocab_->inverse_of(q.relation), q.subject,
                        q.t});
    }
    std::sort(edges_.begin(), edges_.end(), edge_less);
  }

  index_r_.resize(vocab_->num_relations());
  for (std::uint32_t pos = 0; pos < edges_.size(); ++pos) {
    const auto& q = edges_[pos];
    index_sr_[pair_key(q.subject, q.relation)].push_back(pos);
    index_so_[pair_key(q.subject, q.object)].push_back(pos);
    index_r_[q.relation].push_back(pos);
    auto& latest = latest_sro_[triple_key(q.subject, q.relation, q.object)];
    latest = std::max(latest, q.t);
    t_max_ = std::max(t_max_, q.t);
  }
}

bool TemporalKG::contains(const Quadruple& q) const {
  return std::binary_search(edges_.begin(), edges_.end(), q, edge_less);
}

std::span<const std::uint32_t> TemporalKG::positions_sr(EntityId s,
                                                        RelationId r) const {
  return lookup(index_sr_, pair_key(s, r));
}

std::span<const std::uint32_t> TemporalKG::positions_so(EntityId s,
                                                        EntityId o) const {
  return lookup(index_so_, pair_key(s, o));
}

std::span<const std::uint32_t> TemporalKG::positions_r(RelationId r) const {
  if (r >= index_r_.size()) return {};
  return index_r_[r];
}

TimeStep TemporalKG::latest(EntityId s, RelationId r, EntityId o) const {
  if (s >= kMaxEntities || o >= kMaxEntities || r >= kMaxRelations) return -1;
  auto it = latest_sro_.find(triple_key(s, r, o));
  return it == latest_sro_.end() ? -1 : it->second;
}

std::vector<RelationId> TemporalKG::relations_present() const {
  std::vector<RelationId> out;
  for (RelationId r = 0; r < index_r_.size(); ++r) {
    if (!index_r_[r].empty()) out.push_back(r);
  }
  return out;
}

std::vector<Quadruple> edges_for(const TemporalKG& kg, EntityId subject,
                                 RelationId relation, TimeStep t_lo,
                                 TimeStep t_hi) {
  std::vector<Quadruple> out;
  if (t_lo >= t_hi) return out;
  auto positions = kg.positions_sr(subject, relation);
  auto edges = kg.edges();
  auto first = std::partition_point(
      positions.begin(), positions.end(),
      [&](std::uint32_t p) { return edges[p].t < t_lo; });
  for (auto it = first; it != positions.end() && edges[*it].t < t_hi; ++it) {
    out.push_back(edges[*it]);
  }
  return out;
}

Dataset make_dataset(std::shared_ptr<const SharedVocab> vocab,
                     std::vector<Quadruple> train,
                     std::vector<Quadruple> valid,
                     std::vector<Quadruple> test, TimeStep time_gap) {
  Dataset ds;
  ds.vocab = vocab;
  ds.spec.time_gap = time_gap;
  ds.spec.inverse = vocab->inverse;
  ds.train = TemporalKG(vocab, std::move(train));
  ds.valid = TemporalKG(vocab, std::move(valid));
  ds.test = TemporalKG(vocab, std::move(test));
  return ds;
}

Dataset load_dataset(const std::filesystem::path& dir,
                     const DatasetSpec& spec) {
  namespace fs = std::filesystem;
  if (spec.time_gap < 1) throw LoadError("time gap must be >= 1");
  auto vocab = std::make_shared<SharedVocab>();
  vocab->inverse = spec.inverse;

  const bool maps_present = fs::exists(dir / "entity2id.txt") &&
                            fs::exists(dir / "relation2id.txt");
  bool id_form = false;
  switch (spec.format) {
    case NameFormat::kAuto: id_form = maps_present; break;
    case NameFormat::kIds: id_form = true; break;
    case NameFormat::kNames: id_form = false; break;
  }
  if (id_form) {
    if (!maps_present) {
      throw LoadError(dir.string() + ": id format requires entity2id.txt " +
                      "and relation2id.txt");
    }
    read_id_map(dir / "entity2id.txt", vocab->entities);
    read_id_map(dir / "relation2id.txt", vocab->relations);
    for (const auto* table : {&vocab->entities, &vocab->relations}) {
      for (const auto& name : table->names()) {
        if (name.empty()) throw LoadError("id map has gaps");
      }
    }
  }

  std::vector<RawQuad> raw[3];
  const char* files[3] = {"train.txt", "valid.txt", "test.txt"};
  for (int i = 0; i < 3; ++i) {
    // Only the training split is mandatory.
    if (i > 0 && !fs::exists(dir / files[i])) continue;
    raw[i] = read_split(dir / files[i], *vocab, id_form, spec.time_gap);
  }
  if (raw[0].empty()) throw LoadError(dir.string() + ": empty train split");

  TimeStep origin = kTimeInfinity;
  for (const auto& split : raw) {
    for (const auto& q : split) origin = std::min(origin, q.raw_t);
  }

  std::vector<Quadruple> splits[3];
  for (int i = 0; i < 3; ++i) {
    splits[i].reserve(raw[i].size());
    for (const auto& q : raw[i]) {
      splits[i].push_back({q.s, q.r, q.o, (q.raw_t - origin) / spec.time_gap});
    }
  }
  Dataset ds = make_dataset(vocab, std::move(splits[0]), std::move(splits[1]),
                            std::move(splits[2]), spec.time_gap);
  ds.spec = spec;
  ds.time_origin = origin;
  ds.id_form = id_form;
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto& vocab = *ds.vocab;
  auto write_split = [&](const TemporalKG& kg, const char* name) {
    std::ofstream out(dir / name);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    for (const auto& q : original_edges(kg)) {
      const TimeStep raw = q.t * ds.spec.time_gap + ds.time_origin;
      if (ds.id_form) {
        out << q.subject << '\t' << q.relation << '\t' << q.object;
      } else {
        out << vocab.entities.name(q.subject) << '\t'
            << vocab.relations.name(q.relation) << '\t'
            << vocab.entities.name(q.object);
      }
      out << '\t' << raw << '\n';
    }
  };
  write_split(ds.train, "train.txt");
  write_split(ds.valid, "valid.txt");
  write_split(ds.test, "test.txt");
  if (ds.id_form) {
    auto write_map = [&](const Vocabulary& table, const char* name) {
      std::ofstream out(dir / name);
      for (std::uint32_t id = 0; id < table.size(); ++id) {
        out << table.name(id) << '\t' << id << '\n';
      }
    };
    write_map(vocab.entities, "entity2id.txt");
    write_map(vocab.relations, "relation2id.txt");
  }
}

DatasetStats stats(const Dataset& ds) {
  DatasetStats st;
  st.n_train = ds.train.num_original();
  st.n_valid = ds.valid.num_original();
  st.n_test = ds.test.num_original();
  st.n_entities = ds.vocab->entities.size();
  st.n_relations = ds.vocab->num_base_relations();
  st.time_gap = ds.spec.time_gap;
  st.dropped_duplicates = ds.train.dropped_duplicates() +
                          ds.valid.dropped_duplicates() +
                          ds.test.dropped_duplicates();
  return st;
}

TemporalKG merge(std::span<const TemporalKG* const> views) {
  if (views.empty()) return {};
  std::vector<Quadruple> all;
  for (const auto* view : views) {
    auto part = original_edges(*view);
    all.insert(all.end(), part.begin(), part.end());
  }
  return TemporalKG(views.front()->shared_vocab(), std::move(all));
}

std::vector<Quadruple> original_edges(const TemporalKG& kg) {
  std::vector<Quadruple> out;
  out.reserve(kg.num_original());
  const auto& vocab = kg.vocab();
  for (const auto& q : kg.edges()) {
    if (!vocab.is_inverse(q.relation)) out.push_back(q);
  }
  return out;
}

}  // namespace gentkg
