#include <doctest.h>

#include <random>

#include "gentkg/kg_store.h"
#include "support/oracles.h"
#include "support/temp_dir.h"

using namespace gentkg;
using gentkg::testing::TempDir;

namespace {

DatasetSpec spec_with(bool inverse, TimeStep gap = 1) {
  DatasetSpec s;
  s.inverse = inverse;
  s.time_gap = gap;
  return s;
}

}  // namespace

TEST_CASE("single line without id maps, inverse off") {
  TempDir dir;
  dir.write("train.txt", "0\t0\t1\t0\n");
  const auto ds = load_dataset(dir.path(), spec_with(false));
  CHECK(ds.train.size() == 1);
  CHECK(ds.vocab->entities.size() == 2);
  CHECK(ds.vocab->num_relations() == 1);
  const auto st = stats(ds);
  CHECK(st.n_train == 1);
  CHECK(st.n_entities == 2);
  CHECK(st.n_relations == 1);
  CHECK(st.n_valid == 0);
  CHECK(st.n_test == 0);
}

TEST_CASE("single line with inverse augmentation") {
  TempDir dir;
  dir.write("train.txt", "0\t0\t1\t0\n");
  const auto ds = load_dataset(dir.path(), spec_with(true));
  REQUIRE(ds.train.size() == 2);
  CHECK(ds.vocab->num_relations() == 2);
  CHECK(ds.train.num_original() == 1);
  // "0" interned as entity 0, "1" as entity 1; inverse relation id = 1.
  CHECK(ds.train.contains({1, 1, 0, 0}));
  CHECK(ds.vocab->relation_name(1) == "inv_0");
  CHECK(ds.vocab->inverse_of(1) == 0);
  CHECK(ds.vocab->inverse_of(0) == 1);
  CHECK(stats(ds).n_relations == 1);
}

TEST_CASE("id-form dataset reads id maps and the optional fifth column") {
  TempDir dir;
  dir.write("entity2id.txt", "Alice\t0\nBob\t1\nCarol\t2\n");
  dir.write("relation2id.txt", "Consult\t0\nVisit\t1\n");
  dir.write("train.txt", "0\t0\t1\t24\t0\n2\t1\t0\t48\t0\n");
  dir.write("valid.txt", "1\t0\t2\t72\n");
  dir.write("test.txt", "0\t1\t2\t96\n");
  const auto ds = load_dataset(dir.path(), spec_with(false, 24));
  CHECK(ds.id_form);
  CHECK(ds.time_origin == 24);
  CHECK(ds.train.contains({0, 0, 1, 0}));
  CHECK(ds.train.contains({2, 1, 0, 1}));
  CHECK(ds.valid.contains({1, 0, 2, 2}));
  CHECK(ds.test.contains({0, 1, 2, 3}));
  CHECK(ds.vocab->entity_name(2) == "Carol");
  CHECK(stats(ds) == DatasetStats{2, 1, 1, 3, 2, 24, 0});
}

TEST_CASE("loader errors") {
  TempDir dir;
  SUBCASE("missing train file") {
    CHECK_THROWS_AS(load_dataset(dir.path(), {}), LoadError);
  }
  SUBCASE("wrong column count") {
    dir.write("train.txt", "a\tb\tc\n");
    CHECK_THROWS_WITH_AS(load_dataset(dir.path(), {}),
                         doctest::Contains("columns"), LoadError);
  }
  SUBCASE("negative timestamp") {
    dir.write("train.txt", "a\tb\tc\t-1\n");
    CHECK_THROWS_AS(load_dataset(dir.path(), {}), LoadError);
  }
  SUBCASE("non-numeric timestamp") {
    dir.write("train.txt", "a\tb\tc\tyesterday\n");
    CHECK_THROWS_AS(load_dataset(dir.path(), {}), LoadError);
  }
  SUBCASE("timestamp not divisible by the gap") {
    dir.write("train.txt", "a\tb\tc\t25\n");
    CHECK_THROWS_WITH_AS(load_dataset(dir.path(), spec_with(true, 24)),
                         doctest::Contains("divisible"), LoadError);
  }
  SUBCASE("unknown id in id form") {
    dir.write("entity2id.txt", "A\t0\n");
    dir.write("relation2id.txt", "r\t0\n");
    dir.write("train.txt", "0\t0\t5\t0\n");
    CHECK_THROWS_WITH_AS(load_dataset(dir.path(), {}),
                         doctest::Contains("unknown entity"), LoadError);
  }
  SUBCASE("empty train split") {
    dir.write("train.txt", "\n");
    CHECK_THROWS_WITH_AS(load_dataset(dir.path(), {}),
                         doctest::Contains("empty train"), LoadError);
  }
  SUBCASE("time gap below one") {
    dir.write("train.txt", "a\tb\tc\t0\n");
    CHECK_THROWS_AS(load_dataset(dir.path(), spec_with(true, 0)), LoadError);
  }
}

TEST_CASE("duplicates are dropped and counted") {
  TempDir dir;
  dir.write("train.txt", "a\tr\tb\t3\na\tr\tb\t3\nb\tr\ta\t3\n");
  const auto ds = load_dataset(dir.path(), spec_with(false));
  CHECK(ds.train.size() == 2);
  CHECK(stats(ds).dropped_duplicates == 1);
}

TEST_CASE("edges are sorted by (t, subject, relation, object)") {
  auto vocab = gentkg::testing::numbered_vocab(6, 3, true);
  std::mt19937_64 rng(3);
  std::vector<Quadruple> edges;
  for (int i = 0; i < 300; ++i) {
    edges.push_back({static_cast<EntityId>(rng() % 6),
                     static_cast<RelationId>(rng() % 3),
                     static_cast<EntityId>(rng() % 6),
                     static_cast<TimeStep>(rng() % 20)});
  }
  TemporalKG kg(vocab, edges);
  auto e = kg.edges();
  for (std::size_t i = 1; i < e.size(); ++i) {
    CHECK(edge_less(e[i - 1], e[i]));
  }
  // Every base edge has its inverse.
  for (const auto& q : e) {
    CHECK(kg.contains({q.object, vocab->inverse_of(q.relation), q.subject, q.t}));
  }
  CHECK(kg.t_max() == std::max_element(e.begin(), e.end(), [](auto& a, auto& b) {
                        return a.t < b.t;
                      })->t);
  // Index lists are ascending positions whose edges match their key.
  for (EntityId s = 0; s < 6; ++s) {
    for (RelationId r = 0; r < 6; ++r) {
      auto pos = kg.positions_sr(s, r);
      CHECK(std::is_sorted(pos.begin(), pos.end()));
      std::size_t expected = 0;
      for (const auto& q : e) expected += q.subject == s && q.relation == r;
      CHECK(pos.size() == expected);
      for (auto p : pos) {
        CHECK(e[p].subject == s);
        CHECK(e[p].relation == r);
      }
    }
  }
}

TEST_CASE("latest occurrence of a triple") {
  auto vocab = gentkg::testing::numbered_vocab(3, 2, false);
  TemporalKG kg(vocab, {{0, 0, 1, 2}, {0, 0, 1, 7}, {1, 1, 2, 4}});
  CHECK(kg.latest(0, 0, 1) == 7);
  CHECK(kg.latest(1, 1, 2) == 4);
  CHECK(kg.latest(2, 0, 1) == -1);
}

TEST_CASE("edges_for window queries") {
  auto vocab = gentkg::testing::numbered_vocab(4, 2, false);
  TemporalKG kg(vocab, {{0, 0, 1, 1}, {0, 0, 2, 3}, {0, 0, 3, 5}, {0, 1, 1, 2}});
  auto ts = [](const std::vector<Quadruple>& v) {
    std::vector<TimeStep> out;
    for (const auto& q : v) out.push_back(q.t);
    return out;
  };
  CHECK(ts(edges_for(kg, 0, 0, 1, 5)) == std::vector<TimeStep>{1, 3});
  CHECK(edges_for(kg, 0, 0, 5, 5).empty());
  CHECK(edges_for(kg, 3, 0, 0, kTimeInfinity).empty());
  CHECK(edges_for(kg, 0, 7, 0, kTimeInfinity).empty());
  TemporalKG empty;
  CHECK(edges_for(empty, 0, 0, 0, kTimeInfinity).empty());
}

TEST_CASE("edges_for ties are ascending by object") {
  auto vocab = gentkg::testing::numbered_vocab(5, 1, false);
  TemporalKG kg(vocab, {{0, 0, 4, 2}, {0, 0, 1, 2}, {0, 0, 3, 2}});
  auto v = edges_for(kg, 0, 0, 0, 10);
  REQUIRE(v.size() == 3);
  CHECK(v[0].object == 1);
  CHECK(v[1].object == 3);
  CHECK(v[2].object == 4);
}

TEST_CASE("single-edge graph statistics") {
  auto vocab = gentkg::testing::numbered_vocab(2, 1, true);
  const auto ds = make_dataset(vocab, {{0, 0, 1, 0}}, {}, {});
  const auto st = stats(ds);
  CHECK(st.n_train == 1);
  CHECK(st.n_entities == 2);
  CHECK(st.n_relations == 1);
}

TEST_CASE("save and reload round trip") {
  TempDir dir;
  dir.write("train.txt",
            "Ministry of Health\tConsult\tFrance\t48\nFrance\tVisit\tGermany\t72\n");
  dir.write("valid.txt", "Germany\tConsult\tFrance\t96\n");
  dir.write("test.txt", "France\tConsult\tGermany\t120\n");
  const auto ds = load_dataset(dir.path(), spec_with(true, 24));
  TempDir out;
  save_dataset(ds, out.path());
  const auto again = load_dataset(out.path(), spec_with(true, 24));
  CHECK(stats(again) == stats(ds));
  CHECK(again.time_origin == ds.time_origin);
  auto names = [](const Dataset& d, const TemporalKG& kg) {
    std::vector<std::string> out;
    for (const auto& q : original_edges(kg)) {
      out.push_back(d.vocab->entity_name(q.subject) + "|" +
                    d.vocab->relation_name(q.relation) + "|" +
                    d.vocab->entity_name(q.object) + "|" + std::to_string(q.t));
    }
    return out;
  };
  CHECK(names(again, again.train) == names(ds, ds.train));
  CHECK(names(again, again.valid) == names(ds, ds.valid));
  CHECK(names(again, again.test) == names(ds, ds.test));
}

TEST_CASE("merge unions splits over the shared vocabulary") {
  auto vocab = gentkg::testing::numbered_vocab(3, 1, true);
  const auto ds = make_dataset(vocab, {{0, 0, 1, 0}}, {{1, 0, 2, 1}},
                               {{0, 0, 1, 0}, {2, 0, 0, 2}});
  const TemporalKG* views[] = {&ds.train, &ds.valid, &ds.test};
  const auto all = merge(views);
  CHECK(all.num_original() == 3);
  CHECK(all.size() == 6);
  CHECK(original_edges(all).size() == 3);
}
