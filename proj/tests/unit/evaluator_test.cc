#include <doctest.h>

#include <random>

#include "gentkg/evaluator.h"
#include "gentkg/synthetic.h"
#include "support/oracles.h"
#include "support/temp_dir.h"

using namespace gentkg;
namespace gt = gentkg::testing;

namespace {

EvalRecord record_with_rank(std::optional<std::size_t> rank) {
  EvalRecord r;
  r.rank = rank;
  return r;
}

PredictionList list_of(std::vector<EntityId> ids) {
  PredictionList p;
  p.ranked = std::move(ids);
  return p;
}

// Forwards to the oracle, failing after `budget` batches.
class FlakyPredictor final : public Predictor {
 public:
  FlakyPredictor(const RuleBank& bank, int budget) : inner_(bank), budget_(budget) {}
  std::string name() const override { return "flaky"; }
  std::vector<PredictionList> predict(std::span<const PreparedQuery> b) override {
    if (budget_-- <= 0) throw std::runtime_error("interrupted");
    return inner_.predict(b);
  }

 private:
  OraclePredictor inner_;
  int budget_;
};

struct Planted {
  Dataset ds = make_planted_dataset({});
  RuleBank bank = learn_rules(ds.train, {});
  EvalContext ctx = make_eval_context(ds);
  EvalInputs inputs() const { return {&ds, &bank, &ctx.history, ctx.test_queries}; }
};

}  // namespace

TEST_CASE("time-aware filter") {
  const EntityId B = 1, C = 2, gold = 3, s = 0;
  const RelationId r = 0;
  const Query q{s, r, 7, gold};
  SUBCASE("co-true answers are removed") {
    FactSet facts;
    facts.insert({s, r, B, 7});
    facts.insert({s, r, C, 7});
    const auto out = time_aware_filter(list_of({B, C, gold}), q, gold, facts);
    CHECK(out.ranked == std::vector<EntityId>{gold});
    CHECK(gold_rank(out.ranked, gold) == std::optional<std::size_t>(1));
  }
  SUBCASE("no co-true answers at t") {
    FactSet facts;
    facts.insert({s, r, B, 6});
    facts.insert({s, r, C, 8});
    const auto out = time_aware_filter(list_of({B, C, gold}), q, gold, facts);
    CHECK(out.ranked == std::vector<EntityId>{B, C, gold});
  }
  SUBCASE("gold is never removed") {
    FactSet facts;
    facts.insert({s, r, gold, 7});
    const auto out = time_aware_filter(list_of({gold, B}), q, gold, facts);
    CHECK(out.ranked == std::vector<EntityId>{gold, B});
  }
}

TEST_CASE("hits at k") {
  std::vector<EvalRecord> rs{record_with_rank(1), record_with_rank(2),
                             record_with_rank(std::nullopt), record_with_rank(11)};
  CHECK(hits_at_k(rs, 1) == 0.25);
  CHECK(hits_at_k(rs, 3) == 0.5);
  CHECK(hits_at_k(rs, 10) == 0.5);
  std::vector<EvalRecord> ones(5, record_with_rank(1));
  for (auto k : {1u, 3u, 10u}) CHECK(hits_at_k(ones, k) == 1.0);
  std::vector<EvalRecord> none(5, record_with_rank(std::nullopt));
  for (auto k : {1u, 3u, 10u}) CHECK(hits_at_k(none, k) == 0.0);
  CHECK_THROWS_WITH(hits_at_k({}, 1), doctest::Contains("empty evaluation set"));
  CHECK_THROWS(hits_at_k(rs, 5));
}

TEST_CASE("filtering preserves gold order and never worsens its rank") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<EntityId> ids(30);
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(rng() % 11);
    const EntityId gold = rng() % 30;
    const Query q{0, 0, 5, gold};
    FactSet facts;
    for (int i = 0; i < 10; ++i) facts.insert({0, 0, static_cast<EntityId>(rng() % 30), 5});
    const auto out = time_aware_filter(list_of(ids), q, gold, facts);
    const auto before = gold_rank(ids, gold);
    const auto after = gold_rank(out.ranked, gold);
    CHECK(before.has_value() == after.has_value());
    if (before) CHECK(*after <= *before);
    // Survivors keep their relative order.
    std::size_t j = 0;
    for (auto e : ids) {
      if (j < out.ranked.size() && out.ranked[j] == e) ++j;
    }
    CHECK(j == out.ranked.size());

    std::vector<EvalRecord> rs;
    for (int i = 0; i < 1 + static_cast<int>(rng() % 20); ++i) {
      rs.push_back(record_with_rank(rng() % 3 ? std::optional<std::size_t>(1 + rng() % 15)
                                              : std::nullopt));
    }
    CHECK(hits_at_k(rs, 1) <= hits_at_k(rs, 3));
    CHECK(hits_at_k(rs, 3) <= hits_at_k(rs, 10));
  }
}

TEST_CASE("oracle evaluation matches the brute-force pipeline") {
  Planted p;
  EvalConfig cfg;
  cfg.fingerprint = "test";
  OraclePredictor oracle(p.bank);
  const auto run = run_eval(p.inputs(), p.ctx.all_facts, oracle, cfg);
  REQUIRE(run.report.n_queries == p.ctx.test_queries.size());

  std::vector<Quadruple> all;
  for (const auto* kg : {&p.ds.train, &p.ds.valid, &p.ds.test}) {
    auto e = gt::flat(*kg);
    all.insert(all.end(), e.begin(), e.end());
  }
  std::size_t h1 = 0, h10 = 0;
  for (const auto& q : p.ctx.test_queries) {
    const auto facts = gt::brute_retrieve(all, p.bank, q, cfg.retrieval);
    const auto ranked = gt::brute_score(facts, p.bank, q);
    const auto rank = gt::brute_filtered_rank(ranked, q, *q.gold, all);
    h1 += rank && *rank <= 1;
    h10 += rank && *rank <= 10;
  }
  const double n = static_cast<double>(p.ctx.test_queries.size());
  CHECK(run.report.hits1 == doctest::Approx(h1 / n).epsilon(1e-12));
  CHECK(run.report.hits10 == doctest::Approx(h10 / n).epsilon(1e-12));
  CHECK(run.report.hits1 <= run.report.hits3);
  CHECK(run.report.hits3 <= run.report.hits10);
}

TEST_CASE("report equals recomputation from persisted records") {
  Planted p;
  EvalConfig cfg;
  cfg.fingerprint = "audit";
  OraclePredictor oracle(p.bank);
  const auto run = run_eval(p.inputs(), p.ctx.all_facts, oracle, cfg);
  std::vector<EvalRecord> replay;
  for (const auto& r : run.records) {
    replay.push_back(eval_record_from_json(nlohmann::json::parse(to_json(r).dump())));
  }
  CHECK(to_json(aggregate(replay, "audit")).dump() == to_json(run.report).dump());
}

TEST_CASE("empty evaluation set") {
  Planted p;
  EvalInputs in{&p.ds, &p.bank, &p.ctx.history, {}};
  OraclePredictor oracle(p.bank);
  CHECK_THROWS_WITH(run_eval(in, p.ctx.all_facts, oracle, {}),
                    doctest::Contains("empty evaluation set"));
}

TEST_CASE("interrupted run resumes to the uninterrupted result") {
  Planted p;
  EvalConfig cfg;
  cfg.chunk_size = 16;
  cfg.fingerprint = "resume";
  OraclePredictor oracle(p.bank);
  const auto full = run_eval(p.inputs(), p.ctx.all_facts, oracle, cfg);

  gt::TempDir dir;
  const auto journal = dir / "journal.jsonl";
  const int chunks = static_cast<int>((p.ctx.test_queries.size() + 15) / 16);
  FlakyPredictor flaky(p.bank, chunks / 2);
  CHECK_THROWS(run_eval(p.inputs(), p.ctx.all_facts, flaky, cfg, journal));
  // Simulate a torn final write.
  { std::ofstream(journal, std::ios::app) << "{\"index\": 3, \"que"; }

  const auto resumed = run_eval(p.inputs(), p.ctx.all_facts, oracle, cfg, journal);
  CHECK(resumed.resumed == static_cast<std::size_t>(chunks / 2) * 16);
  CHECK(to_json(resumed.report).dump() == to_json(full.report).dump());
  REQUIRE(resumed.records.size() == full.records.size());
  for (std::size_t i = 0; i < full.records.size(); ++i) {
    CHECK(to_json(resumed.records[i]).dump() == to_json(full.records[i]).dump());
  }
  // A second re-run does no new work.
  const auto idle = run_eval(p.inputs(), p.ctx.all_facts, oracle, cfg, journal);
  CHECK(idle.resumed == full.records.size());

  // A different fingerprint ignores the journal.
  cfg.fingerprint = "other";
  CHECK(run_eval(p.inputs(), p.ctx.all_facts, oracle, cfg, journal).resumed == 0);
}

TEST_CASE("ablation grid") {
  Planted p;
  EvalConfig base;
  base.fingerprint = "grid";
  OraclePredictor oracle(p.bank);

  AblationGrid orders{{FactOrder::kAscending, FactOrder::kDescending,
                       FactOrder::kRandom, FactOrder::kTimestampsRemoved},
                      {50},
                      {PromptFormat::kIndex}};
  const auto cells = ablation_run(p.inputs(), p.ctx.all_facts, oracle, orders, base);
  REQUIRE(cells.size() == 4);
  // The oracle reads the history, not the rendered order.
  for (const auto& c : cells) CHECK(c.report.hits1 == cells[0].report.hits1);

  AblationGrid lengths{{FactOrder::kAscending}, {10, 50}, {PromptFormat::kIndex}};
  const auto lc = ablation_run(p.inputs(), p.ctx.all_facts, oracle, lengths, base);
  REQUIRE(lc.size() == 2);
  CHECK(lc[1].report.hits1 >= lc[0].report.hits1);
  CHECK(lc[1].report.hits3 >= lc[0].report.hits3);
  CHECK(lc[1].report.hits10 >= lc[0].report.hits10);

  const auto table = ablation_table(lc);
  CHECK(table.starts_with("order\thistory_length\tformat\thits@1\thits@3\thits@10\t"
                          "n_queries\tn_unparsed\n"));
  CHECK(std::count(table.begin(), table.end(), '\n') == 3);

  CHECK_THROWS(ablation_run(p.inputs(), p.ctx.all_facts, oracle, {}, base));
}

TEST_CASE("seed summary is mean plus or minus half range") {
  std::vector<EvalReport> rs(3);
  rs[0].hits1 = 0.30;
  rs[1].hits1 = 0.40;
  rs[2].hits1 = 0.35;
  for (auto& r : rs) r.hits3 = r.hits10 = 0.5;
  const auto s = summarize_seeds(rs);
  CHECK(s.runs == 3);
  CHECK(s.mean[0] == doctest::Approx(0.35));
  CHECK(s.half_range[0] == doctest::Approx(0.05));
  CHECK(s.half_range[1] == 0.0);
}

TEST_CASE("unparsed generations count as misses") {
  std::vector<EvalRecord> rs{record_with_rank(1), record_with_rank(std::nullopt)};
  rs[1].unparsed = true;
  const auto rep = aggregate(rs, "x");
  CHECK(rep.n_queries == 2);
  CHECK(rep.n_unparsed == 1);
  CHECK(rep.hits1 == 0.5);
}
