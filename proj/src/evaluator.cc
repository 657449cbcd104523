#include "gentkg/evaluator.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "gentkg/config.h"
#include "gentkg/parallel.h"

namespace gentkg {
namespace {

struct Scored {
  PredictionList filtered;
  std::optional<std::size_t> rank;
  bool unparsed = false;
};

// Runs predictor over `indices` (positions into inputs.queries) using the
// given histories, then filters and ranks. `sink` receives each finished
// record in index order, chunk by chunk.
template <typename Sink>
void evaluate(const EvalInputs& inputs, const FactSet& facts,
              Predictor& predictor, const EvalConfig& cfg,
              std::span<const std::size_t> indices,
              const std::vector<RetrievedHistory>& histories, Sink&& sink) {
  const auto& vocab = *inputs.dataset->vocab;
  const std::size_t chunk = std::max<std::size_t>(1, cfg.chunk_size);
  for (std::size_t begin = 0; begin < indices.size(); begin += chunk) {
    const auto end = std::min(indices.size(), begin + chunk);
    std::vector<PreparedQuery> batch(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      const auto& h = histories[indices[i]];
      batch[i - begin] = {&h, build_prompt(h, vocab, cfg.prompt)};
    }
    auto predictions = predictor.predict(batch);
    if (predictions.size() != batch.size()) {
      throw EvalError("predictor returned " +
                      std::to_string(predictions.size()) + " lists for " +
                      std::to_string(batch.size()) + " queries");
    }
    for (std::size_t i = begin; i < end; ++i) {
      const auto idx = indices[i];
      const auto& q = inputs.queries[idx];
      const auto& pred = predictions[i - begin];
      EvalRecord rec;
      rec.index = idx;
      rec.query = q;
      rec.gold = *q.gold;
      rec.ranked = time_aware_filter(pred, q, *q.gold, facts).ranked;
      rec.rank = gold_rank(rec.ranked, rec.gold);
      rec.unparsed = pred.ranked.empty() && pred.unresolved > 0;
      rec.fingerprint = cfg.fingerprint;
      sink(std::move(rec));
    }
  }
}

void check_inputs(const EvalInputs& inputs) {
  if (!inputs.dataset || !inputs.bank || !inputs.history) {
    throw EvalError("evaluation inputs are incomplete");
  }
  if (inputs.queries.empty()) throw EvalError("empty evaluation set");
  for (const auto& q : inputs.queries) {
    if (!q.gold) throw EvalError("evaluation query without gold object");
  }
}

std::vector<EvalRecord> read_journal(const std::filesystem::path& path,
                                     const std::string& fingerprint,
                                     std::size_t n_queries) {
  std::vector<EvalRecord> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line, nullptr, false);
    // A torn trailing line from an interrupted run is skipped.
    if (j.is_discarded()) continue;
    try {
      auto rec = eval_record_from_json(j);
      if (rec.fingerprint == fingerprint && rec.index < n_queries) {
        out.push_back(std::move(rec));
      }
    } catch (const nlohmann::json::exception&) {
    }
  }
  return out;
}

}  // namespace

FactSet::FactSet(std::span<const TemporalKG* const> views) {
  for (const auto* view : views) {
    for (const auto& q : view->edges()) facts_.insert(q);
  }
}

PredictionList time_aware_filter(const PredictionList& ranked,
                                 const Query& query, EntityId gold,
                                 const FactSet& facts) {
  PredictionList out;
  out.unresolved = ranked.unresolved;
  for (std::size_t i = 0; i < ranked.ranked.size(); ++i) {
    const EntityId o = ranked.ranked[i];
    if (o != gold &&
        facts.contains({query.subject, query.relation, o, query.t})) {
      continue;
    }
    out.ranked.push_back(o);
    if (i < ranked.raw_texts.size()) out.raw_texts.push_back(ranked.raw_texts[i]);
  }
  return out;
}

std::optional<std::size_t> gold_rank(std::span<const EntityId> ranked,
                                     EntityId gold) {
  auto it = std::find(ranked.begin(), ranked.end(), gold);
  if (it == ranked.end()) return std::nullopt;
  return static_cast<std::size_t>(it - ranked.begin()) + 1;
}

double hits_at_k(std::span<const EvalRecord> records, std::size_t k) {
  if (k != 1 && k != 3 && k != 10) {
    throw EvalError("hits@k is defined for k in {1, 3, 10}, got " +
                    std::to_string(k));
  }
  if (records.empty()) throw EvalError("empty evaluation set");
  std::size_t hits = 0;
  for (const auto& r : records) {
    if (r.rank && *r.rank <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

EvalReport aggregate(std::span<const EvalRecord> records,
                     const std::string& fingerprint) {
  EvalReport report;
  report.fingerprint = fingerprint;
  report.hits1 = hits_at_k(records, 1);
  report.hits3 = hits_at_k(records, 3);
  report.hits10 = hits_at_k(records, 10);
  report.n_queries = records.size();
  report.n_unparsed = static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(),
                    [](const EvalRecord& r) { return r.unparsed; }));
  return report;
}

std::vector<PredictionList> OraclePredictor::predict(
    std::span<const PreparedQuery> batch) {
  std::vector<PredictionList> out;
  out.reserve(batch.size());
  for (const auto& item : batch) {
    out.push_back(
        rule_score_predict(*item.history, *bank_, item.history->query));
  }
  return out;
}

std::vector<PredictionList> LlmPredictor::predict(
    std::span<const PreparedQuery> batch) {
  std::vector<std::string> prompts;
  prompts.reserve(batch.size());
  for (const auto& item : batch) prompts.push_back(item.prompt.text);
  auto responses = client_.generate_batch(prompts);

  std::vector<PredictionList> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto& res = responses[i];
    if (res.error) {
      if (res.error->kind() == ClientErrorKind::kTransport) throw *res.error;
      out[i].unresolved = 1;
      continue;
    }
    out[i] = parse_predictions(res.sequences, batch[i].prompt, resolver_);
  }
  return out;
}

EvalContext make_eval_context(const Dataset& ds) {
  EvalContext ctx;
  const TemporalKG* all[] = {&ds.train, &ds.valid, &ds.test};
  ctx.history = merge(all);
  ctx.all_facts = FactSet(all);
  const TemporalKG* test[] = {&ds.test};
  ctx.test_facts = FactSet(test);
  for (const auto& q : original_edges(ds.test)) {
    ctx.test_queries.push_back(query_of(q));
  }
  return ctx;
}

EvalRun run_eval(const EvalInputs& inputs, const FactSet& filter_facts,
                 Predictor& predictor, const EvalConfig& cfg,
                 const std::optional<std::filesystem::path>& journal) {
  check_inputs(inputs);
  const auto n = inputs.queries.size();
  std::vector<std::optional<EvalRecord>> slots(n);

  EvalRun run;
  if (journal) {
    for (auto& rec : read_journal(*journal, cfg.fingerprint, n)) {
      if (!slots[rec.index]) {
        slots[rec.index] = std::move(rec);
        ++run.resumed;
      }
    }
  }
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < n; ++i) {
    if (!slots[i]) pending.push_back(i);
  }

  std::vector<RetrievedHistory> histories(n);
  parallel_for(pending.size(), cfg.threads, [&](std::size_t i) {
    const auto idx = pending[i];
    histories[idx] = retrieve(*inputs.history, *inputs.bank,
                              inputs.queries[idx], cfg.retrieval);
  });

  std::ofstream journal_out;
  if (journal) {
    if (journal->has_parent_path()) {
      std::filesystem::create_directories(journal->parent_path());
    }
    bool torn_tail = false;
    if (std::ifstream tail(*journal, std::ios::binary | std::ios::ate);
        tail && tail.tellg() > 0) {
      tail.seekg(-1, std::ios::end);
      torn_tail = tail.get() != '\n';
    }
    journal_out.open(*journal, std::ios::app | std::ios::binary);
    if (!journal_out) throw EvalError("cannot open journal " + journal->string());
    // Close off a partial line so the next record starts on its own line.
    if (torn_tail) journal_out << '\n';
  }
  evaluate(inputs, filter_facts, predictor, cfg, pending, histories,
           [&](EvalRecord rec) {
             if (journal_out.is_open()) {
               journal_out << to_json(rec).dump() << '\n';
               journal_out.flush();
             }
             slots[rec.index] = std::move(rec);
           });

  run.records.reserve(n);
  for (auto& slot : slots) run.records.push_back(std::move(*slot));
  run.report = aggregate(run.records, cfg.fingerprint);
  return run;
}

std::vector<AblationCell> ablation_run(const EvalInputs& inputs,
                                       const FactSet& filter_facts,
                                       Predictor& predictor,
                                       const AblationGrid& grid,
                                       const EvalConfig& base) {
  check_inputs(inputs);
  if (grid.orders.empty() || grid.history_lengths.empty() ||
      grid.formats.empty()) {
    throw EvalError("empty ablation grid");
  }
  const auto n = inputs.queries.size();
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;

  std::map<std::size_t, std::vector<RetrievedHistory>> cache;
  std::vector<AblationCell> cells;
  for (const auto length : grid.history_lengths) {
    auto retrieval = base.retrieval;
    retrieval.max_history = length;
    auto [it, fresh] = cache.try_emplace(length);
    if (fresh) {
      it->second = retrieve_batch(*inputs.history, *inputs.bank,
                                  inputs.queries, retrieval, base.threads);
    }
    for (const auto order : grid.orders) {
      for (const auto format : grid.formats) {
        auto cfg = base;
        cfg.retrieval = retrieval;
        cfg.prompt.order = order;
        cfg.prompt.format = format;
        cfg.prompt.max_facts = std::max(cfg.prompt.max_facts, length);
        cfg.fingerprint = fingerprint_of(
            {{"base", base.fingerprint},
             {"order", to_string(order)},
             {"history_length", length},
             {"format", to_string(format)}});
        std::vector<EvalRecord> records;
        records.reserve(n);
        evaluate(inputs, filter_facts, predictor, cfg, all, it->second,
                 [&](EvalRecord rec) { records.push_back(std::move(rec)); });
        cells.push_back({order, length, format,
                         aggregate(records, cfg.fingerprint)});
      }
    }
  }
  return cells;
}

std::string ablation_table(std::span<const AblationCell> cells) {
  std::ostringstream out;
  out << "order\thistory_length\tformat\thits@1\thits@3\thits@10\t"
         "n_queries\tn_unparsed\n";
  for (const auto& c : cells) {
    out << to_string(c.order) << '\t' << c.history_length << '\t'
        << to_string(c.format) << '\t' << c.report.hits1 << '\t'
        << c.report.hits3 << '\t' << c.report.hits10 << '\t'
        << c.report.n_queries << '\t' << c.report.n_unparsed << '\n';
  }
  return out.str();
}

SeedSummary summarize_seeds(std::span<const EvalReport> reports) {
  SeedSummary s;
  s.runs = reports.size();
  if (reports.empty()) return s;
  for (int m = 0; m < 3; ++m) {
    double lo = 1.0, hi = 0.0, total = 0.0;
    for (const auto& r : reports) {
      const double v = m == 0 ? r.hits1 : m == 1 ? r.hits3 : r.hits10;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      total += v;
    }
    s.mean[m] = total / static_cast<double>(reports.size());
    s.half_range[m] = (hi - lo) / 2.0;
  }
  return s;
}

nlohmann::json to_json(const EvalRecord& r) {
  nlohmann::json j{{"index", r.index},
                   {"query", to_json(r.query)},
                   {"gold", r.gold},
                   {"ranked", r.ranked},
                   {"unparsed", r.unparsed},
                   {"fingerprint", r.fingerprint}};
  j["rank"] = r.rank ? nlohmann::json(*r.rank) : nlohmann::json();
  return j;
}

EvalRecord eval_record_from_json(const nlohmann::json& j) {
  EvalRecord r;
  r.index = j.at("index").get<std::size_t>();
  r.query = query_from_json(j.at("query"));
  r.gold = j.at("gold").get<EntityId>();
  r.ranked = j.at("ranked").get<std::vector<EntityId>>();
  if (!j.at("rank").is_null()) r.rank = j.at("rank").get<std::size_t>();
  r.unparsed = j.at("unparsed").get<bool>();
  r.fingerprint = j.at("fingerprint").get<std::string>();
  return r;
}

nlohmann::json to_json(const EvalReport& r) {
  return {{"fingerprint", r.fingerprint},
          {"hits", {{"1", r.hits1}, {"3", r.hits3}, {"10", r.hits10}}},
          {"n_queries", r.n_queries},
          {"n_unparsed", r.n_unparsed}};
}

nlohmann::json to_json(const SeedSummary& s) {
  nlohmann::json j{{"runs", s.runs}};
  const char* keys[] = {"1", "3", "10"};
  for (int m = 0; m < 3; ++m) {
    j["hits"][keys[m]] = {{"mean", s.mean[m]}, {"half_range", s.half_range[m]}};
  }
  return j;
}

}  // namespace gentkg
