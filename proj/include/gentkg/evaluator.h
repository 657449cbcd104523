#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "gentkg/kg_store.h"
#include "gentkg/llm_client.h"
#include "gentkg/prompter.h"
#include "gentkg/retriever.h"
#include "gentkg/rule_miner.h"

namespace gentkg {

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every known (s, r, o, t) used to filter co-true answers.
class FactSet {
 public:
  FactSet() = default;
  explicit FactSet(std::span<const TemporalKG* const> views);
  void insert(const Quadruple& q) { facts_.insert(q); }
  bool contains(const Quadruple& q) const { return facts_.contains(q); }
  std::size_t size() const { return facts_.size(); }

 private:
  std::unordered_set<Quadruple, QuadrupleHash> facts_;
};

// Drops every o' != gold with (query.s, query.r, o', query.t) known true.
PredictionList time_aware_filter(const PredictionList& ranked,
                                 const Query& query, EntityId gold,
                                 const FactSet& facts);

struct EvalRecord {
  std::size_t index = 0;
  Query query;
  EntityId gold = 0;
  std::vector<EntityId> ranked;
  std::optional<std::size_t> rank;
  bool unparsed = false;
  std::string fingerprint;
};

// 1-based position of gold in ranked, if present.
std::optional<std::size_t> gold_rank(std::span<const EntityId> ranked,
                                     EntityId gold);

// k must be 1, 3 or 10; throws EvalError on an empty record set.
double hits_at_k(std::span<const EvalRecord> records, std::size_t k);

struct EvalReport {
  std::string fingerprint;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
  std::size_t n_queries = 0;
  std::size_t n_unparsed = 0;
};

EvalReport aggregate(std::span<const EvalRecord> records,
                     const std::string& fingerprint);

// A query ready for prediction.
struct PreparedQuery {
  const RetrievedHistory* history = nullptr;
  Prompt prompt;
};

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::string name() const = 0;
  // Throws ClientError(kTransport) to abort the run.
  virtual std::vector<PredictionList> predict(
      std::span<const PreparedQuery> batch) = 0;
};

class OraclePredictor final : public Predictor {
 public:
  explicit OraclePredictor(const RuleBank& bank) : bank_(&bank) {}
  std::string name() const override { return "oracle"; }
  std::vector<PredictionList> predict(
      std::span<const PreparedQuery> batch) override;

 private:
  const RuleBank* bank_;
};

class LlmPredictor final : public Predictor {
 public:
  LlmPredictor(CompletionClient client, const SharedVocab& vocab)
      : client_(std::move(client)), resolver_(vocab) {}
  std::string name() const override { return "llm"; }
  std::vector<PredictionList> predict(
      std::span<const PreparedQuery> batch) override;

 private:
  CompletionClient client_;
  EntityResolver resolver_;
};

struct EvalConfig {
  RetrievalConfig retrieval;
  PromptConfig prompt;
  std::size_t chunk_size = 64;
  unsigned threads = 0;
  std::string fingerprint;
};

// Everything an evaluation needs besides the predictor.
struct EvalInputs {
  const Dataset* dataset = nullptr;
  const RuleBank* bank = nullptr;
  // Graph histories are drawn from (strict past of each query).
  const TemporalKG* history = nullptr;
  std::vector<Query> queries;
};

// Object-prediction queries for the test split, history over every split.
struct EvalContext {
  TemporalKG history;
  FactSet all_facts;
  FactSet test_facts;
  std::vector<Query> test_queries;
};
EvalContext make_eval_context(const Dataset& ds);

struct EvalRun {
  EvalReport report;
  std::vector<EvalRecord> records;
  std::size_t resumed = 0;
};

// retrieve -> prompt -> predict -> filter -> aggregate. With a journal path,
// completed records are appended as they finish and records already present
// under the same fingerprint are reused.
EvalRun run_eval(const EvalInputs& inputs, const FactSet& filter_facts,
                 Predictor& predictor, const EvalConfig& cfg,
                 const std::optional<std::filesystem::path>& journal = {});

struct AblationGrid {
  std::vector<FactOrder> orders;
  std::vector<std::size_t> history_lengths;
  std::vector<PromptFormat> formats;
};

struct AblationCell {
  FactOrder order = FactOrder::kAscending;
  std::size_t history_length = 50;
  PromptFormat format = PromptFormat::kIndex;
  EvalReport report;
};

// One report per grid cell; retrievals are shared across cells with the same
// history length.
std::vector<AblationCell> ablation_run(const EvalInputs& inputs,
                                       const FactSet& filter_facts,
                                       Predictor& predictor,
                                       const AblationGrid& grid,
                                       const EvalConfig& base);

std::string ablation_table(std::span<const AblationCell> cells);

struct SeedSummary {
  double mean[3] = {0, 0, 0};
  double half_range[3] = {0, 0, 0};
  std::size_t runs = 0;
};
SeedSummary summarize_seeds(std::span<const EvalReport> reports);

nlohmann::json to_json(const EvalRecord& r);
EvalRecord eval_record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EvalReport& r);
nlohmann::json to_json(const SeedSummary& s);

}  // namespace gentkg
