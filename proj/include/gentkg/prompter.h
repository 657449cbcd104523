#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gentkg/kg_store.h"
#include "gentkg/retriever.h"
#include "gentkg/rule_miner.h"

namespace gentkg {

enum class PromptFormat { kIndex, kLexical };
enum class FactOrder { kAscending, kDescending, kRandom, kTimestampsRemoved };

inline constexpr std::string_view kDefaultInstruction =
    "You must predict the missing object entity at the end of the last "
    "quadruplet. Each fact has the form time:[subject, relation, "
    "index.object]. Respond with index.object only.";

struct PromptConfig {
  PromptFormat format = PromptFormat::kIndex;
  FactOrder order = FactOrder::kAscending;
  // Seed for FactOrder::kRandom.
  std::uint64_t order_seed = 0;
  std::size_t max_facts = 50;
  std::string instruction{kDefaultInstruction};

  friend bool operator==(const PromptConfig&, const PromptConfig&) = default;
};

struct Prompt {
  std::string text;
  // Object entity -> n in "n.name", assigned in first-appearance order over
  // the rendered lines. Empty in lexical format.
  std::map<EntityId, std::uint32_t> index_map;
  std::string query_prefix;
  PromptFormat format = PromptFormat::kIndex;

  // Entity carrying index `n`, if any.
  std::optional<EntityId> entity_at(std::uint32_t n) const;
};

struct InstructionSample {
  std::string instruction;
  std::string input;
  std::string output;
};

// Spaces inside names become underscores.
std::string display_name(std::string_view name);

Prompt build_prompt(const RetrievedHistory& history, const SharedVocab& vocab,
                    const PromptConfig& cfg);

InstructionSample make_instruction_sample(const RetrievedHistory& history,
                                          const SharedVocab& vocab,
                                          const PromptConfig& cfg);

// One rendered history line read back through the prompt grammar. Names are
// display names; timestamp and index are absent when not rendered.
struct ParsedLine {
  std::optional<TimeStep> t;
  std::string subject;
  std::string relation;
  std::optional<std::uint32_t> index;
  std::string object;
};
std::optional<ParsedLine> parse_history_line(std::string_view line);

// K distinct indices drawn uniformly without replacement from [0, n),
// ascending.
std::vector<std::size_t> sample_fewshot(std::size_t n, std::size_t k,
                                        std::uint64_t seed);

struct ExportResult {
  std::size_t samples = 0;
  nlohmann::json manifest;
};

// Writes `out` as JSON lines {"instruction", "input", "output"} for K
// uniformly sampled training queries, plus `out` + ".manifest.json".
// Each sample's history is retrieved from `train` strictly before the query.
ExportResult export_finetune_set(const Dataset& ds, const RuleBank& bank,
                                 std::size_t k,
                                 const RetrievalConfig& retrieval,
                                 const PromptConfig& prompt,
                                 std::uint64_t seed,
                                 const std::filesystem::path& out,
                                 unsigned threads = 0);

std::string to_string(PromptFormat f);
std::string to_string(FactOrder o);
PromptFormat prompt_format_from_string(std::string_view s);
FactOrder fact_order_from_string(std::string_view s);
nlohmann::json to_json(const PromptConfig& cfg);
PromptConfig prompt_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const InstructionSample& s);
nlohmann::json to_json(const DatasetStats& st);

}  // namespace gentkg
