#include "gentkg/prompter.h"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "gentkg/parallel.h"

namespace gentkg {
namespace {

bool all_digits(std::string_view s) {
  return !s.empty() &&
         std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

template <typename Int>
bool parse_int(std::string_view text, Int& out) {
  if (!all_digits(text)) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && ptr == text.data() + text.size();
}

std::vector<RetrievedFact> ordered_facts(const RetrievedHistory& history,
                                         const PromptConfig& cfg) {
  const auto& facts = history.facts;
  const auto keep = std::min(cfg.max_facts, facts.size());
  std::vector<RetrievedFact> out(facts.end() - static_cast<std::ptrdiff_t>(keep),
                                 facts.end());
  switch (cfg.order) {
    case FactOrder::kAscending:
    case FactOrder::kTimestampsRemoved:
      break;
    case FactOrder::kDescending:
      std::reverse(out.begin(), out.end());
      break;
    case FactOrder::kRandom: {
      const auto& q = history.query;
      std::mt19937_64 rng(derive_seed(cfg.order_seed, q.subject, q.relation,
                                      static_cast<std::uint64_t>(q.t)));
      // Fisher-Yates with a plain modulo draw so the order does not depend
      // on the standard library's distribution implementation.
      for (std::size_t i = out.size(); i > 1; --i) {
        std::swap(out[i - 1], out[rng() % i]);
      }
      break;
    }
  }
  return out;
}

}  // namespace

std::optional<EntityId> Prompt::entity_at(std::uint32_t n) const {
  for (const auto& [entity, index] : index_map) {
    if (index == n) return entity;
  }
  return std::nullopt;
}

std::string display_name(std::string_view name) {
  std::string out(name);
  std::replace(out.begin(), out.end(), ' ', '_');
  return out;
}

Prompt build_prompt(const RetrievedHistory& history, const SharedVocab& vocab,
                    const PromptConfig& cfg) {
  Prompt prompt;
  prompt.format = cfg.format;
  const bool timestamps = cfg.order != FactOrder::kTimestampsRemoved;
  const auto& q = history.query;

  std::string body;
  for (const auto& rf : ordered_facts(history, cfg)) {
    const auto& f = rf.fact;
    if (timestamps) body += std::to_string(f.t) + ":";
    body += "[" + display_name(vocab.entity_name(f.subject)) + ", " +
            display_name(vocab.relation_name(f.relation)) + ", ";
    if (cfg.format == PromptFormat::kIndex) {
      auto [it, inserted] = prompt.index_map.try_emplace(
          f.object, static_cast<std::uint32_t>(prompt.index_map.size()));
      body += std::to_string(it->second) + ".";
    }
    body += display_name(vocab.entity_name(f.object)) + "]\n";
  }

  if (timestamps) prompt.query_prefix = std::to_string(q.t) + ":";
  prompt.query_prefix += "[" + display_name(vocab.entity_name(q.subject)) +
                         ", " + display_name(vocab.relation_name(q.relation)) +
                         ",";
  prompt.text = cfg.instruction + "\n" + body + prompt.query_prefix;
  return prompt;
}

InstructionSample make_instruction_sample(const RetrievedHistory& history,
                                          const SharedVocab& vocab,
                                          const PromptConfig& cfg) {
  if (!history.query.gold) {
    throw std::invalid_argument("instruction sample needs a gold object");
  }
  const auto prompt = build_prompt(history, vocab, cfg);
  const EntityId gold = *history.query.gold;
  InstructionSample sample;
  sample.instruction = cfg.instruction;
  sample.input = prompt.text.substr(cfg.instruction.size() + 1);
  if (cfg.format == PromptFormat::kIndex) {
    auto it = prompt.index_map.find(gold);
    const auto n = it != prompt.index_map.end()
                       ? it->second
                       : static_cast<std::uint32_t>(prompt.index_map.size());
    sample.output = std::to_string(n) + ".";
  }
  sample.output += display_name(vocab.entity_name(gold)) + "]";
  return sample;
}

std::optional<ParsedLine> parse_history_line(std::string_view line) {
  ParsedLine out;
  const auto bracket = line.find('[');
  if (bracket == std::string_view::npos || line.empty() || line.back() != ']') {
    return std::nullopt;
  }
  if (bracket > 0) {
    auto head = line.substr(0, bracket);
    if (head.back() != ':') return std::nullopt;
    TimeStep t = 0;
    if (!parse_int(head.substr(0, head.size() - 1), t)) return std::nullopt;
    out.t = t;
  }
  auto inner = line.substr(bracket + 1, line.size() - bracket - 2);
  const auto c1 = inner.find(", ");
  if (c1 == std::string_view::npos) return std::nullopt;
  const auto c2 = inner.find(", ", c1 + 2);
  if (c2 == std::string_view::npos) return std::nullopt;
  out.subject = std::string(inner.substr(0, c1));
  out.relation = std::string(inner.substr(c1 + 2, c2 - c1 - 2));
  auto object = inner.substr(c2 + 2);
  const auto dot = object.find('.');
  std::uint32_t n = 0;
  if (dot != std::string_view::npos && parse_int(object.substr(0, dot), n)) {
    out.index = n;
    object.remove_prefix(dot + 1);
  }
  out.object = std::string(object);
  if (out.subject.empty() || out.relation.empty() || out.object.empty()) {
    return std::nullopt;
  }
  return out;
}

std::vector<std::size_t> sample_fewshot(std::size_t n, std::size_t k,
                                        std::uint64_t seed) {
  if (k < 1 || k > n) {
    throw std::invalid_argument("few-shot K=" + std::to_string(k) +
                                " outside [1, " + std::to_string(n) + "]");
  }
  std::vector<std::size_t> out;
  out.reserve(k);
  std::mt19937_64 rng(seed);
  // Selection sampling over a forward range keeps the input order.
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::sample(all.begin(), all.end(), std::back_inserter(out), k, rng);
  return out;
}

ExportResult export_finetune_set(const Dataset& ds, const RuleBank& bank,
                                 std::size_t k,
                                 const RetrievalConfig& retrieval,
                                 const PromptConfig& prompt,
                                 std::uint64_t seed,
                                 const std::filesystem::path& out,
                                 unsigned threads) {
  const auto train = original_edges(ds.train);
  const auto picked = sample_fewshot(train.size(), k, seed);

  std::vector<std::string> lines(picked.size());
  parallel_for(picked.size(), threads, [&](std::size_t i) {
    const auto history =
        retrieve(ds.train, bank, query_of(train[picked[i]]), retrieval);
    lines[i] = to_json(make_instruction_sample(history, *ds.vocab, prompt))
                   .dump();
  });

  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  {
    std::ofstream file(out, std::ios::binary);
    if (!file) throw std::runtime_error("cannot write " + out.string());
    for (const auto& line : lines) file << line << '\n';
    if (!file) throw std::runtime_error("write failed: " + out.string());
  }

  ExportResult result;
  result.samples = lines.size();
  result.manifest = {{"k", k},
                     {"seed", seed},
                     {"samples", lines.size()},
                     {"output", out.filename().string()},
                     {"retrieval", to_json(retrieval)},
                     {"prompt", to_json(prompt)},
                     {"mining", to_json(bank.params())},
                     {"dataset", to_json(stats(ds))},
                     {"sample_indices", picked}};
  auto manifest_path = out;
  manifest_path += ".manifest.json";
  std::ofstream manifest(manifest_path, std::ios::binary);
  if (!manifest) throw std::runtime_error("cannot write " + manifest_path.string());
  manifest << result.manifest.dump(2) << '\n';
  return result;
}

std::string to_string(PromptFormat f) {
  return f == PromptFormat::kIndex ? "index" : "lexical";
}

std::string to_string(FactOrder o) {
  switch (o) {
    case FactOrder::kAscending: return "ascending";
    case FactOrder::kDescending: return "descending";
    case FactOrder::kRandom: return "random";
    case FactOrder::kTimestampsRemoved: return "removed";
  }
  return "ascending";
}

PromptFormat prompt_format_from_string(std::string_view s) {
  if (s == "index") return PromptFormat::kIndex;
  if (s == "lexical") return PromptFormat::kLexical;
  throw std::invalid_argument("unknown prompt format '" + std::string(s) + "'");
}

FactOrder fact_order_from_string(std::string_view s) {
  if (s == "ascending" || s == "original") return FactOrder::kAscending;
  if (s == "descending" || s == "reverse") return FactOrder::kDescending;
  if (s == "random") return FactOrder::kRandom;
  if (s == "removed" || s == "timestamps-removed") {
    return FactOrder::kTimestampsRemoved;
  }
  throw std::invalid_argument("unknown fact order '" + std::string(s) + "'");
}

nlohmann::json to_json(const PromptConfig& cfg) {
  return {{"format", to_string(cfg.format)},
          {"order", to_string(cfg.order)},
          {"order_seed", cfg.order_seed},
          {"max_facts", cfg.max_facts},
          {"instruction", cfg.instruction}};
}

PromptConfig prompt_config_from_json(const nlohmann::json& j) {
  PromptConfig cfg;
  if (j.contains("format")) {
    cfg.format = prompt_format_from_string(j.at("format").get<std::string>());
  }
  if (j.contains("order")) {
    cfg.order = fact_order_from_string(j.at("order").get<std::string>());
  }
  cfg.order_seed = j.value("order_seed", cfg.order_seed);
  cfg.max_facts = j.value("max_facts", cfg.max_facts);
  cfg.instruction = j.value("instruction", cfg.instruction);
  return cfg;
}

nlohmann::json to_json(const InstructionSample& s) {
  return {{"instruction", s.instruction},
          {"input", s.input},
          {"output", s.output}};
}

nlohmann::json to_json(const DatasetStats& st) {
  return {{"n_train", st.n_train},
          {"n_valid", st.n_valid},
          {"n_test", st.n_test},
          {"n_entities", st.n_entities},
          {"n_relations", st.n_relations},
          {"time_gap", st.time_gap},
          {"dropped_duplicates", st.dropped_duplicates}};
}

}  // namespace gentkg
