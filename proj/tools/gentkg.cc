// gentkg: command-line driver for rule mining, retrieval, prompt rendering,
// fine-tune export, inference and evaluation.
//
// Exit status: 0 ok, 1 validation, 2 runtime, 3 transport.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gentkg/config.h"
#include "gentkg/evaluator.h"
#include "gentkg/kg_store.h"
#include "gentkg/llm_client.h"
#include "gentkg/prompter.h"
#include "gentkg/retriever.h"
#include "gentkg/rule_miner.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace gentkg {
namespace {

enum ExitCode { kOk = 0, kValidation = 1, kRuntime = 2, kTransport = 3 };

// Flags as parsed; unset optionals leave the config file (or default) alone.
struct Overrides {
  std::string config_file;
  std::optional<std::string> dataset, data_root, format, output_dir, rules,
      endpoint, predictor, split, filter, prompt_format, order, instruction;
  std::optional<TimeStep> time_gap, window;
  std::optional<std::uint32_t> walks, max_new_tokens, num_sequences, retries;
  std::optional<std::uint64_t> min_body_support, grounding_cap, seed;
  std::optional<std::size_t> top_k, history, max_facts, k, limit, in_flight;
  std::optional<double> temperature;
  std::optional<long long> timeout_ms;
  std::optional<unsigned> threads;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> orders, formats;
  std::vector<std::size_t> lengths;
  bool no_inverse = false, mine_on_valid = false, stepwise = false;
};

void add_common(CLI::App& app, Overrides& o) {
  app.add_option("--config", o.config_file, "JSON run config; flags override it");
  app.add_option("--dataset", o.dataset,
                 "synthetic | icews14 | icews18 | gdelt | yago | <dir>");
  app.add_option("--data-root", o.data_root, "directory holding preset datasets");
  app.add_option("--time-gap", o.time_gap, "raw timestamp units per step");
  app.add_option("--format", o.format, "id-map handling: auto | ids | names");
  app.add_flag("--no-inverse", o.no_inverse, "disable inverse relations");
  app.add_option("--out", o.output_dir, "output directory");
  app.add_option("--seed", o.seed, "random seed");
  app.add_option("--threads", o.threads, "worker threads (0 = all cores)");
}

void add_mining(CLI::App& app, Overrides& o) {
  app.add_option("--walks", o.walks, "random walks per head relation");
  app.add_option("--min-body-support", o.min_body_support);
  app.add_option("--grounding-cap", o.grounding_cap);
  app.add_flag("--mine-on-valid", o.mine_on_valid, "mine on train + valid");
  app.add_option("--rules", o.rules, "reuse a mined rules.json");
}

void add_retrieval(CLI::App& app, Overrides& o) {
  app.add_option("--window", o.window, "time window length (default: full)");
  app.add_option("--top-k", o.top_k, "rule bodies per query relation");
  app.add_option("--history", o.history, "maximum history length");
  app.add_flag("--stepwise", o.stepwise, "walk back window by window");
  app.add_option("--split", o.split, "train | valid | test");
  app.add_option("--limit", o.limit, "use only the first N queries");
}

void add_prompt(CLI::App& app, Overrides& o) {
  app.add_option("--prompt-format", o.prompt_format, "index | lexical");
  app.add_option("--order", o.order,
                 "ascending | descending | random | removed");
  app.add_option("--max-facts", o.max_facts);
  app.add_option("--instruction", o.instruction);
}

void add_gen(CLI::App& app, Overrides& o) {
  app.add_option("--endpoint", o.endpoint,
                 std::string("completion URL (default $") + kEndpointEnv + ")");
  app.add_option("--max-new-tokens", o.max_new_tokens);
  app.add_option("--num-sequences", o.num_sequences);
  app.add_option("--temperature", o.temperature);
  app.add_option("--timeout-ms", o.timeout_ms);
  app.add_option("--retries", o.retries, "retry budget per request");
  app.add_option("--in-flight", o.in_flight, "maximum concurrent requests");
}

RunConfig resolve(const Overrides& o) {
  RunConfig cfg = o.config_file.empty() ? RunConfig{}
                                        : load_run_config(o.config_file);
  if (o.dataset) cfg.dataset.name = *o.dataset;
  if (o.data_root) cfg.dataset.data_root = *o.data_root;
  if (o.time_gap) cfg.dataset.time_gap = *o.time_gap;
  if (o.format) {
    cfg.dataset.format = *o.format == "ids"     ? NameFormat::kIds
                         : *o.format == "names" ? NameFormat::kNames
                         : *o.format == "auto"
                             ? NameFormat::kAuto
                             : throw ConfigError("dataset.format",
                                                 "expected auto, ids or names");
  }
  if (o.no_inverse) cfg.dataset.inverse = false;
  if (o.output_dir) cfg.output_dir = *o.output_dir;
  if (o.seed) {
    cfg.mining.seed = *o.seed;
    cfg.seeds = {*o.seed};
  }
  if (!o.seeds.empty()) cfg.seeds = o.seeds;
  if (o.threads) cfg.threads = *o.threads;
  if (o.walks) cfg.mining.num_walks = *o.walks;
  if (o.min_body_support) cfg.mining.min_body_support = *o.min_body_support;
  if (o.grounding_cap) cfg.mining.grounding_cap = *o.grounding_cap;
  if (o.mine_on_valid) cfg.mine_on_valid = true;
  if (o.window) cfg.retrieval.window = *o.window;
  if (o.top_k) cfg.retrieval.top_k = *o.top_k;
  if (o.history) cfg.retrieval.max_history = *o.history;
  if (o.stepwise) cfg.retrieval.stepwise = true;
  if (o.split) cfg.split = *o.split;
  if (o.limit) cfg.limit = *o.limit;
  try {
    if (o.prompt_format) {
      cfg.prompt.format = prompt_format_from_string(*o.prompt_format);
    }
    if (o.order) cfg.prompt.order = fact_order_from_string(*o.order);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("prompt", e.what());
  }
  if (o.max_facts) cfg.prompt.max_facts = *o.max_facts;
  if (o.instruction) cfg.prompt.instruction = *o.instruction;
  if (o.endpoint) cfg.endpoint = *o.endpoint;
  if (cfg.endpoint.empty()) {
    if (const char* env = std::getenv(kEndpointEnv)) cfg.endpoint = env;
  }
  if (o.max_new_tokens) cfg.gen.max_new_tokens = *o.max_new_tokens;
  if (o.num_sequences) cfg.gen.num_sequences = *o.num_sequences;
  if (o.temperature) cfg.gen.temperature = *o.temperature;
  if (o.timeout_ms) cfg.gen.timeout = std::chrono::milliseconds(*o.timeout_ms);
  if (o.retries) cfg.gen.retry_budget = *o.retries;
  if (o.in_flight) cfg.gen.max_in_flight = *o.in_flight;
  if (o.predictor) cfg.predictor = *o.predictor;
  if (o.filter) cfg.filter = *o.filter;
  if (o.k) cfg.k = *o.k;
  if (!o.orders.empty()) cfg.orders = o.orders;
  if (!o.formats.empty()) cfg.formats = o.formats;
  if (!o.lengths.empty()) cfg.history_lengths = o.lengths;
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void write_manifest(const RunConfig& cfg, const std::string& subcommand,
                    const Dataset& ds, const std::vector<std::string>& artifacts,
                    json extra = json::object()) {
  json manifest{{"tool", "gentkg"},
                {"subcommand", subcommand},
                {"fingerprint", cfg.fingerprint()},
                {"config", to_json(cfg)},
                {"dataset_stats", to_json(stats(ds))},
                {"artifacts", artifacts}};
  manifest.update(extra);
  write_text(cfg.output_dir / "manifest.json", manifest.dump(2) + "\n");
  write_text(cfg.output_dir / "FINGERPRINT", cfg.fingerprint() + "\n");
}

RuleBank mine_or_load(const RunConfig& cfg, const Overrides& o,
                      const Dataset& ds) {
  if (o.rules) {
    std::ifstream in(*o.rules);
    if (!in) throw ConfigError("rules", "cannot open " + *o.rules);
    auto j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("rules", "invalid JSON");
    return rule_bank_from_json(j);
  }
  auto params = cfg.mining;
  params.threads = cfg.threads;
  if (cfg.mine_on_valid) {
    const TemporalKG* views[] = {&ds.train, &ds.valid};
    return learn_rules(merge(views), params);
  }
  return learn_rules(ds.train, params);
}

const TemporalKG& split_of(const Dataset& ds, const std::string& split) {
  if (split == "train") return ds.train;
  if (split == "valid") return ds.valid;
  return ds.test;
}

std::vector<Query> split_queries(const RunConfig& cfg, const Dataset& ds) {
  std::vector<Query> queries;
  for (const auto& q : original_edges(split_of(ds, cfg.split))) {
    queries.push_back(query_of(q));
  }
  if (cfg.limit && queries.size() > *cfg.limit) queries.resize(*cfg.limit);
  if (queries.empty()) {
    throw ConfigError("dataset", "empty evaluation set (" + cfg.split +
                                     " split has no queries)");
  }
  return queries;
}

// Strict-past history graph for a split: train for train queries, every
// split otherwise.
TemporalKG history_graph(const Dataset& ds, const std::string& split) {
  if (split == "train") {
    const TemporalKG* views[] = {&ds.train};
    return merge(views);
  }
  const TemporalKG* views[] = {&ds.train, &ds.valid, &ds.test};
  return merge(views);
}

CompletionClient make_client(const RunConfig& cfg) {
  if (cfg.endpoint.empty()) {
    throw ConfigError("endpoint", std::string("no endpoint; pass --endpoint "
                                              "or set ") + kEndpointEnv);
  }
  try {
    return CompletionClient(Endpoint::parse(cfg.endpoint), cfg.gen);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("endpoint", e.what());
  }
}

int cmd_mine(const Overrides& o) {
  const auto cfg = resolve(o);
  const auto ds = open_dataset(cfg.dataset);
  fs::create_directories(cfg.output_dir);
  const auto bank = mine_or_load(cfg, o, ds);
  write_text(cfg.output_dir / "rules.json", to_json(bank).dump(2) + "\n");
  write_manifest(cfg, "mine", ds, {"rules.json"});
  std::cout << "mined " << bank.size() << " rules -> "
            << (cfg.output_dir / "rules.json").string() << "\n";
  return kOk;
}

int cmd_retrieve(const Overrides& o) {
  const auto cfg = resolve(o);
  const auto ds = open_dataset(cfg.dataset);
  fs::create_directories(cfg.output_dir);
  const auto bank = mine_or_load(cfg, o, ds);
  const auto queries = split_queries(cfg, ds);
  const auto graph = history_graph(ds, cfg.split);
  const auto histories =
      retrieve_batch(graph, bank, queries, cfg.retrieval, cfg.threads);
  std::ofstream out(cfg.output_dir / "histories.jsonl", std::ios::binary);
  for (const auto& h : histories) out << to_json(h).dump() << '\n';
  write_manifest(cfg, "retrieve", ds, {"histories.jsonl"});
  std::cout << "retrieved " << histories.size() << " histories\n";
  return kOk;
}

json prompt_record(const Prompt& p, const Query& q) {
  json index_map = json::array();
  for (const auto& [entity, n] : p.index_map) index_map.push_back({entity, n});
  return {{"query", to_json(q)},
          {"text", p.text},
          {"query_prefix", p.query_prefix},
          {"index_map", index_map}};
}

int cmd_prompt(const Overrides& o) {
  const auto cfg = resolve(o);
  const auto ds = open_dataset(cfg.dataset);
  fs::create_directories(cfg.output_dir);
  const auto bank = mine_or_load(cfg, o, ds);
  const auto queries = split_queries(cfg, ds);
  const auto graph = history_graph(ds, cfg.split);
  const auto histories =
      retrieve_batch(graph, bank, queries, cfg.retrieval, cfg.threads);
  std::ofstream out(cfg.output_dir / "prompts.jsonl", std::ios::binary);
  for (const auto& h : histories) {
    out << prompt_record(build_prompt(h, *ds.vocab, cfg.prompt), h.query).dump()
        << '\n';
  }
  write_manifest(cfg, "prompt", ds, {"prompts.jsonl"});
  std::cout << "rendered " << histories.size() << " prompts\n";
  return kOk;
}

int cmd_export(const Overrides& o) {
  auto cfg = resolve(o);
  const auto ds = open_dataset(cfg.dataset);
  fs::create_directories(cfg.output_dir);
  // Fine-tune data never sees rules mined beyond the training split.
  cfg.mine_on_valid = false;
  const auto bank = mine_or_load(cfg, o, ds);
  const auto n_train = ds.train.num_original();
  if (cfg.k > n_train) {
    throw ConfigError("k", "K=" + std::to_string(cfg.k) + " exceeds " +
                               std::to_string(n_train) + " training queries");
  }
  const auto file = cfg.output_dir / "finetune.jsonl";
  const auto result = export_finetune_set(ds, bank, cfg.k, cfg.retrieval,
                                          cfg.prompt, cfg.seeds.front(), file,
                                          cfg.threads);
  write_manifest(cfg, "export", ds,
                 {"finetune.jsonl", "finetune.jsonl.manifest.json"},
                 {{"samples", result.samples}});
  std::cout << "exported " << result.samples << " samples -> "
            << file.string() << "\n";
  return kOk;
}

int cmd_infer(const Overrides& o) {
  const auto cfg = resolve(o);
  const auto ds = open_dataset(cfg.dataset);
  fs::create_directories(cfg.output_dir);
  const auto client = make_client(cfg);
  const auto bank = mine_or_load(cfg, o, ds);
  const auto queries = split_queries(cfg, ds);
  const auto graph = history_graph(ds, cfg.split);
  const auto histories =
      retrieve_batch(graph, bank, queries, cfg.retrieval, cfg.threads);
  std::vector<Prompt> prompts;
  std::vector<std::string> texts;
  for (const auto& h : histories) {
    prompts.push_back(build_prompt(h, *ds.vocab, cfg.prompt));
    texts.push_back(prompts.back().text);
  }
  const auto responses = client.generate_batch(texts);
  const EntityResolver resolver(*ds.vocab);
  std::ofstream out(cfg.output_dir / "predictions.jsonl", std::ios::binary);
  std::size_t failed = 0;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    json rec{{"query", to_json(histories[i].query)}};
    if (responses[i].error) {
      if (responses[i].error->kind() == ClientErrorKind::kTransport) {
        throw *responses[i].error;
      }
      ++failed;
      rec["error"] = {{"kind", to_string(responses[i].error->kind())},
                      {"message", responses[i].error->what()}};
    } else {
      const auto list =
          parse_predictions(responses[i].sequences, prompts[i], resolver);
      rec["completions"] = responses[i].sequences;
      rec["ranked"] = list.ranked;
      rec["unresolved"] = list.unresolved;
    }
    out << rec.dump() << '\n';
  }
  write_manifest(cfg, "infer", ds, {"predictions.jsonl"},
                 {{"failed_requests", failed}});
  std::cout << "inferred " << responses.size() << " queries (" << failed
            << " endpoint errors)\n";
  if (failed > 0) {
    std::cerr << "error: " << failed << " requests failed; see predictions.jsonl\n";
    return kRuntime;
  }
  return kOk;
}

struct EvalSetup {
  Dataset ds;
  EvalContext ctx;
  std::vector<Query> queries;
};

EvalSetup eval_setup(const RunConfig& cfg) {
  EvalSetup s{open_dataset(cfg.dataset), {}, {}};
  s.ctx = make_eval_context(s.ds);
  s.queries = s.ctx.test_queries;
  if (cfg.limit && s.queries.size() > *cfg.limit) s.queries.resize(*cfg.limit);
  if (s.queries.empty()) {
    throw ConfigError("dataset", "empty evaluation set (test split has no "
                                 "queries)");
  }
  return s;
}

std::unique_ptr<Predictor> make_predictor(const RunConfig& cfg,
                                          const RuleBank& bank,
                                          const Dataset& ds) {
  if (cfg.predictor == "llm") {
    return std::make_unique<LlmPredictor>(make_client(cfg), *ds.vocab);
  }
  return std::make_unique<OraclePredictor>(bank);
}

int cmd_eval(const Overrides& o) {
  const auto cfg = resolve(o);
  auto setup = eval_setup(cfg);
  fs::create_directories(cfg.output_dir);
  const auto& filter =
      cfg.filter == "test" ? setup.ctx.test_facts : setup.ctx.all_facts;

  std::vector<EvalReport> reports;
  std::vector<std::string> artifacts{"report.json"};
  for (const auto seed : cfg.seeds) {
    auto seeded = cfg;
    seeded.mining.seed = seed;
    seeded.seeds = {seed};
    const auto bank = mine_or_load(seeded, o, setup.ds);
    auto predictor = make_predictor(seeded, bank, setup.ds);
    EvalInputs inputs{&setup.ds, &bank, &setup.ctx.history, setup.queries};
    EvalConfig ecfg{seeded.retrieval, seeded.prompt, 64, seeded.threads,
                    seeded.fingerprint()};
    const auto tag = std::to_string(seed);
    const auto run = run_eval(inputs, filter, *predictor, ecfg,
                              cfg.output_dir / ("journal-" + tag + ".jsonl"));
    std::ofstream records(cfg.output_dir / ("records-" + tag + ".jsonl"),
                          std::ios::binary);
    for (const auto& r : run.records) records << to_json(r).dump() << '\n';
    artifacts.push_back("records-" + tag + ".jsonl");
    artifacts.push_back("journal-" + tag + ".jsonl");
    reports.push_back(run.report);
    std::cout << "seed " << seed << ": hits@1 " << run.report.hits1
              << " hits@3 " << run.report.hits3 << " hits@10 "
              << run.report.hits10 << " (" << run.report.n_queries
              << " queries, " << run.resumed << " resumed)\n";
  }

  json report = to_json(reports.front());
  report["fingerprint"] = cfg.fingerprint();
  report["predictor"] = cfg.predictor;
  report["per_seed"] = json::array();
  for (std::size_t i = 0; i < reports.size(); ++i) {
    auto r = to_json(reports[i]);
    r["seed"] = cfg.seeds[i];
    report["per_seed"].push_back(r);
  }
  if (reports.size() > 1) report["seed_summary"] = to_json(summarize_seeds(reports));
  write_text(cfg.output_dir / "report.json", report.dump(2) + "\n");
  write_manifest(cfg, "eval", setup.ds, artifacts);
  return kOk;
}

int cmd_ablate(const Overrides& o) {
  const auto cfg = resolve(o);
  auto setup = eval_setup(cfg);
  fs::create_directories(cfg.output_dir);
  const auto& filter =
      cfg.filter == "test" ? setup.ctx.test_facts : setup.ctx.all_facts;
  const auto bank = mine_or_load(cfg, o, setup.ds);
  auto predictor = make_predictor(cfg, bank, setup.ds);

  AblationGrid grid;
  for (const auto& s : cfg.orders) grid.orders.push_back(fact_order_from_string(s));
  for (const auto& s : cfg.formats) {
    grid.formats.push_back(prompt_format_from_string(s));
  }
  grid.history_lengths = cfg.history_lengths;
  EvalInputs inputs{&setup.ds, &bank, &setup.ctx.history, setup.queries};
  EvalConfig ecfg{cfg.retrieval, cfg.prompt, 64, cfg.threads, cfg.fingerprint()};
  const auto cells = ablation_run(inputs, filter, *predictor, grid, ecfg);

  const auto table = ablation_table(cells);
  write_text(cfg.output_dir / "ablation.tsv", table);
  json reports = json::array();
  for (const auto& c : cells) {
    auto r = to_json(c.report);
    r["order"] = to_string(c.order);
    r["history_length"] = c.history_length;
    r["format"] = to_string(c.format);
    reports.push_back(r);
  }
  write_text(cfg.output_dir / "ablation.json", reports.dump(2) + "\n");
  write_manifest(cfg, "ablate", setup.ds, {"ablation.tsv", "ablation.json"});
  std::cout << table;
  return kOk;
}

}  // namespace
}  // namespace gentkg

int main(int argc, char** argv) {
  using namespace gentkg;
  CLI::App app{"gentkg: temporal rule mining, retrieval and generative "
               "forecasting evaluation"};
  app.require_subcommand(1);
  Overrides o;

  auto* mine = app.add_subcommand("mine", "mine temporal logical rules");
  add_common(*mine, o);
  add_mining(*mine, o);

  auto* retrieve = app.add_subcommand("retrieve", "rule-based history retrieval");
  add_common(*retrieve, o);
  add_mining(*retrieve, o);
  add_retrieval(*retrieve, o);

  auto* prompt = app.add_subcommand("prompt", "render prompts for a split");
  add_common(*prompt, o);
  add_mining(*prompt, o);
  add_retrieval(*prompt, o);
  add_prompt(*prompt, o);

  auto* exp = app.add_subcommand("export", "write a K-shot fine-tune set");
  add_common(*exp, o);
  add_mining(*exp, o);
  add_retrieval(*exp, o);
  add_prompt(*exp, o);
  exp->add_option("--k", o.k, "number of samples");

  auto* infer = app.add_subcommand("infer", "query a completion endpoint");
  add_common(*infer, o);
  add_mining(*infer, o);
  add_retrieval(*infer, o);
  add_prompt(*infer, o);
  add_gen(*infer, o);

  auto* eval = app.add_subcommand("eval", "filtered Hits@1/3/10 evaluation");
  add_common(*eval, o);
  add_mining(*eval, o);
  add_retrieval(*eval, o);
  add_prompt(*eval, o);
  add_gen(*eval, o);
  eval->add_option("--predictor", o.predictor, "oracle | llm");
  eval->add_option("--filter", o.filter, "filter universe: all | test");
  eval->add_option("--seeds", o.seeds, "run once per seed")->delimiter(',');

  auto* ablate = app.add_subcommand("ablate", "order x history x format grid");
  add_common(*ablate, o);
  add_mining(*ablate, o);
  add_retrieval(*ablate, o);
  add_prompt(*ablate, o);
  add_gen(*ablate, o);
  ablate->add_option("--predictor", o.predictor, "oracle | llm");
  ablate->add_option("--filter", o.filter, "filter universe: all | test");
  ablate->add_option("--orders", o.orders)->delimiter(',');
  ablate->add_option("--lengths", o.lengths)->delimiter(',');
  ablate->add_option("--formats", o.formats)->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidation;
  }

  try {
    if (*mine) return cmd_mine(o);
    if (*retrieve) return cmd_retrieve(o);
    if (*prompt) return cmd_prompt(o);
    if (*exp) return cmd_export(o);
    if (*infer) return cmd_infer(o);
    if (*eval) return cmd_eval(o);
    if (*ablate) return cmd_ablate(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kValidation;
  } catch (const MiningError& e) {
    std::cerr << "config error: mining: " << e.what() << "\n";
    return kValidation;
  } catch (const ClientError& e) {
    std::cerr << to_string(e.kind()) << " error: " << e.what() << "\n";
    return e.kind() == ClientErrorKind::kTransport ? kTransport : kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kRuntime;
}
