#include "gentkg/config.h"

#include <array>
#include <cstdio>
#include <fstream>
#include <set>

#include "gentkg/synthetic.h"

namespace gentkg {
namespace {

constexpr std::array<DatasetPreset, 4> kPresets{{
    {"icews14", "ICEWS14", 24},
    {"icews18", "ICEWS18", 24},
    {"gdelt", "GDELT", 15},
    {"yago", "YAGO", 1},
}};

std::string format_name(NameFormat f) {
  switch (f) {
    case NameFormat::kAuto: return "auto";
    case NameFormat::kIds: return "ids";
    case NameFormat::kNames: return "names";
  }
  return "auto";
}

NameFormat name_format_from(const std::string& s) {
  if (s == "auto") return NameFormat::kAuto;
  if (s == "ids") return NameFormat::kIds;
  if (s == "names") return NameFormat::kNames;
  throw std::invalid_argument("expected auto, ids or names");
}

// Reads typed fields from one JSON object, reporting failures by path and
// rejecting keys nobody asked for.
class Reader {
 public:
  Reader(const nlohmann::json& j, std::string path)
      : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where(""), "expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where(key), e.what());
    }
  }

  template <typename T>
  void get_optional(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    if (j_.at(key).is_null()) {
      out.reset();
      return;
    }
    T value{};
    get(key, value);
    out = value;
  }

  template <typename Fn>
  void get_with(const char* key, Fn&& fn) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      fn(j_.at(key));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(where(key), e.what());
    }
  }

  Reader child(const char* key) {
    seen_.insert(key);
    static const nlohmann::json kEmpty = nlohmann::json::object();
    return Reader(j_.contains(key) ? j_.at(key) : kEmpty, where(key));
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError(where(key), "unknown key");
    }
  }

  std::string where(const std::string& key) const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
void check(bool ok, const char* path, Fn&& message) {
  if (!ok) throw ConfigError(path, message());
}

}  // namespace

std::string fingerprint_of(const nlohmann::json& canonical) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::optional<DatasetPreset> find_preset(std::string_view name) {
  for (const auto& p : kPresets) {
    if (name == p.key) return p;
  }
  return std::nullopt;
}

void RunConfig::validate() const {
  try {
    mining.validate();
  } catch (const std::exception& e) {
    throw ConfigError("mining", e.what());
  }
  try {
    retrieval.validate();
  } catch (const std::exception& e) {
    throw ConfigError("retrieval", e.what());
  }
  try {
    gen.validate();
  } catch (const std::exception& e) {
    throw ConfigError("gen", e.what());
  }
  check(predictor == "oracle" || predictor == "llm", "predictor",
        [] { return "expected oracle or llm"; });
  check(split == "train" || split == "valid" || split == "test", "split",
        [] { return "expected train, valid or test"; });
  check(filter == "all" || filter == "test", "filter",
        [] { return "expected all or test"; });
  check(!seeds.empty(), "seeds", [] { return "at least one seed required"; });
  check(k >= 1, "k", [] { return "must be >= 1"; });
  check(!dataset.time_gap || *dataset.time_gap >= 1, "dataset.time_gap",
        [] { return "must be >= 1"; });
  check(!limit || *limit >= 1, "limit", [] { return "must be >= 1"; });
  for (const auto& o : orders) {
    try {
      fact_order_from_string(o);
    } catch (const std::exception& e) {
      throw ConfigError("ablation.orders", e.what());
    }
  }
  for (const auto& f : formats) {
    try {
      prompt_format_from_string(f);
    } catch (const std::exception& e) {
      throw ConfigError("ablation.formats", e.what());
    }
  }
  for (auto n : history_lengths) {
    check(n >= 1, "ablation.history_lengths", [] { return "must be >= 1"; });
  }
}

nlohmann::json to_json(const RunConfig& cfg) {
  nlohmann::json dataset{{"name", cfg.dataset.name},
                         {"data_root", cfg.dataset.data_root.string()},
                         {"format", format_name(cfg.dataset.format)},
                         {"inverse", cfg.dataset.inverse}};
  dataset["time_gap"] = cfg.dataset.time_gap
                            ? nlohmann::json(*cfg.dataset.time_gap)
                            : nlohmann::json();
  nlohmann::json j{{"dataset", dataset},
                   {"mining", to_json(cfg.mining)},
                   {"mine_on_valid", cfg.mine_on_valid},
                   {"retrieval", to_json(cfg.retrieval)},
                   {"prompt", to_json(cfg.prompt)},
                   {"gen", to_json(cfg.gen)},
                   {"endpoint", cfg.endpoint},
                   {"predictor", cfg.predictor},
                   {"split", cfg.split},
                   {"filter", cfg.filter},
                   {"seeds", cfg.seeds},
                   {"k", cfg.k},
                   {"output_dir", cfg.output_dir.string()},
                   {"threads", cfg.threads},
                   {"ablation",
                    {{"orders", cfg.orders},
                     {"history_lengths", cfg.history_lengths},
                     {"formats", cfg.formats}}}};
  j["limit"] = cfg.limit ? nlohmann::json(*cfg.limit) : nlohmann::json();
  return j;
}

nlohmann::json RunConfig::canonical() const {
  auto j = to_json(*this);
  j.erase("output_dir");
  j.erase("threads");
  j["dataset"].erase("data_root");
  // Transport tuning does not change results.
  for (const char* key : {"timeout_ms", "retry_budget", "backoff_ms",
                          "max_backoff_ms", "max_in_flight"}) {
    j["gen"].erase(key);
  }
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig cfg;
  Reader root(j, "");

  {
    auto r = root.child("dataset");
    r.get("name", cfg.dataset.name);
    std::string root_dir = cfg.dataset.data_root.string();
    r.get("data_root", root_dir);
    cfg.dataset.data_root = root_dir;
    r.get_optional("time_gap", cfg.dataset.time_gap);
    r.get_with("format", [&](const nlohmann::json& v) {
      cfg.dataset.format = name_format_from(v.get<std::string>());
    });
    r.get("inverse", cfg.dataset.inverse);
    r.finish();
  }
  {
    auto r = root.child("mining");
    r.get("num_walks", cfg.mining.num_walks);
    r.get("rule_length", cfg.mining.rule_length);
    r.get("min_body_support", cfg.mining.min_body_support);
    r.get("grounding_cap", cfg.mining.grounding_cap);
    r.get("seed", cfg.mining.seed);
    r.finish();
  }
  root.get("mine_on_valid", cfg.mine_on_valid);
  {
    auto r = root.child("retrieval");
    r.get_optional("window", cfg.retrieval.window);
    r.get_optional("top_k", cfg.retrieval.top_k);
    r.get("max_history", cfg.retrieval.max_history);
    r.get("stepwise", cfg.retrieval.stepwise);
    r.finish();
  }
  {
    auto r = root.child("prompt");
    r.get_with("format", [&](const nlohmann::json& v) {
      cfg.prompt.format = prompt_format_from_string(v.get<std::string>());
    });
    r.get_with("order", [&](const nlohmann::json& v) {
      cfg.prompt.order = fact_order_from_string(v.get<std::string>());
    });
    r.get("order_seed", cfg.prompt.order_seed);
    r.get("max_facts", cfg.prompt.max_facts);
    r.get("instruction", cfg.prompt.instruction);
    r.finish();
  }
  {
    auto r = root.child("gen");
    r.get("max_new_tokens", cfg.gen.max_new_tokens);
    r.get("num_sequences", cfg.gen.num_sequences);
    r.get("temperature", cfg.gen.temperature);
    r.get("passthrough", cfg.gen.passthrough);
    auto ms = [&](const char* key, std::chrono::milliseconds& out) {
      auto v = out.count();
      r.get(key, v);
      out = std::chrono::milliseconds(v);
    };
    ms("timeout_ms", cfg.gen.timeout);
    r.get("retry_budget", cfg.gen.retry_budget);
    ms("backoff_ms", cfg.gen.backoff);
    ms("max_backoff_ms", cfg.gen.max_backoff);
    r.get("max_in_flight", cfg.gen.max_in_flight);
    r.finish();
  }
  root.get("endpoint", cfg.endpoint);
  root.get("predictor", cfg.predictor);
  root.get("split", cfg.split);
  root.get("filter", cfg.filter);
  root.get("seeds", cfg.seeds);
  root.get("k", cfg.k);
  std::string out_dir = cfg.output_dir.string();
  root.get("output_dir", out_dir);
  cfg.output_dir = out_dir;
  root.get_optional("limit", cfg.limit);
  root.get("threads", cfg.threads);
  {
    auto r = root.child("ablation");
    r.get("orders", cfg.orders);
    r.get("history_lengths", cfg.history_lengths);
    r.get("formats", cfg.formats);
    r.finish();
  }
  root.finish();
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError(file.string(), "cannot open config file");
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError(file.string(), "invalid JSON");
  return run_config_from_json(j);
}

Dataset open_dataset(const DatasetRef& ref) {
  if (ref.name == "synthetic") {
    PlantedSpec spec;
    spec.inverse = ref.inverse;
    return make_planted_dataset(spec);
  }
  DatasetSpec spec;
  spec.format = ref.format;
  spec.inverse = ref.inverse;
  std::filesystem::path dir = ref.name;
  if (auto preset = find_preset(ref.name)) {
    dir = ref.data_root / preset->directory;
    spec.time_gap = preset->time_gap;
  }
  if (ref.time_gap) spec.time_gap = *ref.time_gap;
  return load_dataset(dir, spec);
}

}  // namespace gentkg
