#include "longbio/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "longbio/scorekit.hpp"
#include "longbio/taskgen.hpp"
#include "longbio/util.hpp"

namespace longbio {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kConfigSchema = "longbio-config/1";
constexpr const char* kSuiteManifestSchema = "longbio-suite-manifest/1";
constexpr const char* kScoreManifestSchema = "longbio-score-manifest/1";
constexpr const char* kReportManifestSchema = "longbio-report-manifest/1";

std::string resolved(const std::string& base, const std::string& path) {
  if (path.empty()) return path;
  fs::path p(path);
  if (p.is_absolute() || base.empty()) return path;
  return (fs::path(base) / p).lexically_normal().string();
}

int effective_n(const TaskConfig& t, TaskKind kind) {
  if (t.n > 0) return t.n;
  switch (kind) {
    case TaskKind::multi_standard:
    case TaskKind::rank:
      return 2;
    case TaskKind::citation_multi:
      return 2;
    default:
      return 1;
  }
}

void validate(const PipelineConfig& c) {
  if (c.tasks.empty()) throw Error("config: tasks must not be empty");
  for (const auto& t : c.tasks) task_kind_from_key(t.task);  // throws on unknown keys
  if (c.budgets.empty()) throw Error("config: budgets must not be empty");
  for (long b : c.budgets)
    if (b <= 0) throw Error("config: budgets must be positive, got " + std::to_string(b));
  if (c.count < 1) throw Error("config: count must be >= 1");
  if (c.mode != "bios" && c.mode != "biah")
    throw Error("config: mode must be bios or biah, got " + c.mode);
  if (c.mode == "biah" && c.essay_path.empty())
    throw Error("config: biah mode requires an essay path");
  if (c.density && (*c.density < 0.0 || *c.density > 1.0))
    throw Error("config: density must lie in [0, 1]");
  for (double d : c.depths)
    if (d < 0.0 || d > 1.0) throw Error("config: depths must lie in [0, 1]");
  prefix_mode_from_key(c.endpoint.prefix_mode);  // throws on unknown modes
  if (c.endpoint.concurrency < 1) throw Error("config: endpoint.concurrency must be >= 1");
  const std::pair<const char*, const std::string*> refs[] = {
      {"pool", &c.pool_path}, {"templates", &c.template_path}, {"prompts", &c.prompt_path}};
  for (const auto& [what, path] : refs) {
    if (path->empty()) throw Error(std::string("config: missing ") + what + " path");
    if (!fs::exists(resolved(c.base_dir, *path)))
      throw Error(std::string("config: ") + what + " file not found: " +
                  resolved(c.base_dir, *path));
  }
  if (!c.essay_path.empty() && !fs::exists(resolved(c.base_dir, c.essay_path)))
    throw Error("config: essay file not found: " + resolved(c.base_dir, c.essay_path));
}

struct LoadedData {
  AttributePool pool;
  TemplateBank bank;
  PromptTemplates prompts;

  explicit LoadedData(const PipelineConfig& c)
      : pool(load_pool(resolved(c.base_dir, c.pool_path))),
        bank(TemplateBank::load(resolved(c.base_dir, c.template_path))),
        prompts(PromptTemplates::load(resolved(c.base_dir, c.prompt_path))) {}

  GenDeps deps() const {
    GenDeps d;
    d.pool = &pool;
    d.bank = &bank;
    d.prompts = &prompts;
    return d;
  }
};

std::string artifact_name(const std::string& label, long budget, const char* suffix) {
  return label + "-" + std::to_string(budget) + suffix;
}

std::string file_hash(const std::string& path) { return hex64(fnv1a(read_file(path))); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

void require_artifact(const fs::path& path, const char* stage, const char* hint) {
  if (!fs::exists(path))
    throw Error(std::string(stage) + ": missing " + path.string() + "; run " + hint + " first");
}

SuiteSpec suite_spec(const PipelineConfig& c, const TaskConfig& t, long budget) {
  SuiteSpec s;
  s.kind = task_kind_from_key(t.task);
  s.n = effective_n(t, s.kind);
  s.target_diff = t.target_diff;
  s.budget = budget;
  s.count = c.count;
  s.seed = c.seed;
  s.counter_spec = c.counter;
  s.density = c.density;
  s.depths = c.depths;
  s.mode = c.mode == "biah" ? HaystackMode::essay : HaystackMode::bios;
  s.essay_path = resolved(c.base_dir, c.essay_path);
  s.icl_demos = t.demos;
  s.threads = c.threads;
  return s;
}

RunManifest run_manifest(const PipelineConfig& c, const std::string& label, long budget,
                         const std::string& suite_rel) {
  RunManifest m;
  m.run_id = label + "-" + std::to_string(budget);
  m.endpoint = c.endpoint.url;
  m.model = c.endpoint.model;
  m.suite_path = suite_rel;
  m.api_key_env = c.endpoint.api_key_env;
  m.decoding.temperature = 0.0;
  m.decoding.max_tokens = c.endpoint.max_tokens;
  m.decoding.reasoning_max_tokens = c.endpoint.reasoning_max_tokens;
  m.prefix_mode = prefix_mode_from_key(c.endpoint.prefix_mode);
  m.concurrency = c.endpoint.concurrency;
  m.retry.max_attempts = c.endpoint.max_attempts;
  m.retry.base_delay_ms = c.endpoint.base_delay_ms;
  m.retry.max_delay_ms = c.endpoint.max_delay_ms;
  m.created = iso_timestamp_now();
  return m;
}

int do_generate(const PipelineConfig& c, const std::string& hash, std::ostream& log) {
  LoadedData data(c);
  const fs::path out_dir = fs::path(resolved(c.base_dir, c.out_dir)) / "suites";
  fs::create_directories(out_dir);
  json entries = json::array();
  uint64_t combined = fnv1a(hash);
  for (const auto& t : c.tasks) {
    for (long budget : c.budgets) {
      const std::string label = task_label(t);
      auto suite = generate_suite(data.deps(), suite_spec(c, t, budget));
      const std::string rel = "suites/" + artifact_name(label, budget, ".jsonl");
      const fs::path path = out_dir / artifact_name(label, budget, ".jsonl");
      write_suite(path.string(), suite);
      const std::string h = file_hash(path.string());
      combined = fnv1a(h, combined);
      entries.push_back({{"task", label},
                         {"kind", t.task},
                         {"budget", budget},
                         {"path", rel},
                         {"instances", suite.size()},
                         {"content_hash", h}});
      log << "generated " << rel << " (" << suite.size() << " instances)\n";
    }
  }
  json manifest;
  manifest["schema"] = kSuiteManifestSchema;
  manifest["config_hash"] = hash;
  manifest["seed"] = c.seed;
  manifest["content_hash"] = hex64(combined);
  manifest["config"] = json::parse(canonical_config_json(c));
  manifest["suites"] = entries;
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  log << "content hash " << hex64(combined) << "\n";
  return 0;
}

int do_run(const PipelineConfig& c, bool dry_run, const std::string& hash, std::ostream& log) {
  if (c.endpoint.model.empty()) throw Error("run: endpoint.model must be set");
  if (!dry_run && c.endpoint.url.empty()) throw Error("run: endpoint.url must be set");
  LoadedData data(c);
  const fs::path out_root = resolved(c.base_dir, c.out_dir);
  fs::create_directories(out_root / "runs");
  for (const auto& t : c.tasks) {
    for (long budget : c.budgets) {
      const std::string label = task_label(t);
      const std::string suite_rel = "suites/" + artifact_name(label, budget, ".jsonl");
      const fs::path suite_path = out_root / suite_rel;
      require_artifact(suite_path, "run", "generate");
      auto suite = read_suite(suite_path.string());
      RunManifest rm = run_manifest(c, label, budget, suite_rel);
      if (dry_run) {
        const fs::path export_path = out_root / "runs" / artifact_name(label, budget, ".dryrun.jsonl");
        dry_run_export(suite, data.prompts, rm, export_path.string());
        log << "exported " << export_path.string() << " (" << suite.size() << " requests)\n";
      } else {
        const fs::path log_path = out_root / "runs" / artifact_name(label, budget, ".jsonl");
        auto responses = run_batch(suite, data.prompts, rm, log_path.string());
        size_t over = 0;
        for (const auto& r : responses) over += r.finish_reason == "over_length" ? 1 : 0;
        log << "ran " << rm.run_id << " (" << responses.size() << " responses";
        if (over) log << ", " << over << " over length";
        log << ")\n";
      }
      json meta = json::parse(manifest_to_json(rm));
      meta["config_hash"] = hash;
      meta["seed"] = c.seed;
      meta["suite_content_hash"] = file_hash(suite_path.string());
      write_text(out_root / "runs" / artifact_name(label, budget, ".manifest.json"),
                 meta.dump(2) + "\n");
    }
  }
  return 0;
}

int do_score(const PipelineConfig& c, const std::string& hash, std::ostream& log) {
  LoadedData data(c);
  const PrefixMode mode = prefix_mode_from_key(c.endpoint.prefix_mode);
  const fs::path out_root = resolved(c.base_dir, c.out_dir);
  fs::create_directories(out_root / "scores");
  json entries = json::array();
  for (const auto& t : c.tasks) {
    for (long budget : c.budgets) {
      const std::string label = task_label(t);
      const fs::path suite_path = out_root / "suites" / artifact_name(label, budget, ".jsonl");
      require_artifact(suite_path, "score", "generate");
      const fs::path run_path = out_root / "runs" / artifact_name(label, budget, ".jsonl");
      require_artifact(run_path, "score", "run");
      auto suite = read_suite(suite_path.string());
      auto responses = responses_by_id(read_run_log(run_path.string()));
      auto records = score_suite(suite, responses, data.prompts, mode);
      hallucination_rate(records, suite);  // stamp flags so reports need no contexts
      const std::string rel = "scores/" + artifact_name(label, budget, ".jsonl");
      write_score_log((out_root / rel).string(), records);
      int passed = 0;
      for (const auto& r : records) passed += r.pass ? 1 : 0;
      entries.push_back({{"task", label},
                         {"budget", budget},
                         {"path", rel},
                         {"records", records.size()},
                         {"passed", passed},
                         {"content_hash", file_hash((out_root / rel).string())}});
      log << "scored " << label << "-" << budget << ": " << passed << "/" << records.size()
          << "\n";
    }
  }
  json manifest;
  manifest["schema"] = kScoreManifestSchema;
  manifest["config_hash"] = hash;
  manifest["seed"] = c.seed;
  manifest["scores"] = entries;
  write_text(out_root / "scores" / "manifest.json", manifest.dump(2) + "\n");
  return 0;
}

bool hallucination_kind(TaskKind kind) {
  return kind == TaskKind::standard || kind == TaskKind::paraphrase ||
         kind == TaskKind::pronoun;
}

int do_report(const PipelineConfig& c, const std::string& hash, std::ostream& log) {
  const fs::path out_root = resolved(c.base_dir, c.out_dir);
  fs::create_directories(out_root / "report");
  std::string agg_csv = "task,budget,attribute,n,passed,accuracy\n";
  std::string hall_csv = "task,budget,hallucinated,failed,total,rate\n";
  std::vector<ScoreRecord> everything;
  json inputs = json::array();
  for (const auto& t : c.tasks) {
    for (long budget : c.budgets) {
      const std::string label = task_label(t);
      const fs::path path = out_root / "scores" / artifact_name(label, budget, ".jsonl");
      require_artifact(path, "report", "score");
      auto records = read_score_log(path.string());
      inputs.push_back({{"task", label},
                        {"budget", budget},
                        {"records", records.size()},
                        {"content_hash", file_hash(path.string())}});
      auto rows = aggregate(records);
      for (auto& row : rows) {
        row.task = label;  // keep arities like rank_2 and rank_5 apart
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4f", row.accuracy);
        agg_csv += row.task + "," + std::to_string(row.budget) + "," + row.attribute + "," +
                   std::to_string(row.n) + "," + std::to_string(row.passed) + "," + buf + "\n";
        if (row.attribute == "all")
          log << label << "-" << budget << " accuracy " << buf << " (" << row.passed << "/"
              << row.n << ")\n";
      }
      int hallucinated = 0, failed = 0, total = 0;
      for (const auto& r : records) {
        if (!hallucination_kind(r.kind)) continue;
        ++total;
        failed += r.pass ? 0 : 1;
        hallucinated += r.hallucination ? 1 : 0;
      }
      if (total > 0) {
        hall_csv += label + "," + std::to_string(budget) + "," + std::to_string(hallucinated) +
                    "," + std::to_string(failed) + "," + std::to_string(total) + ",";
        if (failed > 0) {
          char buf[32];
          std::snprintf(buf, sizeof buf, "%.4f", static_cast<double>(hallucinated) / failed);
          hall_csv += buf;
        }
        hall_csv += "\n";
      }
      everything.insert(everything.end(), records.begin(), records.end());
    }
  }
  write_text(out_root / "report" / "aggregate.csv", agg_csv);
  write_text(out_root / "report" / "hallucination.csv", hall_csv);
  write_text(out_root / "report" / "grid.csv", grid_csv(depth_density_grid(everything)));
  json manifest;
  manifest["schema"] = kReportManifestSchema;
  manifest["config_hash"] = hash;
  manifest["seed"] = c.seed;
  manifest["inputs"] = inputs;
  write_text(out_root / "report" / "manifest.json", manifest.dump(2) + "\n");
  log << "report written to " << (out_root / "report").string() << "\n";
  return 0;
}

}  // namespace

PipelineConfig config_from_json(const std::string& text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("bad config: ") + e.what());
  }
  if (j.value("schema", "") != kConfigSchema)
    throw Error("config: expected schema " + std::string(kConfigSchema));
  PipelineConfig c;
  c.base_dir = base_dir;
  try {
    c.seed = j.value("seed", uint64_t{26});
    c.pool_path = j.at("pool").get<std::string>();
    c.template_path = j.at("templates").get<std::string>();
    c.prompt_path = j.at("prompts").get<std::string>();
    for (const auto& jt : j.at("tasks")) {
      TaskConfig t;
      t.task = jt.at("task").get<std::string>();
      t.n = jt.value("n", 0);
      t.target_diff = jt.value("target_diff", 0);
      t.demos = jt.value("demos", 1 << 20);
      c.tasks.push_back(std::move(t));
    }
    c.budgets = j.at("budgets").get<std::vector<long>>();
    c.count = j.value("count", 800);
    if (j.contains("density") && !j.at("density").is_null())
      c.density = j.at("density").get<double>();
    c.depths = j.value("depths", std::vector<double>{});
    c.mode = j.value("mode", "bios");
    c.essay_path = j.value("essay", "");
    c.counter = j.value("counter", "words");
    c.threads = j.value("threads", 0);
    c.out_dir = j.value("out_dir", "out");
    if (j.contains("endpoint")) {
      const json& e = j.at("endpoint");
      c.endpoint.url = e.value("url", "");
      c.endpoint.model = e.value("model", "");
      c.endpoint.api_key_env = e.value("api_key_env", "");
      c.endpoint.concurrency = e.value("concurrency", 4);
      c.endpoint.prefix_mode = e.value("prefix_mode", "continuation");
      c.endpoint.max_tokens = e.value("max_tokens", 256);
      c.endpoint.reasoning_max_tokens = e.value("reasoning_max_tokens", 1024);
      c.endpoint.max_attempts = e.value("max_attempts", 4);
      c.endpoint.base_delay_ms = e.value("base_delay_ms", 250);
      c.endpoint.max_delay_ms = e.value("max_delay_ms", 4000);
    }
  } catch (const json::exception& e) {
    throw Error(std::string("config missing field: ") + e.what());
  }
  validate(c);
  return c;
}

PipelineConfig load_config(const std::string& path) {
  return config_from_json(read_file(path), fs::path(path).parent_path().string());
}

std::string canonical_config_json(const PipelineConfig& c) {
  json j;
  j["schema"] = kConfigSchema;
  j["seed"] = c.seed;
  j["pool"] = c.pool_path;
  j["templates"] = c.template_path;
  j["prompts"] = c.prompt_path;
  j["tasks"] = json::array();
  for (const auto& t : c.tasks)
    j["tasks"].push_back({{"task", t.task},
                          {"n", t.n},
                          {"target_diff", t.target_diff},
                          {"demos", t.demos}});
  j["budgets"] = c.budgets;
  j["count"] = c.count;
  if (c.density)
    j["density"] = *c.density;
  else
    j["density"] = nullptr;
  j["depths"] = c.depths;
  j["mode"] = c.mode;
  j["essay"] = c.essay_path;
  j["counter"] = c.counter;
  j["endpoint"] = {{"url", c.endpoint.url},
                   {"model", c.endpoint.model},
                   {"api_key_env", c.endpoint.api_key_env},
                   {"concurrency", c.endpoint.concurrency},
                   {"prefix_mode", c.endpoint.prefix_mode},
                   {"max_tokens", c.endpoint.max_tokens},
                   {"reasoning_max_tokens", c.endpoint.reasoning_max_tokens},
                   {"max_attempts", c.endpoint.max_attempts},
                   {"base_delay_ms", c.endpoint.base_delay_ms},
                   {"max_delay_ms", c.endpoint.max_delay_ms}};
  // out_dir and threads shape where and how fast, not what; they stay out of
  // the hash so moving artifacts does not orphan them
  return j.dump();
}

std::string config_hash(const PipelineConfig& c) { return hex64(fnv1a(canonical_config_json(c))); }

std::string task_label(const TaskConfig& t) {
  const TaskKind kind = task_kind_from_key(t.task);
  const int n = effective_n(t, kind);
  switch (kind) {
    case TaskKind::multi_standard:
    case TaskKind::rank:
      return t.task + "_" + std::to_string(n);
    case TaskKind::citation:
      return "citation_" + std::to_string(n);
    case TaskKind::citation_multi:
      return "citation_2";
    default:
      return t.task;
  }
}

void apply_overrides(PipelineConfig& c, const Overrides& ov) {
  if (ov.seed) c.seed = *ov.seed;
  if (!ov.budgets.empty()) {
    for (long b : ov.budgets)
      if (b <= 0) throw Error("budget override must be positive, got " + std::to_string(b));
    c.budgets = ov.budgets;
  }
  if (!ov.tasks.empty()) {
    std::vector<TaskConfig> picked;
    for (const auto& want : ov.tasks) {
      bool found = false;
      for (const auto& t : c.tasks) {
        if (task_label(t) == want || t.task == want) {
          picked.push_back(t);
          found = true;
          break;
        }
      }
      if (!found) throw Error("task override not in config: " + want);
    }
    c.tasks = std::move(picked);
  }
  if (ov.endpoint_url) c.endpoint.url = *ov.endpoint_url;
}

int run_pipeline(const std::string& command, PipelineConfig config, const Overrides& overrides,
                 std::ostream& log) {
  apply_overrides(config, overrides);
  validate(config);
  const std::string hash = config_hash(config);
  if (command == "generate") return do_generate(config, hash, log);
  if (command == "run") return do_run(config, overrides.dry_run, hash, log);
  if (command == "score") return do_score(config, hash, log);
  if (command == "report") return do_report(config, hash, log);
  throw Error("unknown command: " + command + " (expected generate|run|score|report)");
}

}  // namespace longbio
