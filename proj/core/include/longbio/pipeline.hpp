#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "longbio/evalrun.hpp"

namespace longbio {

struct TaskConfig {
  std::string task;     // task kind key; "citation" with n = 2 is the two-question variant
  int n = 0;            // arity for multi_standard / rank / citation; 0 picks the default
  int target_diff = 0;  // twodiff; 0 samples 1..25 per instance
  int demos = 1 << 20;  // icl demo cap; the budget binds first
};

struct EndpointConfig {
  std::string url;
  std::string model;
  std::string api_key_env;
  int concurrency = 4;
  std::string prefix_mode = "continuation";
  int max_tokens = 256;
  int reasoning_max_tokens = 1024;
  int max_attempts = 4;
  int base_delay_ms = 250;
  int max_delay_ms = 4000;
};

struct PipelineConfig {
  uint64_t seed = 26;
  std::string pool_path;
  std::string template_path;
  std::string prompt_path;
  std::vector<TaskConfig> tasks;
  std::vector<long> budgets;
  int count = 800;  // instances per (task, budget)
  std::optional<double> density;
  std::vector<double> depths;
  std::string mode = "bios";  // bios | biah
  std::string essay_path;     // biah haystack source
  std::string counter = "words";
  int threads = 0;
  std::string out_dir = "out";
  EndpointConfig endpoint;
  std::string base_dir;  // directory of the config file; relative paths resolve against it
};

PipelineConfig config_from_json(const std::string& text, const std::string& base_dir);
PipelineConfig load_config(const std::string& path);

// Canonical form of everything that shapes the artifacts; its hash names the run.
std::string canonical_config_json(const PipelineConfig& config);
std::string config_hash(const PipelineConfig& config);

// Unique per-suite name: the kind key plus the arity where one applies.
std::string task_label(const TaskConfig& task);

struct Overrides {
  std::optional<uint64_t> seed;
  std::vector<long> budgets;       // non-empty restricts the grid
  std::vector<std::string> tasks;  // labels or kind keys; non-empty restricts
  std::optional<std::string> endpoint_url;
  bool dry_run = false;
};

void apply_overrides(PipelineConfig& config, const Overrides& overrides);

// generate | run | score | report. Returns 0 or throws Error with a one-line
// message; stages are re-runnable from the artifacts of earlier ones.
int run_pipeline(const std::string& command, PipelineConfig config, const Overrides& overrides,
                 std::ostream& log);

}  // namespace longbio
