#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "longbio/promptkit.hpp"
#include "longbio/scorekit.hpp"
#include "longbio/taskgen.hpp"

namespace longbio {

struct RetryPolicy {
  int max_attempts = 4;
  int base_delay_ms = 250;  // doubles per retry, capped below
  int max_delay_ms = 4000;
};

struct Decoding {
  double temperature = 0.0;
  int max_tokens = 256;            // replies without exemplars
  int reasoning_max_tokens = 1024; // replies that may reason before answering
};

struct RunManifest {
  std::string run_id;
  std::string endpoint;  // base URL, path prefix allowed: http://host:port/v1
  std::string model;
  std::string suite_path;
  std::string api_key_env;  // env var holding the bearer token; "" sends none
  Decoding decoding;
  PrefixMode prefix_mode = PrefixMode::continuation;
  int concurrency = 4;
  RetryPolicy retry;
  std::string created;  // ISO 8601, stamped by the caller
};

std::string manifest_to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const std::string& text);
void write_manifest(const std::string& path, const RunManifest& manifest);
RunManifest read_manifest(const std::string& path);

std::string iso_timestamp_now();

struct ModelResponse {
  std::string instance_id;
  std::string text;
  std::string finish_reason;  // "stop", "length", "over_length", ...
  long latency_ms = 0;
  int attempts = 1;
};

std::string response_to_json(const ModelResponse& response);
ModelResponse response_from_json(const std::string& line);
std::vector<ModelResponse> read_run_log(const std::string& path);
std::map<std::string, std::string> responses_by_id(const std::vector<ModelResponse>& responses);

// POST body for one instance; dry runs and live runs share this byte for byte.
std::string request_body(const TaskInstance& instance, const PromptTemplates& templates,
                         const RunManifest& manifest);

// One request body per line, suite order, no network.
void dry_run_export(const std::vector<TaskInstance>& suite, const PromptTemplates& templates,
                    const RunManifest& manifest, const std::string& out_path);

using ProgressFn = std::function<void(size_t done, size_t total)>;

// Drives {endpoint}/chat/completions with a bounded worker pool. Responses
// append to the JSONL log as they land; instances already in the log are not
// re-sent, so an interrupted run resumes by rerunning. Client errors abort
// with the server's body, except context-length rejections, which are logged
// as finish_reason "over_length" and skipped. Server errors and timeouts back
// off exponentially. Returns all responses for the suite in suite order.
std::vector<ModelResponse> run_batch(const std::vector<TaskInstance>& suite,
                                     const PromptTemplates& templates,
                                     const RunManifest& manifest, const std::string& log_path,
                                     const ProgressFn& progress = nullptr);

}  // namespace longbio
