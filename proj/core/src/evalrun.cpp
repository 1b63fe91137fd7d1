#include "longbio/evalrun.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "json.hpp"
#include "longbio/http.hpp"
#include "longbio/util.hpp"

namespace longbio {

using nlohmann::json;

namespace {

constexpr const char* kManifestSchema = "longbio-run-manifest/1";
constexpr const char* kRunSchema = "longbio-run/1";

}  // namespace

std::string manifest_to_json(const RunManifest& m) {
  json j;
  j["schema"] = kManifestSchema;
  j["run_id"] = m.run_id;
  j["endpoint"] = m.endpoint;
  j["model"] = m.model;
  j["suite_path"] = m.suite_path;
  j["api_key_env"] = m.api_key_env;
  j["temperature"] = m.decoding.temperature;
  j["max_tokens"] = m.decoding.max_tokens;
  j["reasoning_max_tokens"] = m.decoding.reasoning_max_tokens;
  j["prefix_mode"] = prefix_mode_key(m.prefix_mode);
  j["concurrency"] = m.concurrency;
  j["retry"] = {{"max_attempts", m.retry.max_attempts},
                {"base_delay_ms", m.retry.base_delay_ms},
                {"max_delay_ms", m.retry.max_delay_ms}};
  j["created"] = m.created;
  return j.dump();
}

RunManifest manifest_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("bad run manifest: ") + e.what());
  }
  if (j.value("schema", "") != kManifestSchema)
    throw Error("run manifest: expected schema " + std::string(kManifestSchema));
  RunManifest m;
  try {
    m.run_id = j.at("run_id").get<std::string>();
    m.endpoint = j.at("endpoint").get<std::string>();
    m.model = j.at("model").get<std::string>();
    m.suite_path = j.at("suite_path").get<std::string>();
    m.api_key_env = j.at("api_key_env").get<std::string>();
    m.decoding.temperature = j.at("temperature").get<double>();
    m.decoding.max_tokens = j.at("max_tokens").get<int>();
    m.decoding.reasoning_max_tokens = j.at("reasoning_max_tokens").get<int>();
    m.prefix_mode = prefix_mode_from_key(j.at("prefix_mode").get<std::string>());
    m.concurrency = j.at("concurrency").get<int>();
    m.retry.max_attempts = j.at("retry").at("max_attempts").get<int>();
    m.retry.base_delay_ms = j.at("retry").at("base_delay_ms").get<int>();
    m.retry.max_delay_ms = j.at("retry").at("max_delay_ms").get<int>();
    m.created = j.at("created").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(std::string("run manifest missing field: ") + e.what());
  }
  if (m.concurrency < 1) throw Error("run manifest: concurrency must be >= 1");
  if (m.retry.max_attempts < 1) throw Error("run manifest: max_attempts must be >= 1");
  return m;
}

void write_manifest(const std::string& path, const RunManifest& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write run manifest: " + path);
  out << manifest_to_json(manifest) << '\n';
}

RunManifest read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read run manifest: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return manifest_from_json(text);
}

std::string iso_timestamp_now() {
  std::time_t now = std::time(nullptr);
  std::tm utc{};
  gmtime_r(&now, &utc);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
  return buf;
}

std::string response_to_json(const ModelResponse& r) {
  json j;
  j["schema"] = kRunSchema;
  j["id"] = r.instance_id;
  j["text"] = r.text;
  j["finish_reason"] = r.finish_reason;
  j["latency_ms"] = r.latency_ms;
  j["attempts"] = r.attempts;
  return j.dump();
}

ModelResponse response_from_json(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(std::string("bad run log line: ") + e.what());
  }
  if (j.value("schema", "") != kRunSchema)
    throw Error("run log: expected schema " + std::string(kRunSchema));
  ModelResponse r;
  try {
    r.instance_id = j.at("id").get<std::string>();
    r.text = j.at("text").get<std::string>();
    r.finish_reason = j.at("finish_reason").get<std::string>();
    r.latency_ms = j.at("latency_ms").get<long>();
    r.attempts = j.at("attempts").get<int>();
  } catch (const json::exception& e) {
    throw Error(std::string("run log line missing field: ") + e.what());
  }
  return r;
}

std::vector<ModelResponse> read_run_log(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read run log: " + path);
  std::vector<ModelResponse> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(response_from_json(line));
  }
  return out;
}

std::map<std::string, std::string> responses_by_id(const std::vector<ModelResponse>& responses) {
  std::map<std::string, std::string> out;
  for (const auto& r : responses) out[r.instance_id] = r.text;
  return out;
}

std::string request_body(const TaskInstance& instance, const PromptTemplates& templates,
                         const RunManifest& manifest) {
  PromptBundle bundle = build_prompt(instance, templates);
  json messages = json::array();
  messages.push_back({{"role", "system"}, {"content", bundle.system}});
  if (manifest.prefix_mode == PrefixMode::continuation) {
    messages.push_back({{"role", "user"}, {"content", bundle.user}});
    if (!bundle.assistant_prefix.empty())
      messages.push_back({{"role", "assistant"}, {"content", bundle.assistant_prefix}});
  } else {
    std::string user = bundle.user;
    if (!bundle.assistant_prefix.empty()) {
      user += "\n\n";
      user += bundle.assistant_prefix;
    }
    messages.push_back({{"role", "user"}, {"content", user}});
  }
  json j;
  j["model"] = manifest.model;
  j["messages"] = messages;
  j["temperature"] = manifest.decoding.temperature;
  j["max_tokens"] = instance.examples_block.empty() ? manifest.decoding.max_tokens
                                                    : manifest.decoding.reasoning_max_tokens;
  return j.dump();
}

void dry_run_export(const std::vector<TaskInstance>& suite, const PromptTemplates& templates,
                    const RunManifest& manifest, const std::string& out_path) {
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw Error("cannot write dry-run export: " + out_path);
  for (const auto& inst : suite) out << request_body(inst, templates, manifest) << '\n';
  if (!out) throw Error("failed writing dry-run export: " + out_path);
}

namespace {

bool is_over_length(const std::string& body) {
  const std::string lowered = to_lower(body);
  return contains(lowered, "context length") || contains(lowered, "context_length") ||
         contains(lowered, "maximum context");
}

ModelResponse post_one(const TaskInstance& instance, const std::string& body,
                       const RunManifest& manifest, const std::string& url,
                       const HttpHeaders& headers) {
  ModelResponse out;
  out.instance_id = instance.id;
  int delay_ms = manifest.retry.base_delay_ms;
  for (int attempt = 1;; ++attempt) {
    out.attempts = attempt;
    const auto start = std::chrono::steady_clock::now();
    HttpReply reply = http_post(url, body, "application/json", headers);
    out.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::steady_clock::now() - start)
                         .count();
    if (reply.status / 100 == 2) {
      json j;
      try {
        j = json::parse(reply.body);
        const json& choice = j.at("choices").at(0);
        out.text = choice.at("message").at("content").get<std::string>();
        out.finish_reason = choice.value("finish_reason", "stop");
        if (out.finish_reason.empty()) out.finish_reason = "stop";
      } catch (const json::exception& e) {
        throw Error("unparseable completion for " + instance.id + ": " + e.what() + ": " +
                    reply.body.substr(0, 200));
      }
      return out;
    }
    if (reply.status / 100 == 4) {
      if (is_over_length(reply.body)) {
        out.text.clear();
        out.finish_reason = "over_length";
        return out;
      }
      throw Error("endpoint rejected " + instance.id + " with status " +
                  std::to_string(reply.status) + ": " + reply.body);
    }
    // transport failure, timeout or 5xx: back off and retry
    if (attempt >= manifest.retry.max_attempts) {
      const std::string why =
          reply.status == 0 ? reply.error : "status " + std::to_string(reply.status);
      throw Error("giving up on " + instance.id + " after " + std::to_string(attempt) +
                  " attempts: " + why);
    }
    const int capped = std::min(delay_ms, manifest.retry.max_delay_ms);
    if (capped > 0) std::this_thread::sleep_for(std::chrono::milliseconds(capped));
    delay_ms = delay_ms > 0 ? std::min(delay_ms * 2, manifest.retry.max_delay_ms) : 0;
  }
}

}  // namespace

std::vector<ModelResponse> run_batch(const std::vector<TaskInstance>& suite,
                                     const PromptTemplates& templates,
                                     const RunManifest& manifest, const std::string& log_path,
                                     const ProgressFn& progress) {
  std::map<std::string, ModelResponse> done;
  if (std::filesystem::exists(log_path))
    for (auto& r : read_run_log(log_path)) done[r.instance_id] = std::move(r);

  std::vector<const TaskInstance*> pending;
  for (const auto& inst : suite)
    if (!done.count(inst.id)) pending.push_back(&inst);

  HttpHeaders headers;
  if (!manifest.api_key_env.empty()) {
    const char* key = std::getenv(manifest.api_key_env.c_str());
    if (key == nullptr || *key == '\0')
      throw Error("API key env var is not set: " + manifest.api_key_env);
    headers.emplace_back("Authorization", std::string("Bearer ") + key);
  }
  std::string endpoint = manifest.endpoint;
  while (!endpoint.empty() && endpoint.back() == '/') endpoint.pop_back();
  const std::string url = endpoint + "/chat/completions";

  std::ofstream log(log_path, std::ios::binary | std::ios::app);
  if (!log) throw Error("cannot open run log for append: " + log_path);

  std::mutex mu;  // guards log, done and first_error
  std::atomic<size_t> next{0};
  std::atomic<bool> bail{false};
  std::exception_ptr first_error;

  auto worker = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= pending.size() || bail.load()) return;
      const TaskInstance& inst = *pending[i];
      try {
        const std::string body = request_body(inst, templates, manifest);
        ModelResponse resp = post_one(inst, body, manifest, url, headers);
        std::lock_guard<std::mutex> lock(mu);
        log << response_to_json(resp) << '\n';
        log.flush();
        done[resp.instance_id] = std::move(resp);
        if (progress) progress(done.size(), suite.size());
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first_error) first_error = std::current_exception();
        bail.store(true);
        return;
      }
    }
  };

  const size_t nworkers =
      std::max<size_t>(1, std::min<size_t>(manifest.concurrency, pending.size()));
  std::vector<std::thread> pool;
  pool.reserve(nworkers);
  for (size_t i = 0; i < nworkers; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);

  std::vector<ModelResponse> out;
  out.reserve(suite.size());
  for (const auto& inst : suite) {
    auto it = done.find(inst.id);
    if (it != done.end()) out.push_back(it->second);
  }
  return out;
}

}  // namespace longbio
