#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "longbio/biotext.hpp"
#include "longbio/contextforge.hpp"
#include "longbio/corpus.hpp"
#include "longbio/promptkit.hpp"
#include "longbio/rng.hpp"

namespace longbio {

enum class GoldKind {
  value,         // single string
  value_list,    // ordered list, all-or-nothing
  name_order,    // names youngest to oldest
  pair_diff,     // any two context names with the target age difference
  citation_set,  // bio indices as displayed ("Bio [k]" -> k)
  refusal,       // canonical refusal string expected
  category,      // "Category k"
};

std::string gold_kind_key(GoldKind kind);
GoldKind gold_kind_from_key(const std::string& key);

struct Gold {
  GoldKind kind = GoldKind::value;
  std::vector<std::string> values;    // answers; diagnostics for citation_set
  std::set<int> citations;            // citation_set only
  int target_diff = 0;                // pair_diff only
  std::map<std::string, int> ages;    // pair_diff acceptance table: every context person
};

struct NeedleMeta {
  std::string name;       // full name of the needle person
  std::string attribute;  // questioned attribute key
  int bio_index = -1;     // position in context.bios / 0-based citation index
  double depth = 0.0;     // requested fractional insertion depth
};

struct TaskInstance {
  std::string id;
  TaskKind kind = TaskKind::standard;
  BioStyle style = BioStyle::standard;
  long length_budget = 0;  // total prompt budget the context was sized against
  PackedContext context;
  std::vector<std::string> questions;
  std::vector<std::string> question_prefixes;  // aligned with questions
  Gold gold;
  std::vector<NeedleMeta> needles;
  std::optional<double> density;
  std::string examples_block;  // rendered 2-shot block ("" for 0-shot kinds)
  std::string pair_id;         // links the two halves of an IDK pair
};

// Shared read-only inputs for all generators.
struct GenDeps {
  const AttributePool* pool = nullptr;
  const TemplateBank* bank = nullptr;
  const PromptTemplates* prompts = nullptr;
  const std::string* essay = nullptr;  // needed for HaystackMode::essay
};

// Tokens reserved for the model's reply when sizing contexts.
inline constexpr long kGenerationReserve = 256;

// Prompt-overhead tokens for an instance rendered with an empty context;
// the context budget is length_budget minus this minus kGenerationReserve.
long prompt_overhead(const TaskInstance& instance, const PromptTemplates& templates,
                     const TokenCounter& counter);

// spec.token_budget carries the TOTAL prompt budget; generators subtract the
// instance's prompt overhead before packing.
TaskInstance gen_retrieval(const GenDeps& deps, BioStyle style, const ContextSpec& spec,
                           Rng& rng);
TaskInstance gen_multi_retrieval(const GenDeps& deps, int n, const ContextSpec& spec, Rng& rng);
TaskInstance gen_calculation(const GenDeps& deps, const ContextSpec& spec, Rng& rng);
TaskInstance gen_rank(const GenDeps& deps, int n, const ContextSpec& spec, Rng& rng);
TaskInstance gen_twodiff(const GenDeps& deps, const ContextSpec& spec, int target_diff,
                         Rng& rng);
TaskInstance gen_multihop(const GenDeps& deps, const ContextSpec& spec, Rng& rng);
TaskInstance gen_citation(const GenDeps& deps, int n, const ContextSpec& spec, Rng& rng);
std::pair<TaskInstance, TaskInstance> gen_idk_pair(const GenDeps& deps, const ContextSpec& spec,
                                                   Rng& rng);

// Hidden initial-letter to category map for the ICL task.
struct IclMap {
  std::map<char, int> category_of;  // uppercase initial -> 1..10

  static IclMap build(const AttributePool& pool, Rng& rng);
  int category(const std::string& university) const;
  std::string label(const std::string& university) const;  // "Category k"
};

TaskInstance gen_icl(const GenDeps& deps, const IclMap& map, int num_demos,
                     const ContextSpec& spec, Rng& rng);

// Suite-level driver: deterministic per (seed, kind, budget, index), parallel
// over instance indices.
struct SuiteSpec {
  TaskKind kind = TaskKind::standard;
  int n = 1;            // arity for multi_standard (2|5|10), rank (2|5), citation (1|2)
  int target_diff = 0;  // twodiff; 0 samples 1..25 per instance
  long budget = 2048;
  int count = 800;
  uint64_t seed = 0;
  std::string counter_spec = "words";
  std::optional<double> density;
  std::vector<double> depths;  // fixed needle depths; empty = uniform random
  HaystackMode mode = HaystackMode::bios;
  std::string essay_path;      // required for essay mode
  int icl_demos = 1 << 20;     // cap; budget binds first
  int threads = 0;             // 0 = hardware concurrency
};

std::vector<TaskInstance> generate_suite(const GenDeps& deps, const SuiteSpec& spec);

// JSONL persistence, schema "longbio/1".
std::string instance_to_json(const TaskInstance& instance);
TaskInstance instance_from_json(const std::string& line);
void write_suite(const std::string& path, const std::vector<TaskInstance>& suite);
std::vector<TaskInstance> read_suite(const std::string& path);

}  // namespace longbio
