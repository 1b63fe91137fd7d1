#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "longbio/promptkit.hpp"
#include "longbio/taskgen.hpp"

namespace longbio {

// How the assistant prefix reached the model; user_append means the model may
// echo the prefix back, so scoring strips it.
enum class PrefixMode { continuation, user_append };

std::string prefix_mode_key(PrefixMode mode);
PrefixMode prefix_mode_from_key(const std::string& key);

// One scored response (or response pair, for idk). Self-contained: carries the
// grouping keys so reports never need the suite again.
struct ScoreRecord {
  std::string id;
  TaskKind kind = TaskKind::standard;
  long budget = 0;
  std::string attribute;   // questioned attribute for the retrieval family, else ""
  double depth = -1.0;     // single-needle instances only
  double density = -1.0;   // -1 when the suite ran without forced distractors
  bool pass = false;
  std::vector<std::string> answers;  // parsed, normalized
  std::set<int> citations;           // parsed "[k]" integers
  bool hallucination = false;        // set by hallucination_rate on failures
  std::string notes;
};

// lowercase, whitespace collapsed, terminal punctuation stripped
std::string normalize_answer(std::string_view text);

// Boundary-guarded containment on normalized strings: an occurrence does not
// count when it extends an alphanumeric run ("18" inside "180").
bool contains_bounded(const std::string& hay, const std::string& needle);

ScoreRecord score_exact(const std::string& response, const TaskInstance& inst,
                        const PromptTemplates& templates, PrefixMode mode);
ScoreRecord score_multi(const std::string& response, const TaskInstance& inst,
                        const PromptTemplates& templates, PrefixMode mode);
ScoreRecord score_rank(const std::string& response, const TaskInstance& inst,
                       const PromptTemplates& templates, PrefixMode mode);
ScoreRecord score_twodiff(const std::string& response, const TaskInstance& inst,
                          const PromptTemplates& templates, PrefixMode mode);
ScoreRecord score_citation(const std::string& response, const TaskInstance& inst,
                           const PromptTemplates& templates, PrefixMode mode);
ScoreRecord score_idk(const std::string& present_response, const std::string& absent_response,
                      const TaskInstance& present, const TaskInstance& absent,
                      const PromptTemplates& templates, PrefixMode mode);

// Dispatch on instance kind (idk needs its pair and is not dispatched here).
ScoreRecord score_response(const std::string& response, const TaskInstance& inst,
                           const PromptTemplates& templates, PrefixMode mode);

// Score a whole suite against an id -> response map. IDK halves are joined on
// pair_id into one record; instances without a response fail with a note.
std::vector<ScoreRecord> score_suite(const std::vector<TaskInstance>& suite,
                                     const std::map<std::string, std::string>& responses,
                                     const PromptTemplates& templates, PrefixMode mode);

struct HallucinationStats {
  int hallucinated = 0;
  int failed = 0;
  int total = 0;
  std::optional<double> rate;  // unset when nothing failed
};

// Flags failed single-retrieval records whose parsed answer never occurs in
// the context, and returns the counts. Mutates the matching records' flags.
HallucinationStats hallucination_rate(std::vector<ScoreRecord>& records,
                                      const std::vector<TaskInstance>& suite);

struct AggregateRow {
  std::string task;
  long budget = 0;
  std::string attribute;  // "all" for the group total
  int n = 0;
  int passed = 0;
  double accuracy = 0.0;
};

// task x budget rows, plus per-attribute rows where records carry one.
std::vector<AggregateRow> aggregate(const std::vector<ScoreRecord>& records);
std::string aggregate_csv(const std::vector<AggregateRow>& rows);

struct GridCell {
  double depth = 0.0;
  double density = 0.0;
  int n = 0;
  int passed = 0;
  double accuracy = 0.0;
};

// depth x density cells over records that carry both keys.
std::vector<GridCell> depth_density_grid(const std::vector<ScoreRecord>& records);
std::string grid_csv(const std::vector<GridCell>& cells);

struct SpearmanResult {
  double rho = 0.0;
  double p_value = 1.0;
};

// Rank correlation with average ranks on ties; two-sided p-value from the
// t-approximation.
SpearmanResult spearman(const std::vector<double>& xs, const std::vector<double>& ys);

// Regularized incomplete beta, exposed for the p-value computation and tests.
double incomplete_beta(double a, double b, double x);

// JSONL persistence, schema "longbio-score/1".
std::string record_to_json(const ScoreRecord& record);
ScoreRecord record_from_json(const std::string& line);
void write_score_log(const std::string& path, const std::vector<ScoreRecord>& records);
std::vector<ScoreRecord> read_score_log(const std::string& path);

}  // namespace longbio
