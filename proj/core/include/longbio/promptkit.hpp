#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "longbio/biotext.hpp"
#include "longbio/corpus.hpp"
#include "longbio/rng.hpp"

namespace longbio {

// Every benchmark task this suite can instantiate. Citation with two
// questions uses its own prompt wording, so it gets its own kind.
enum class TaskKind {
  standard,
  multi_standard,
  paraphrase,
  pronoun,
  calculation,
  rank,
  twodiff,
  multihop,
  citation,
  citation_multi,
  idk,
  icl,
};

std::string task_kind_key(TaskKind kind);
TaskKind task_kind_from_key(const std::string& key);

// Reasoning and citation tasks are prompted 2-shot, everything else 0-shot.
int shot_count(TaskKind kind);
// Citation tasks show "Bio [k]: " prefixes in the context.
bool kind_numbered(TaskKind kind);
// Calculation, rank and twodiff swap birthdates for ages corpus-wide.
bool kind_age_mode(TaskKind kind);

struct PromptTemplateSet {
  std::string system;
  std::string user;       // carries {given_context}, {question}, maybe {examples}
  std::string assistant;  // generation prefix, maybe {question_prefix}
};

class PromptTemplates {
 public:
  static PromptTemplates load(const std::string& path);
  static PromptTemplates parse(const std::string& text);

  // Template group for a kind (paraphrase and pronoun reuse "standard").
  const PromptTemplateSet& group(TaskKind kind) const;

  std::string question(Attribute attr, const std::string& name, BirthMode mode) const;
  std::string question_prefix(Attribute attr, const std::string& name, BirthMode mode) const;
  std::string rank_question(const std::vector<std::string>& names) const;
  std::string calculation_question(const std::string& name1, const std::string& name2) const;
  std::string twodiff_question(int diff) const;
  std::string icl_question(const std::string& name) const;

  const std::string& refusal() const { return refusal_; }
  const std::string& exemplar_template(TaskKind kind) const;

 private:
  std::map<std::string, PromptTemplateSet> groups_;
  std::map<std::string, std::string> questions_;
  std::map<std::string, std::string> exemplars_;
  std::string question_prefix_;
  std::string refusal_;
};

// One standard-style sentence for a single attribute, used by miniature
// exemplar contexts.
std::string render_sentence(const TemplateBank& bank, const PersonProfile& person,
                            Attribute attr, Rng& rng);

// Two worked exemplars with miniature contexts, joined by a blank line.
// Sampled persons are recorded in taken_names so instances never reuse them.
std::string few_shot_examples(const PromptTemplates& templates, const AttributePool& pool,
                              const TemplateBank& bank, TaskKind kind, Rng& rng,
                              std::set<std::string>& taken_names);

struct PromptBundle {
  std::string system;
  std::string user;
  std::string assistant_prefix;
  std::string shots;  // exemplar block embedded in user ("" when 0-shot)
  TaskKind kind = TaskKind::standard;
};

struct TaskInstance;  // taskgen.hpp

PromptBundle build_prompt(const TaskInstance& instance, const PromptTemplates& templates);

}  // namespace longbio
