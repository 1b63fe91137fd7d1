#include "longbio/promptkit.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>

#include "json.hpp"
#include "longbio/taskgen.hpp"
#include "longbio/util.hpp"

namespace longbio {

namespace {

using nlohmann::json;

const std::map<TaskKind, std::string>& kind_keys() {
  static const std::map<TaskKind, std::string> keys = {
      {TaskKind::standard, "standard"},
      {TaskKind::multi_standard, "multi_standard"},
      {TaskKind::paraphrase, "paraphrase"},
      {TaskKind::pronoun, "pronoun"},
      {TaskKind::calculation, "calculation"},
      {TaskKind::rank, "rank"},
      {TaskKind::twodiff, "twodiff"},
      {TaskKind::multihop, "multihop"},
      {TaskKind::citation, "citation"},
      {TaskKind::citation_multi, "citation_multi"},
      {TaskKind::idk, "idk"},
      {TaskKind::icl, "icl"},
  };
  return keys;
}

std::string group_key(TaskKind kind) {
  switch (kind) {
    case TaskKind::standard:
    case TaskKind::paraphrase:
    case TaskKind::pronoun:
      return "standard";
    default:
      return task_kind_key(kind);
  }
}

std::string capitalized(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

}  // namespace

std::string task_kind_key(TaskKind kind) { return kind_keys().at(kind); }

TaskKind task_kind_from_key(const std::string& key) {
  for (const auto& [kind, name] : kind_keys())
    if (name == key) return kind;
  throw Error("unknown task kind: " + key);
}

int shot_count(TaskKind kind) {
  switch (kind) {
    case TaskKind::calculation:
    case TaskKind::rank:
    case TaskKind::twodiff:
    case TaskKind::multihop:
    case TaskKind::citation:
    case TaskKind::citation_multi:
      return 2;
    default:
      return 0;
  }
}

bool kind_numbered(TaskKind kind) {
  return kind == TaskKind::citation || kind == TaskKind::citation_multi;
}

bool kind_age_mode(TaskKind kind) {
  return kind == TaskKind::calculation || kind == TaskKind::rank || kind == TaskKind::twodiff;
}

PromptTemplates PromptTemplates::load(const std::string& path) {
  return parse(read_file(path));
}

PromptTemplates PromptTemplates::parse(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("prompt templates are not valid JSON: ") + e.what());
  }
  if (doc.value("schema", "") != "longbio-prompts/1")
    throw Error("prompt templates: expected schema longbio-prompts/1");

  PromptTemplates out;
  const auto& groups = doc.at("templates");
  static const char* required_groups[] = {
      "standard", "multi_standard", "rank",     "calculation",    "multihop",
      "twodiff",  "citation",       "citation_multi", "idk",      "icl",
  };
  for (const char* name : required_groups) {
    if (!groups.contains(name)) throw Error(std::string("prompt templates: missing group ") + name);
    const auto& g = groups.at(name);
    PromptTemplateSet set;
    set.system = g.at("system").get<std::string>();
    set.user = g.at("user").get<std::string>();
    set.assistant = g.at("assistant").get<std::string>();
    if (!contains(set.user, "{given_context}"))
      throw Error(std::string("prompt group ") + name + ": user lacks {given_context}");
    if (!contains(set.user, "{question}"))
      throw Error(std::string("prompt group ") + name + ": user lacks {question}");
    out.groups_[name] = std::move(set);
  }

  static const char* required_questions[] = {"retrieval", "calculation", "rank", "twodiff",
                                             "icl"};
  for (const char* name : required_questions) {
    if (!doc.at("questions").contains(name))
      throw Error(std::string("prompt templates: missing question form ") + name);
    out.questions_[name] = doc.at("questions").at(name).get<std::string>();
  }

  out.question_prefix_ = doc.at("question_prefix").get<std::string>();
  if (!contains(out.question_prefix_, "{attribute}") || !contains(out.question_prefix_, "{name}"))
    throw Error("question_prefix must mention {attribute} and {name}");
  out.refusal_ = doc.at("refusal").get<std::string>();
  if (out.refusal_.empty()) throw Error("refusal string must not be empty");

  static const char* required_exemplars[] = {"calculation", "rank",     "multihop",
                                             "twodiff",     "citation", "citation_multi"};
  for (const char* name : required_exemplars) {
    if (!doc.at("exemplars").contains(name))
      throw Error(std::string("prompt templates: missing exemplar ") + name);
    out.exemplars_[name] = doc.at("exemplars").at(name).get<std::string>();
  }
  return out;
}

const PromptTemplateSet& PromptTemplates::group(TaskKind kind) const {
  auto it = groups_.find(group_key(kind));
  if (it == groups_.end()) throw Error("no prompt template registered for " + task_kind_key(kind));
  return it->second;
}

std::string PromptTemplates::question(Attribute attr, const std::string& name,
                                      BirthMode mode) const {
  return substitute(questions_.at("retrieval"),
                    {{"attribute", attribute_display(attr, mode == BirthMode::age)},
                     {"name", name}});
}

std::string PromptTemplates::question_prefix(Attribute attr, const std::string& name,
                                             BirthMode mode) const {
  return substitute(question_prefix_,
                    {{"attribute", attribute_display(attr, mode == BirthMode::age)},
                     {"name", name}});
}

std::string PromptTemplates::rank_question(const std::vector<std::string>& names) const {
  return substitute(questions_.at("rank"), {{"names", join(names, ", ")}});
}

std::string PromptTemplates::calculation_question(const std::string& name1,
                                                  const std::string& name2) const {
  return substitute(questions_.at("calculation"), {{"name1", name1}, {"name2", name2}});
}

std::string PromptTemplates::twodiff_question(int diff) const {
  return substitute(questions_.at("twodiff"), {{"diff", std::to_string(diff)}});
}

std::string PromptTemplates::icl_question(const std::string& name) const {
  return substitute(questions_.at("icl"), {{"name", name}});
}

const std::string& PromptTemplates::exemplar_template(TaskKind kind) const {
  auto it = exemplars_.find(task_kind_key(kind));
  if (it == exemplars_.end()) throw Error("no exemplar template for " + task_kind_key(kind));
  return it->second;
}

std::string render_sentence(const TemplateBank& bank, const PersonProfile& person,
                            Attribute attr, Rng& rng) {
  const auto& variants = bank.variants(BioStyle::standard, attr, person.mode);
  const std::string& tmpl = variants[rng.bounded(variants.size())];
  return substitute(tmpl, {{"name", person.name()}, {"value", person.value_of(attr)}});
}

namespace {

PersonProfile sample_aged(const AttributePool& pool, Rng& rng, std::set<std::string>& taken) {
  SampleOptions opts;
  opts.mode = BirthMode::age;
  return sample_profile(pool, rng, opts, taken);
}

PersonProfile sample_dated(const AttributePool& pool, Rng& rng, std::set<std::string>& taken) {
  SampleOptions opts;
  opts.mode = BirthMode::birthdate;
  return sample_profile(pool, rng, opts, taken);
}

Attribute random_attribute(Rng& rng) {
  return kAttributeOrder[rng.bounded(kAttributeOrder.size())];
}

std::string calculation_exemplar(const PromptTemplates& t, const AttributePool& pool, Rng& rng,
                                 std::set<std::string>& taken) {
  PersonProfile p1 = sample_aged(pool, rng, taken);
  PersonProfile p2 = sample_aged(pool, rng, taken);
  while (p2.age == p1.age) p2.age = 20 + static_cast<int>(rng.bounded(51));
  return substitute(t.exemplar_template(TaskKind::calculation),
                    {{"name1", p1.name()},
                     {"age1", std::to_string(p1.age)},
                     {"name2", p2.name()},
                     {"age2", std::to_string(p2.age)},
                     {"answer", std::to_string(std::abs(p1.age - p2.age))}});
}

std::string rank_exemplar(const PromptTemplates& t, const AttributePool& pool, Rng& rng,
                          std::set<std::string>& taken) {
  PersonProfile p1 = sample_aged(pool, rng, taken);
  PersonProfile p2 = sample_aged(pool, rng, taken);
  while (p2.age == p1.age) p2.age = 20 + static_cast<int>(rng.bounded(51));
  const PersonProfile& young = p1.age < p2.age ? p1 : p2;
  const PersonProfile& old = p1.age < p2.age ? p2 : p1;
  return substitute(t.exemplar_template(TaskKind::rank),
                    {{"name1", p1.name()},
                     {"age1", std::to_string(p1.age)},
                     {"name2", p2.name()},
                     {"age2", std::to_string(p2.age)},
                     {"answer", young.name() + ", " + old.name()}});
}

std::string twodiff_exemplar(const PromptTemplates& t, const AttributePool& pool, Rng& rng,
                             std::set<std::string>& taken) {
  PersonProfile p1 = sample_aged(pool, rng, taken);
  PersonProfile p2 = sample_aged(pool, rng, taken);
  PersonProfile p3 = sample_aged(pool, rng, taken);
  int diff = 1 + static_cast<int>(rng.bounded(25));
  p1.age = 20 + static_cast<int>(rng.bounded(static_cast<uint64_t>(51 - diff)));
  p2.age = p1.age + diff;
  do {
    p3.age = 20 + static_cast<int>(rng.bounded(51));
  } while (p3.age == p1.age || p3.age == p2.age || std::abs(p3.age - p1.age) == diff ||
           std::abs(p3.age - p2.age) == diff);
  return substitute(t.exemplar_template(TaskKind::twodiff),
                    {{"name1", p1.name()},
                     {"age1", std::to_string(p1.age)},
                     {"name2", p2.name()},
                     {"age2", std::to_string(p2.age)},
                     {"name3", p3.name()},
                     {"age3", std::to_string(p3.age)},
                     {"diff", std::to_string(diff)}});
}

std::string multihop_exemplar(const PromptTemplates& t, const AttributePool& pool, Rng& rng,
                              std::set<std::string>& taken) {
  PersonProfile p1 = sample_dated(pool, rng, taken);
  PersonProfile p2 = sample_dated(pool, rng, taken);
  return substitute(t.exemplar_template(TaskKind::multihop),
                    {{"name1", p1.name()},
                     {"name2", p2.name()},
                     {"city", p1.birthplace}});
}

std::string citation_exemplar(const PromptTemplates& t, const AttributePool& pool,
                              const TemplateBank& bank, Rng& rng,
                              std::set<std::string>& taken) {
  PersonProfile p1 = sample_dated(pool, rng, taken);
  PersonProfile p2 = sample_dated(pool, rng, taken);
  Attribute attr = random_attribute(rng);
  int index = 1 + static_cast<int>(rng.bounded(2));
  const PersonProfile& target = index == 1 ? p1 : p2;
  std::string clause =
      t.question_prefix(attr, target.name(), target.mode) + " " + target.value_of(attr);
  return substitute(t.exemplar_template(TaskKind::citation),
                    {{"sentence1", render_sentence(bank, p1, attr, rng)},
                     {"sentence2", render_sentence(bank, p2, attr, rng)},
                     {"question", t.question(attr, target.name(), target.mode)},
                     {"answer_clause", clause},
                     {"index", std::to_string(index)}});
}

std::string citation_multi_exemplar(const PromptTemplates& t, const AttributePool& pool,
                                    const TemplateBank& bank, Rng& rng,
                                    std::set<std::string>& taken) {
  PersonProfile p1 = sample_dated(pool, rng, taken);
  PersonProfile p2 = sample_dated(pool, rng, taken);
  Attribute attr1 = random_attribute(rng);
  Attribute attr2 = random_attribute(rng);
  std::string clause1 = t.question_prefix(attr1, p1.name(), p1.mode) + " " + p1.value_of(attr1);
  std::string clause2 = t.question_prefix(attr2, p2.name(), p2.mode) + " " + p2.value_of(attr2);
  return substitute(t.exemplar_template(TaskKind::citation_multi),
                    {{"sentence1", render_sentence(bank, p1, attr1, rng)},
                     {"sentence2", render_sentence(bank, p2, attr2, rng)},
                     {"question1", t.question(attr1, p1.name(), p1.mode)},
                     {"question2", t.question(attr2, p2.name(), p2.mode)},
                     {"answer_clause1", clause1},
                     {"index1", "1"},
                     {"answer_clause2", capitalized(clause2)},
                     {"index2", "2"}});
}

}  // namespace

std::string few_shot_examples(const PromptTemplates& templates, const AttributePool& pool,
                              const TemplateBank& bank, TaskKind kind, Rng& rng,
                              std::set<std::string>& taken_names) {
  if (shot_count(kind) == 0)
    throw Error("few_shot_examples: " + task_kind_key(kind) + " is prompted 0-shot");
  std::vector<std::string> blocks;
  for (int e = 0; e < shot_count(kind); ++e) {
    switch (kind) {
      case TaskKind::calculation:
        blocks.push_back(calculation_exemplar(templates, pool, rng, taken_names));
        break;
      case TaskKind::rank:
        blocks.push_back(rank_exemplar(templates, pool, rng, taken_names));
        break;
      case TaskKind::twodiff:
        blocks.push_back(twodiff_exemplar(templates, pool, rng, taken_names));
        break;
      case TaskKind::multihop:
        blocks.push_back(multihop_exemplar(templates, pool, rng, taken_names));
        break;
      case TaskKind::citation:
        blocks.push_back(citation_exemplar(templates, pool, bank, rng, taken_names));
        break;
      case TaskKind::citation_multi:
        blocks.push_back(citation_multi_exemplar(templates, pool, bank, rng, taken_names));
        break;
      default:
        throw Error("few_shot_examples: no exemplar builder for " + task_kind_key(kind));
    }
  }
  return join(blocks, "\n\n");
}

PromptBundle build_prompt(const TaskInstance& instance, const PromptTemplates& templates) {
  const PromptTemplateSet& g = templates.group(instance.kind);
  if (instance.questions.empty()) throw Error("build_prompt: instance has no questions");

  std::string qblock;
  if (instance.kind == TaskKind::multi_standard || instance.kind == TaskKind::citation_multi) {
    std::vector<std::string> lines;
    for (size_t i = 0; i < instance.questions.size(); ++i)
      lines.push_back("Question " + std::to_string(i + 1) + ": " + instance.questions[i]);
    qblock = join(lines, "\n");
  } else {
    qblock = instance.questions[0];
  }

  const bool wants_shots = contains(g.user, "{examples}");
  if (wants_shots && instance.examples_block.empty())
    throw Error("build_prompt: " + task_kind_key(instance.kind) + " requires an exemplar block");

  std::vector<std::pair<std::string, std::string>> vars = {
      {"given_context", instance.context.text},
      {"question", qblock},
  };
  if (wants_shots) vars.emplace_back("examples", instance.examples_block);

  PromptBundle bundle;
  bundle.kind = instance.kind;
  bundle.system = g.system;
  bundle.user = substitute(g.user, vars);
  const std::string prefix =
      instance.question_prefixes.empty() ? std::string() : instance.question_prefixes[0];
  bundle.assistant_prefix = substitute(g.assistant, {{"question_prefix", prefix}});
  bundle.shots = instance.examples_block;
  return bundle;
}

}  // namespace longbio
