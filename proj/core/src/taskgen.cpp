#include "longbio/taskgen.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "json.hpp"
#include "longbio/util.hpp"

namespace longbio {

namespace {

using nlohmann::json;

Attribute random_attribute(Rng& rng) {
  return kAttributeOrder[rng.bounded(kAttributeOrder.size())];
}

int random_age(Rng& rng, const SampleOptions& opts) {
  return opts.age_min +
         static_cast<int>(rng.bounded(static_cast<uint64_t>(opts.age_max - opts.age_min + 1)));
}

char initial_of(const std::string& s) {
  return static_cast<char>(std::toupper(static_cast<unsigned char>(s.at(0))));
}

// Haystack bios copy one of these (attribute, value) pairs with probability
// spec.distractor_density.
using DensityTargets = std::vector<std::pair<Attribute, std::string>>;

// Packs the context for an instance whose questions/gold/examples are already
// set: subtracts the prompt overhead from the total budget, builds the
// haystack, inserts the needles and fills in the needle metadata.
void build_and_attach(const GenDeps& deps, const ContextSpec& spec, Rng& rng, TaskInstance& inst,
                      const std::vector<BioRecord>& needles,
                      const std::vector<Attribute>& needle_attrs, std::set<std::string>& taken,
                      const SampleOptions& opts, const DensityTargets& density,
                      std::map<std::string, int>* ages,
                      std::map<std::string, BioRecord>* records_out) {
  const TokenCounter& counter = spec.counter;
  const long overhead = prompt_overhead(inst, *deps.prompts, counter) + kGenerationReserve;
  if (spec.token_budget <= overhead)
    throw Error("token budget " + std::to_string(spec.token_budget) +
                " cannot cover the prompt overhead of " + std::to_string(overhead) + " for " +
                task_kind_key(inst.kind));
  ContextSpec cspec = spec;
  cspec.token_budget = spec.token_budget - overhead;
  cspec.needle_count = static_cast<int>(needles.size());
  cspec.numbered = kind_numbered(inst.kind);

  Rng hay_rng = rng.substream("haystack");
  Rng density_rng = rng.substream("density");
  const double d = spec.distractor_density.value_or(0.0);
  auto gen = [&]() {
    PersonProfile p = sample_profile(*deps.pool, hay_rng, opts, taken);
    BioRecord bio = render_bio(*deps.bank, p, inst.style, hay_rng);
    if (!density.empty() && spec.distractor_density && density_rng.chance(d)) {
      const auto& [attr, value] =
          density[density.size() == 1 ? 0 : density_rng.bounded(density.size())];
      bio = force_attribute_value(*deps.bank, bio, attr, value, density_rng);
    }
    if (ages) (*ages)[bio.profile.name()] = bio.profile.age;
    if (records_out) (*records_out)[bio.profile.name()] = bio;
    return bio;
  };

  std::vector<double> depths = cspec.needle_depths;
  Rng place_rng = rng.substream("place");
  PackedContext ctx;
  if (spec.mode == HaystackMode::essay) {
    if (deps.essay == nullptr || deps.essay->empty())
      throw Error("essay mode requires essay text in GenDeps");
    if (depths.empty())
      for (int k = 0; k < cspec.needle_count; ++k) depths.push_back(place_rng.unit());
    ctx = build_biah(needles, *deps.essay, cspec, depths);
  } else {
    ctx = build_context(gen, needles, cspec, place_rng, &depths);
  }
  inst.context = std::move(ctx);
  inst.density = spec.distractor_density;

  for (size_t k = 0; k < needles.size(); ++k) {
    NeedleMeta meta;
    meta.name = needles[k].profile.name();
    meta.attribute = attribute_key(needle_attrs[k]);
    meta.depth = depths[k];
    for (size_t i : inst.context.needle_indices) {
      if (inst.context.bios[i].person == meta.name) {
        meta.bio_index = static_cast<int>(i);
        break;
      }
    }
    if (meta.bio_index < 0) throw Error("needle lost during packing: " + meta.name);
    if (ages) (*ages)[meta.name] = needles[k].profile.age;
    if (records_out) (*records_out)[meta.name] = needles[k];
    inst.needles.push_back(std::move(meta));
  }

  // The generator may have produced bios that were later trimmed; keep only
  // people who actually appear in the final context.
  if (ages) {
    std::map<std::string, int> present;
    for (const auto& b : inst.context.bios) {
      auto it = ages->find(b.person);
      if (it != ages->end()) present.insert(*it);
    }
    *ages = std::move(present);
  }
}

struct RetrievalCore {
  TaskInstance inst;
  BioRecord needle;
  Attribute attr = Attribute::hobby;
  std::map<std::string, BioRecord> records;  // everyone generated, keyed by name
};

RetrievalCore retrieval_core(const GenDeps& deps, BioStyle style, const ContextSpec& spec,
                             Rng& rng, bool keep_records) {
  RetrievalCore core;
  TaskInstance& inst = core.inst;
  inst.kind = style == BioStyle::standard      ? TaskKind::standard
              : style == BioStyle::paraphrase  ? TaskKind::paraphrase
                                               : TaskKind::pronoun;
  inst.style = style;
  inst.length_budget = spec.token_budget;

  std::set<std::string> taken;
  Rng needle_rng = rng.substream("needles");
  SampleOptions opts;
  PersonProfile person = sample_profile(*deps.pool, needle_rng, opts, taken);
  core.attr = random_attribute(needle_rng);
  core.needle = render_bio(*deps.bank, person, style, needle_rng);

  inst.questions = {deps.prompts->question(core.attr, person.name(), person.mode)};
  inst.question_prefixes = {deps.prompts->question_prefix(core.attr, person.name(), person.mode)};
  inst.gold.kind = GoldKind::value;
  inst.gold.values = {person.value_of(core.attr)};

  DensityTargets density = {{core.attr, person.value_of(core.attr)}};
  build_and_attach(deps, spec, rng, inst, {core.needle}, {core.attr}, taken, opts, density,
                   nullptr, keep_records ? &core.records : nullptr);
  return core;
}

// A fresh value for `attr` that does not contain the avoided string.
std::string replacement_value(const AttributePool& pool, Attribute attr, const std::string& avoid,
                              Rng& rng) {
  for (int i = 0; i < 1000; ++i) {
    std::string v;
    switch (attr) {
      case Attribute::birthdate: {
        const int64_t lo = kBirthdateMin.to_days();
        const int64_t hi = kBirthdateMax.to_days();
        v = Date::from_days(lo + static_cast<int64_t>(rng.bounded(static_cast<uint64_t>(hi - lo + 1)))).iso();
        break;
      }
      case Attribute::birthplace: v = rng.pick(pool.birthplaces); break;
      case Attribute::hobby: v = rng.pick(pool.hobbies); break;
      case Attribute::university: v = rng.pick(pool.universities); break;
      case Attribute::major: v = rng.pick(pool.majors); break;
      case Attribute::work_city: v = rng.pick(pool.work_cities); break;
    }
    if (!contains(v, avoid)) return v;
  }
  throw Error("no replacement value avoids the string: " + avoid);
}

std::string zfill(int v, int width) {
  std::string s = std::to_string(v);
  if (static_cast<int>(s.size()) < width) s.insert(0, static_cast<size_t>(width) - s.size(), '0');
  return s;
}

}  // namespace

std::string gold_kind_key(GoldKind kind) {
  switch (kind) {
    case GoldKind::value: return "value";
    case GoldKind::value_list: return "value_list";
    case GoldKind::name_order: return "name_order";
    case GoldKind::pair_diff: return "pair_diff";
    case GoldKind::citation_set: return "citation_set";
    case GoldKind::refusal: return "refusal";
    case GoldKind::category: return "category";
  }
  throw Error("unknown gold kind");
}

GoldKind gold_kind_from_key(const std::string& key) {
  static const std::map<std::string, GoldKind> map = {
      {"value", GoldKind::value},
      {"value_list", GoldKind::value_list},
      {"name_order", GoldKind::name_order},
      {"pair_diff", GoldKind::pair_diff},
      {"citation_set", GoldKind::citation_set},
      {"refusal", GoldKind::refusal},
      {"category", GoldKind::category},
  };
  auto it = map.find(key);
  if (it == map.end()) throw Error("unknown gold kind: " + key);
  return it->second;
}

long prompt_overhead(const TaskInstance& instance, const PromptTemplates& templates,
                     const TokenCounter& counter) {
  TaskInstance shell = instance;
  shell.context.text.clear();
  PromptBundle bundle = build_prompt(shell, templates);
  return static_cast<long>(counter.count(bundle.system) + counter.count(bundle.user) +
                           counter.count(bundle.assistant_prefix));
}

TaskInstance gen_retrieval(const GenDeps& deps, BioStyle style, const ContextSpec& spec,
                           Rng& rng) {
  return retrieval_core(deps, style, spec, rng, false).inst;
}

TaskInstance gen_multi_retrieval(const GenDeps& deps, int n, const ContextSpec& spec, Rng& rng) {
  if (n < 1) throw Error("gen_multi_retrieval: n must be >= 1");
  TaskInstance inst;
  inst.kind = TaskKind::multi_standard;
  inst.style = BioStyle::standard;
  inst.length_budget = spec.token_budget;

  std::set<std::string> taken;
  Rng needle_rng = rng.substream("needles");
  SampleOptions opts;
  std::vector<BioRecord> needles;
  std::vector<Attribute> attrs;
  DensityTargets density;
  for (int i = 0; i < n; ++i) {
    PersonProfile person = sample_profile(*deps.pool, needle_rng, opts, taken);
    Attribute attr = random_attribute(needle_rng);
    needles.push_back(render_bio(*deps.bank, person, inst.style, needle_rng));
    attrs.push_back(attr);
    inst.questions.push_back(deps.prompts->question(attr, person.name(), person.mode));
    inst.question_prefixes.push_back(
        deps.prompts->question_prefix(attr, person.name(), person.mode));
    inst.gold.values.push_back(person.value_of(attr));
    density.emplace_back(attr, person.value_of(attr));
  }
  inst.gold.kind = n == 1 ? GoldKind::value : GoldKind::value_list;
  build_and_attach(deps, spec, rng, inst, needles, attrs, taken, opts, density, nullptr, nullptr);
  return inst;
}

TaskInstance gen_calculation(const GenDeps& deps, const ContextSpec& spec, Rng& rng) {
  TaskInstance inst;
  inst.kind = TaskKind::calculation;
  inst.style = BioStyle::standard;
  inst.length_budget = spec.token_budget;

  std::set<std::string> taken;
  Rng shot_rng = rng.substream("shots");
  inst.examples_block =
      few_shot_examples(*deps.prompts, *deps.pool, *deps.bank, inst.kind, shot_rng, taken);

  Rng needle_rng = rng.substream("needles");
  SampleOptions opts;
  opts.mode = BirthMode::age;
  PersonProfile p1 = sample_profile(*deps.pool, needle_rng, opts, taken);
  PersonProfile p2 = sample_profile(*deps.pool, needle_rng, opts, taken);
  while (p2.age == p1.age) p2.age = random_age(needle_rng, opts);
  std::vector<BioRecord> needles = {render_bio(*deps.bank, p1, inst.style, needle_rng),
                                    render_bio(*deps.bank, p2, inst.style, needle_rng)};

  inst.questions = {deps.prompts->calculation_question(p1.name(), p2.name())};
  inst.question_prefixes = {""};
  inst.gold.kind = GoldKind::value;
  inst.gold.values = {std::to_string(std::abs(p1.age - p2.age))};

  DensityTargets density = {{Attribute::birthdate, std::to_string(p1.age)},
                            {Attribute::birthdate, std::to_string(p2.age)}};
  build_and_attach(deps, spec, rng, inst, needles, {Attribute::birthdate, Attribute::birthdate},
                   taken, opts, density, nullptr, nullptr);
  return inst;
}

TaskInstance gen_rank(const GenDeps& deps, int n, const ContextSpec& spec, Rng& rng) {
  if (n < 2) throw Error("gen_rank: n must be >= 2");
  TaskInstance inst;
  inst.kind = TaskKind::rank;
  inst.style = BioStyle::standard;
  inst.length_budget = spec.token_budget;

  std::set<std::string> taken;
  Rng shot_rng = rng.substream("shots");
  inst.examples_block =
      few_shot_examples(*deps.prompts, *deps.pool, *deps.bank, inst.kind, shot_rng, taken);

  Rng needle_rng = rng.substream("needles");
  SampleOptions opts;
  opts.mode = BirthMode::age;
  std::vector<PersonProfile> people;
  std::set<int> used_ages;
  std::vector<BioRecord> needles;
  std::vector<Attribute> attrs(static_cast<size_t>(n), Attribute::birthdate);
  DensityTargets density;
  for (int i = 0; i < n; ++i) {
    PersonProfile p = sample_profile(*deps.pool, needle_rng, opts, taken);
    while (used_ages.count(p.age)) p.age = random_age(needle_rng, opts);
    used_ages.insert(p.age);
    needles.push_back(render_bio(*deps.bank, p, inst.style, needle_rng));
    density.emplace_back(Attribute::birthdate, std::to_string(p.age));
    people.push_back(std::move(p));
  }

  std::vector<std::string> names;
  for (const auto& p : people) names.push_back(p.name());
  inst.questions = {deps.prompts->rank_question(names)};
  inst.question_prefixes = {""};

  std::sort(people.begin(), people.end(),
            [](const PersonProfile& a, const PersonProfile& b) { return a.age < b.age; });
  inst.gold.kind = GoldKind::name_order;
  for (const auto& p : people) inst.gold.values.push_back(p.name());

  build_and_attach(deps, spec, rng, inst, needles, attrs, taken, opts, density, nullptr, nullptr);
  return inst;
}

TaskInstance gen_twodiff(const GenDeps& deps, const ContextSpec& spec, int target_diff, Rng& rng) {
  SampleOptions opts;
  opts.mode = BirthMode::age;
  const int span = opts.age_max - opts.age_min;
  if (target_diff < 1 || target_diff > span)
    throw Error("twodiff target " + std::to_string(target_diff) +
                " is outside the satisfiable range 1.." + std::to_string(span));

  TaskInstance inst;
  inst.kind = TaskKind::twodiff;
  inst.style = BioStyle::standard;
  inst.length_budget = spec.token_budget;

  std::set<std::string> taken;
  Rng shot_rng = rng.substream("shots");
  inst.examples_block =
      few_shot_examples(*deps.prompts, *deps.pool, *deps.bank, inst.kind, shot_rng, taken);

  Rng needle_rng = rng.substream("needles");
  PersonProfile p1 = sample_profile(*deps.pool, needle_rng, opts, taken);
  PersonProfile p2 = sample_profile(*deps.pool, needle_rng, opts, taken);
  p1.age = opts.age_min + static_cast<int>(rng.substream("plant").bounded(
               static_cast<uint64_t>(span - target_diff + 1)));
  p2.age = p1.age + target_diff;
  std::vector<BioRecord> needles = {render_bio(*deps.bank, p1, inst.style, needle_rng),
                                    render_bio(*deps.bank, p2, inst.style, needle_rng)};

  inst.questions = {deps.prompts->twodiff_question(target_diff)};
  inst.question_prefixes = {""};
  inst.gold.kind = GoldKind::pair_diff;
  inst.gold.target_diff = target_diff;
  inst.gold.values = {p1.name(), p2.name()};  // one known-valid pair

  std::map<std::string, int> ages;
  DensityTargets density = {{Attribute::birthdate, std::to_string(p1.age)},
                            {Attribute::birthdate, std::to_string(p2.age)}};
  build_and_attach(deps, spec, rng, inst, needles, {Attribute::birthdate, Attribute::birthdate},
                   taken, opts, density, &ages, nullptr);
  inst.gold.ages = std::move(ages);
  return inst;
}

TaskInstance gen_multihop(const GenDeps& deps, const ContextSpec& spec, Rng& rng) {
  if (!spec.needle_depths.empty() && spec.needle_depths.size() != 2)
    throw Error("gen_multihop expects two needle depths");
  for (int attempt = 0; attempt < 64; ++attempt) {
    Rng arng = rng.substream("attempt" + std::to_string(attempt));
    TaskInstance inst;
    inst.kind = TaskKind::multihop;
    inst.style = BioStyle::standard;
    inst.length_budget = spec.token_budget;

    std::set<std::string> taken;
    Rng shot_rng = arng.substream("shots");
    inst.examples_block =
        few_shot_examples(*deps.prompts, *deps.pool, *deps.bank, inst.kind, shot_rng, taken);

    Rng needle_rng = arng.substream("needles");
    SampleOptions opts;
    PersonProfile ante = sample_profile(*deps.pool, needle_rng, opts, taken);
    PersonProfile refr = sample_profile(*deps.pool, needle_rng, opts, taken);
    Attribute attr = random_attribute(needle_rng);
    BioRecord ante_bio = render_bio(*deps.bank, ante, inst.style, needle_rng);
    BioRecord refr_bio = render_bio(*deps.bank, refr, inst.style, needle_rng);
    refr_bio = link_attribute(*deps.bank, refr_bio, attr, ante.name());

    inst.questions = {deps.prompts->question(attr, refr.name(), refr.mode)};
    inst.question_prefixes = {deps.prompts->question_prefix(attr, refr.name(), refr.mode)};
    inst.gold.kind = GoldKind::value;
    inst.gold.values = {ante.value_of(attr)};

    ContextSpec spec2 = spec;
    if (spec2.needle_depths.empty()) {
      Rng drng = arng.substream("depths");
      double a = drng.unit(), b = drng.unit();
      spec2.needle_depths = {std::min(a, b), std::max(a, b)};
    } else if (spec2.needle_depths[0] > spec2.needle_depths[1]) {
      std::swap(spec2.needle_depths[0], spec2.needle_depths[1]);
    }

    DensityTargets density = {{attr, ante.value_of(attr)}};
    build_and_attach(deps, spec2, arng, inst, {ante_bio, refr_bio}, {attr, attr}, taken, opts,
                     density, nullptr, nullptr);
    if (inst.needles[0].bio_index < inst.needles[1].bio_index) return inst;
    if (!spec.needle_depths.empty())
      throw Error("multihop: the given depths place the referencer before the antecedent");
  }
  throw Error("multihop: could not order the antecedent before the referencer");
}

TaskInstance gen_citation(const GenDeps& deps, int n, const ContextSpec& spec, Rng& rng) {
  if (n != 1 && n != 2) throw Error("gen_citation: n must be 1 or 2");
  TaskInstance inst;
  inst.kind = n == 1 ? TaskKind::citation : TaskKind::citation_multi;
  inst.style = BioStyle::standard;
  inst.length_budget = spec.token_budget;

  std::set<std::string> taken;
  Rng shot_rng = rng.substream("shots");
  inst.examples_block =
      few_shot_examples(*deps.prompts, *deps.pool, *deps.bank, inst.kind, shot_rng, taken);

  Rng needle_rng = rng.substream("needles");
  SampleOptions opts;
  std::vector<BioRecord> needles;
  std::vector<Attribute> attrs;
  DensityTargets density;
  for (int i = 0; i < n; ++i) {
    PersonProfile person = sample_profile(*deps.pool, needle_rng, opts, taken);
    Attribute attr = random_attribute(needle_rng);
    needles.push_back(render_bio(*deps.bank, person, inst.style, needle_rng));
    attrs.push_back(attr);
    inst.questions.push_back(deps.prompts->question(attr, person.name(), person.mode));
    inst.question_prefixes.push_back(
        deps.prompts->question_prefix(attr, person.name(), person.mode));
    inst.gold.values.push_back(person.value_of(attr));
    density.emplace_back(attr, person.value_of(attr));
  }
  inst.gold.kind = GoldKind::citation_set;

  build_and_attach(deps, spec, rng, inst, needles, attrs, taken, opts, density, nullptr, nullptr);
  for (const auto& meta : inst.needles) inst.gold.citations.insert(meta.bio_index + 1);
  return inst;
}

std::pair<TaskInstance, TaskInstance> gen_idk_pair(const GenDeps& deps, const ContextSpec& spec,
                                                   Rng& rng) {
  RetrievalCore core = retrieval_core(deps, BioStyle::standard, spec, rng, true);
  TaskInstance present = std::move(core.inst);
  present.kind = TaskKind::idk;
  present.pair_id = hex64(rng.substream("pair-id").bounded(std::numeric_limits<uint64_t>::max()));

  TaskInstance absent = present;
  absent.gold.kind = GoldKind::refusal;
  absent.gold.values = {deps.prompts->refusal()};

  const std::string gold_value = present.gold.values.at(0);
  const std::string needle_name = present.needles.at(0).name;
  const auto needle_idx = static_cast<size_t>(present.needles.at(0).bio_index);
  Rng scrub_rng = rng.substream("scrub");

  std::map<std::string, BioRecord> records = std::move(core.records);
  records[needle_name] = strip_attribute(*deps.bank, records.at(needle_name), core.attr);

  auto& blocks = absent.context.bios;
  blocks[needle_idx].text = records.at(needle_name).text;

  std::set<std::string> taken;
  for (const auto& b : blocks) taken.insert(b.person);
  SampleOptions opts;

  // An occurrence inside a person's own name is not a leak: name pools and
  // value pools share strings (cities like Logan or Quincy double as names),
  // and a name states no fact. Mask full-name occurrences before searching.
  auto leaks = [&gold_value](std::string_view text, const std::string& person) {
    if (person.empty() || !contains(text, person)) return contains(text, gold_value);
    std::string masked(text);
    size_t pos = 0;
    while ((pos = masked.find(person, pos)) != std::string::npos) {
      masked.replace(pos, person.size(), "\x01");
      ++pos;
    }
    return contains(masked, gold_value);
  };

  for (int round = 0; round < 100; ++round) {
    bool dirty = false;
    for (size_t i = 0; i < blocks.size(); ++i) {
      if (!leaks(blocks[i].text, blocks[i].person)) continue;
      if (blocks[i].person.empty())
        throw Error("idk: essay haystack contains the removed value");
      BioRecord rec = records.at(blocks[i].person);
      bool fixed_one = false;
      for (Attribute a : kAttributeOrder) {
        if (i == needle_idx && a == core.attr) continue;  // already stripped
        if (!rec.spans.count(a)) continue;
        if (leaks(rec.span_text(a), blocks[i].person)) {
          rec = force_attribute_value(*deps.bank, rec, a,
                                      replacement_value(*deps.pool, a, gold_value, scrub_rng),
                                      scrub_rng);
          fixed_one = true;
        }
      }
      if (fixed_one) {
        records[blocks[i].person] = rec;
        blocks[i].text = rec.text;
      } else {
        // the value hides outside any attribute sentence (an opening, say);
        // replace the whole person
        if (i == needle_idx) throw Error("idk: needle bio still carries the removed value");
        BioRecord fresh;
        bool ok = false;
        for (int t = 0; t < 100 && !ok; ++t) {
          PersonProfile np = sample_profile(*deps.pool, scrub_rng, opts, taken);
          fresh = render_bio(*deps.bank, np, absent.style, scrub_rng);
          ok = !leaks(fresh.text, np.name());
        }
        if (!ok) throw Error("idk: could not resample a clean replacement bio");
        records.erase(blocks[i].person);
        records[fresh.profile.name()] = fresh;
        blocks[i].person = fresh.profile.name();
        blocks[i].text = fresh.text;
      }
      dirty = true;
    }
    if (!dirty) break;
  }

  for (const auto& b : blocks)
    if (leaks(b.text, b.person))
      throw Error("idk: could not remove the gold value from the context");
  absent.context.text = assemble_blocks(blocks, absent.context.numbered);
  absent.context.token_count = spec.counter.count(absent.context.text);
  return {std::move(present), std::move(absent)};
}

IclMap IclMap::build(const AttributePool& pool, Rng& rng) {
  std::set<char> initials;
  for (const auto& u : pool.universities) initials.insert(initial_of(u));
  if (initials.size() < 10)
    throw Error("university pool covers only " + std::to_string(initials.size()) +
                " initials; the ICL task needs at least 10");
  std::vector<int> labels(10);
  std::iota(labels.begin(), labels.end(), 1);
  for (size_t i = labels.size(); i > 1; --i)
    std::swap(labels[i - 1], labels[rng.bounded(i)]);

  IclMap map;
  size_t i = 0;
  for (char c : initials) map.category_of[c] = labels[i++ % 10];
  return map;
}

int IclMap::category(const std::string& university) const {
  auto it = category_of.find(initial_of(university));
  if (it == category_of.end())
    throw Error("no category for university initial: " + university.substr(0, 1));
  return it->second;
}

std::string IclMap::label(const std::string& university) const {
  return "Category " + std::to_string(category(university));
}

TaskInstance gen_icl(const GenDeps& deps, const IclMap& map, int num_demos,
                     const ContextSpec& spec, Rng& rng) {
  if (num_demos < 1) throw Error("gen_icl: num_demos must be >= 1");
  if (spec.mode != HaystackMode::bios) throw Error("gen_icl supports only the bios haystack");
  const TokenCounter& counter = spec.counter;

  TaskInstance inst;
  inst.kind = TaskKind::icl;
  inst.style = BioStyle::standard;
  inst.length_budget = spec.token_budget;

  std::set<std::string> taken;
  SampleOptions opts;
  Rng qrng = rng.substream("query");

  // The query person; the hint constraint needs a second university sharing
  // the query's initial.
  PersonProfile query;
  std::vector<std::string> hint_pool;
  for (int tries = 0;; ++tries) {
    if (tries >= 100) throw Error("gen_icl: pool cannot satisfy the hint constraint");
    query = sample_profile(*deps.pool, qrng, opts, taken);
    hint_pool.clear();
    for (const auto& u : deps.pool->universities)
      if (initial_of(u) == initial_of(query.university) && u != query.university)
        hint_pool.push_back(u);
    if (!hint_pool.empty()) break;
  }
  const std::string qu = query.university;

  inst.questions = {deps.prompts->icl_question(query.name())};
  inst.question_prefixes = {""};
  inst.gold.kind = GoldKind::category;
  inst.gold.values = {map.label(qu)};

  const long overhead = prompt_overhead(inst, *deps.prompts, counter) + kGenerationReserve;
  if (spec.token_budget <= overhead)
    throw Error("token budget " + std::to_string(spec.token_budget) +
                " cannot cover the prompt overhead of " + std::to_string(overhead) + " for icl");
  const int64_t budget = spec.token_budget - overhead;

  Rng drng = rng.substream("demos");
  auto sample_not_qu = [&](Rng& r) {
    PersonProfile p = sample_profile(*deps.pool, r, opts, taken);
    while (p.university == qu) p.university = r.pick(deps.pool->universities);
    return p;
  };

  struct DemoBlock {
    BioRecord a, b;
    int asked = 0;
    std::string text;
  };
  auto demo_text = [&](const DemoBlock& d) {
    const PersonProfile& person = d.asked == 0 ? d.a.profile : d.b.profile;
    return d.a.text + "\n\n" + d.b.text + "\n\nQuestion: " +
           deps.prompts->icl_question(person.name()) + "\nAnswer: " +
           map.label(person.university) + ".";
  };
  auto make_demo = [&]() {
    DemoBlock d;
    PersonProfile pa = sample_not_qu(drng);
    PersonProfile pb = sample_not_qu(drng);
    d.a = render_bio(*deps.bank, pa, inst.style, drng);
    d.b = render_bio(*deps.bank, pb, inst.style, drng);
    d.asked = static_cast<int>(drng.bounded(2));
    d.text = demo_text(d);
    return d;
  };

  // final block: the query bio plus a companion, question asked outside
  PersonProfile companion = sample_not_qu(qrng);
  BioRecord qbio = render_bio(*deps.bank, query, inst.style, qrng);
  BioRecord cbio = render_bio(*deps.bank, companion, inst.style, qrng);
  const std::string final_text = qrng.bounded(2) == 0 ? qbio.text + "\n\n" + cbio.text
                                                      : cbio.text + "\n\n" + qbio.text;

  // greedy fill over demo blocks, always leaving room for the final block
  int64_t bytes = 0, words = 0, est = 0;
  size_t nblocks = 0;
  auto fits_with_final = [&](const std::string& cand) {
    if (counter.exact_incremental()) {
      int64_t b = bytes, w = words;
      size_t n = nblocks;
      if (!cand.empty()) {
        b += (n ? 2 : 0) + static_cast<int64_t>(cand.size());
        w += TokenCounter::words_in(cand);
        ++n;
      }
      b += (n ? 2 : 0) + static_cast<int64_t>(final_text.size());
      w += TokenCounter::words_in(final_text);
      return counter.tokens_from_parts(b, w) <= budget;
    }
    int64_t t = est;
    size_t n = nblocks;
    if (!cand.empty()) {
      t += counter.count(n ? "\n\n" + cand : cand);
      ++n;
    }
    t += counter.count(n ? "\n\n" + final_text : final_text);
    return t <= budget;
  };
  auto add_block = [&](const std::string& block) {
    if (counter.exact_incremental()) {
      bytes += (nblocks ? 2 : 0) + static_cast<int64_t>(block.size());
      words += TokenCounter::words_in(block);
    } else {
      est += counter.count(nblocks ? "\n\n" + block : block);
    }
    ++nblocks;
  };

  if (!fits_with_final(""))
    throw Error("gen_icl: budget cannot fit the final query block");
  std::vector<DemoBlock> demos;
  while (static_cast<int>(demos.size()) < num_demos) {
    DemoBlock d = make_demo();
    if (!fits_with_final(d.text)) break;
    add_block(d.text);
    demos.push_back(std::move(d));
  }
  if (demos.empty()) throw Error("gen_icl: budget cannot fit any demonstration");

  // plant the initial-sharing hint on one surviving demo
  Rng hrng = rng.substream("hint");
  size_t hint_at = hrng.bounded(demos.size());
  {
    DemoBlock& d = demos[hint_at];
    BioRecord& asked = d.asked == 0 ? d.a : d.b;
    const std::string& hint_uni = hint_pool[hrng.bounded(hint_pool.size())];
    asked = force_attribute_value(*deps.bank, asked, Attribute::university, hint_uni, hrng);
    d.text = demo_text(d);
  }

  auto assemble = [&]() {
    std::vector<std::string> parts;
    parts.reserve(demos.size() + 1);
    for (const auto& d : demos) parts.push_back(d.text);
    parts.push_back(final_text);
    return join(parts, "\n\n");
  };
  std::string text = assemble();
  int64_t count = counter.count(text);
  int guard = 0;
  while (count > budget) {
    if (++guard > 50 || demos.size() <= 1)
      throw Error("gen_icl: could not fit the demonstrations within budget");
    if (hint_at == demos.size() - 1) {
      std::swap(demos[0], demos[hint_at]);
      hint_at = 0;
    }
    demos.pop_back();
    text = assemble();
    count = counter.count(text);
  }

  PackedContext ctx;
  std::vector<PlacedBio> placed;
  int64_t max_block_bytes = 0;
  std::string longest;
  for (const auto& d : demos) {
    PlacedBio b;
    b.text = d.text;
    b.person = (d.asked == 0 ? d.a : d.b).profile.name();
    if (static_cast<int64_t>(d.text.size()) > max_block_bytes) {
      max_block_bytes = static_cast<int64_t>(d.text.size());
      longest = d.text;
    }
    placed.push_back(std::move(b));
  }
  PlacedBio fin;
  fin.text = final_text;
  fin.person = query.name();
  fin.is_needle = true;
  if (static_cast<int64_t>(final_text.size()) > max_block_bytes) longest = final_text;
  placed.push_back(std::move(fin));

  ctx.numbered = false;
  ctx.text = assemble_blocks(placed, false);
  ctx.bios = std::move(placed);
  ctx.needle_indices = {ctx.bios.size() - 1};
  ctx.token_budget = budget;
  ctx.token_count = count;
  ctx.max_block_cost = counter.count("\n\n" + longest);

  if (count_occurrences(ctx.text, qu) != 1)
    throw Error("gen_icl: query university is not unique in the context");

  inst.context = std::move(ctx);
  NeedleMeta meta;
  meta.name = query.name();
  meta.attribute = attribute_key(Attribute::university);
  meta.bio_index = static_cast<int>(inst.context.bios.size()) - 1;
  meta.depth = 1.0;
  inst.needles.push_back(std::move(meta));
  return inst;
}

std::vector<TaskInstance> generate_suite(const GenDeps& deps, const SuiteSpec& s) {
  if (deps.pool == nullptr || deps.bank == nullptr || deps.prompts == nullptr)
    throw Error("generate_suite: pool, bank and prompts are required");
  TokenCounter counter = TokenCounter::make(s.counter_spec);

  ContextSpec cspec;
  cspec.token_budget = s.budget;
  cspec.counter = counter;
  cspec.needle_depths = s.depths;
  cspec.distractor_density = s.density;
  cspec.mode = s.mode;

  std::string essay;
  GenDeps local = deps;
  if (s.mode == HaystackMode::essay) {
    if (s.essay_path.empty()) throw Error("essay mode requires essay_path");
    essay = read_file(s.essay_path);
    local.essay = &essay;
  }

  IclMap map;
  if (s.kind == TaskKind::icl) {
    Rng mrng = Rng(s.seed).substream("icl-map");
    map = IclMap::build(*deps.pool, mrng);
  }

  const bool paired = s.kind == TaskKind::idk;
  std::vector<TaskInstance> out(static_cast<size_t>(s.count) * (paired ? 2 : 1));

  std::atomic<int> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  auto worker = [&]() {
    for (int i; (i = next.fetch_add(1)) < s.count;) {
      {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (first_error) return;
      }
      try {
        Rng rng = Rng(s.seed)
                      .substream(task_kind_key(s.kind))
                      .substream("b" + std::to_string(s.budget))
                      .substream("i" + std::to_string(i));
        const std::string base =
            task_kind_key(s.kind) + "-" + std::to_string(s.budget) + "-" + zfill(i, 4);
        switch (s.kind) {
          case TaskKind::standard:
            out[i] = gen_retrieval(local, BioStyle::standard, cspec, rng);
            break;
          case TaskKind::paraphrase:
            out[i] = gen_retrieval(local, BioStyle::paraphrase, cspec, rng);
            break;
          case TaskKind::pronoun:
            out[i] = gen_retrieval(local, BioStyle::pronoun, cspec, rng);
            break;
          case TaskKind::multi_standard:
            out[i] = gen_multi_retrieval(local, s.n, cspec, rng);
            break;
          case TaskKind::calculation:
            out[i] = gen_calculation(local, cspec, rng);
            break;
          case TaskKind::rank:
            out[i] = gen_rank(local, s.n, cspec, rng);
            break;
          case TaskKind::twodiff: {
            int target = s.target_diff
                             ? s.target_diff
                             : 1 + static_cast<int>(rng.substream("target").bounded(25));
            out[i] = gen_twodiff(local, cspec, target, rng);
            break;
          }
          case TaskKind::multihop:
            out[i] = gen_multihop(local, cspec, rng);
            break;
          case TaskKind::citation:
            out[i] = gen_citation(local, s.n, cspec, rng);
            break;
          case TaskKind::citation_multi:
            out[i] = gen_citation(local, 2, cspec, rng);
            break;
          case TaskKind::idk: {
            auto pair = gen_idk_pair(local, cspec, rng);
            pair.first.id = base + "-present";
            pair.second.id = base + "-absent";
            pair.first.pair_id = base;
            pair.second.pair_id = base;
            out[2 * static_cast<size_t>(i)] = std::move(pair.first);
            out[2 * static_cast<size_t>(i) + 1] = std::move(pair.second);
            break;
          }
          case TaskKind::icl:
            out[i] = gen_icl(local, map, s.icl_demos, cspec, rng);
            break;
        }
        if (!paired) out[i].id = base;
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  unsigned n_threads = s.threads > 0 ? static_cast<unsigned>(s.threads)
                                     : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min<unsigned>(n_threads, static_cast<unsigned>(std::max(s.count, 1)));
  std::vector<std::thread> pool_threads;
  for (unsigned t = 0; t < n_threads; ++t) pool_threads.emplace_back(worker);
  for (auto& t : pool_threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

namespace {

json gold_to_json(const Gold& g) {
  json j;
  j["kind"] = gold_kind_key(g.kind);
  j["values"] = g.values;
  if (!g.citations.empty()) j["citations"] = std::vector<int>(g.citations.begin(), g.citations.end());
  if (g.kind == GoldKind::pair_diff) {
    j["target_diff"] = g.target_diff;
    j["ages"] = g.ages;
  }
  return j;
}

Gold gold_from_json(const json& j) {
  Gold g;
  g.kind = gold_kind_from_key(j.at("kind").get<std::string>());
  g.values = j.at("values").get<std::vector<std::string>>();
  if (j.contains("citations"))
    for (int c : j.at("citations").get<std::vector<int>>()) g.citations.insert(c);
  if (j.contains("target_diff")) g.target_diff = j.at("target_diff").get<int>();
  if (j.contains("ages")) g.ages = j.at("ages").get<std::map<std::string, int>>();
  return g;
}

}  // namespace

std::string instance_to_json(const TaskInstance& t) {
  json j;
  j["schema"] = "longbio/1";
  j["id"] = t.id;
  j["kind"] = task_kind_key(t.kind);
  j["style"] = style_key(t.style);
  j["length_budget"] = t.length_budget;
  j["context"] = {{"text", t.context.text},
                  {"token_count", t.context.token_count},
                  {"token_budget", t.context.token_budget},
                  {"max_block_cost", t.context.max_block_cost},
                  {"numbered", t.context.numbered},
                  {"needle_indices", t.context.needle_indices}};
  j["questions"] = t.questions;
  j["question_prefixes"] = t.question_prefixes;
  j["gold"] = gold_to_json(t.gold);
  json needles = json::array();
  for (const auto& n : t.needles)
    needles.push_back({{"name", n.name},
                       {"attribute", n.attribute},
                       {"bio_index", n.bio_index},
                       {"depth", n.depth}});
  j["needles"] = std::move(needles);
  if (t.density) j["density"] = *t.density;
  if (!t.examples_block.empty()) j["examples_block"] = t.examples_block;
  if (!t.pair_id.empty()) j["pair_id"] = t.pair_id;
  return j.dump();
}

TaskInstance instance_from_json(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(std::string("bad instance line: ") + e.what());
  }
  if (j.value("schema", "") != "longbio/1")
    throw Error("instance line: expected schema longbio/1");

  TaskInstance t;
  t.id = j.at("id").get<std::string>();
  t.kind = task_kind_from_key(j.at("kind").get<std::string>());
  auto style = style_from_key(j.at("style").get<std::string>());
  if (!style) throw Error("instance line: unknown style");
  t.style = *style;
  t.length_budget = j.at("length_budget").get<long>();
  const json& c = j.at("context");
  t.context.text = c.at("text").get<std::string>();
  t.context.token_count = c.at("token_count").get<int64_t>();
  t.context.token_budget = c.at("token_budget").get<int64_t>();
  t.context.max_block_cost = c.value("max_block_cost", int64_t{0});
  t.context.numbered = c.at("numbered").get<bool>();
  t.context.needle_indices = c.at("needle_indices").get<std::vector<size_t>>();
  t.questions = j.at("questions").get<std::vector<std::string>>();
  t.question_prefixes = j.at("question_prefixes").get<std::vector<std::string>>();
  t.gold = gold_from_json(j.at("gold"));
  for (const auto& n : j.at("needles")) {
    NeedleMeta meta;
    meta.name = n.at("name").get<std::string>();
    meta.attribute = n.at("attribute").get<std::string>();
    meta.bio_index = n.at("bio_index").get<int>();
    meta.depth = n.at("depth").get<double>();
    t.needles.push_back(std::move(meta));
  }
  if (j.contains("density")) t.density = j.at("density").get<double>();
  t.examples_block = j.value("examples_block", "");
  t.pair_id = j.value("pair_id", "");
  return t;
}

void write_suite(const std::string& path, const std::vector<TaskInstance>& suite) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open suite file for writing: " + path);
  for (const auto& t : suite) out << instance_to_json(t) << '\n';
  if (!out) throw Error("failed writing suite file: " + path);
}

std::vector<TaskInstance> read_suite(const std::string& path) {
  std::vector<TaskInstance> suite;
  for (const auto& line : split_lines(read_file(path))) {
    if (line.empty()) continue;
    suite.push_back(instance_from_json(line));
  }
  return suite;
}

}  // namespace longbio
