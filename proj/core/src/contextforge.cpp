#include "longbio/contextforge.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "longbio/util.hpp"

namespace longbio {

namespace {

constexpr const char* kSeparator = "\n\n";

int digits_of(size_t n) {
  int d = 1;
  while (n >= 10) {
    n /= 10;
    ++d;
  }
  return d;
}

std::string number_prefix(size_t index1) {
  return "Bio [" + std::to_string(index1) + "]: ";
}

// Token cost of appending one block: separator + optional numbering + text.
// `digits` is the numbering allowance (upper bound on the final index width).
int64_t block_cost(const TokenCounter& counter, const std::string& text, bool numbered,
                   int digits) {
  if (counter.exact_incremental()) {
    const int64_t bytes =
        2 + (numbered ? 8 + digits : 0) + static_cast<int64_t>(text.size());
    const int64_t words = TokenCounter::words_in(text) + (numbered ? 2 : 0);
    return counter.tokens_from_parts(bytes, words);
  }
  std::string probe = kSeparator;
  if (numbered) probe += "Bio [" + std::string(size_t(digits), '9') + "]: ";
  probe += text;
  return counter.count(probe);
}

struct FillState {
  int64_t bytes = 0;  // total including a leading separator per block
  int64_t words = 0;
  int64_t est_tokens = 0;  // external-counter estimate, same convention
  size_t blocks = 0;

  void add(const TokenCounter& counter, const std::string& text, bool numbered, int digits) {
    if (counter.exact_incremental()) {
      bytes += 2 + (numbered ? 8 + digits : 0) + static_cast<int64_t>(text.size());
      words += TokenCounter::words_in(text) + (numbered ? 2 : 0);
    } else {
      est_tokens += block_cost(counter, text, numbered, digits);
    }
    ++blocks;
  }

  int64_t tokens(const TokenCounter& counter) const {
    if (blocks == 0) return 0;
    if (counter.exact_incremental()) return counter.tokens_from_parts(bytes - 2, words);
    return est_tokens;  // small overestimate: includes a leading separator
  }
};

int64_t reserve_for(const std::vector<BioRecord>& needles, const ContextSpec& spec, int digits) {
  FillState st;
  for (const auto& n : needles) st.add(spec.counter, n.text, spec.numbered, digits);
  if (st.blocks == 0) return 0;
  if (spec.counter.exact_incremental())
    return spec.counter.tokens_from_parts(st.bytes, st.words);  // keep leading separators
  return st.est_tokens;
}

void validate_depths(const std::vector<double>& depths) {
  for (double d : depths)
    if (!(d >= 0.0 && d <= 1.0))
      throw Error("needle depth " + std::to_string(d) + " outside [0,1]");
}

std::vector<PlacedBio> place(const std::vector<PlacedBio>& haystack,
                             const std::vector<BioRecord>& needles,
                             const std::vector<double>& depths) {
  std::vector<PlacedBio> blocks = haystack;
  for (size_t k = 0; k < needles.size(); ++k) {
    const auto limit = static_cast<long long>(blocks.size());
    long long idx = std::llround(depths[k] * static_cast<double>(limit));
    idx = std::clamp(idx, 0LL, limit);
    PlacedBio pb;
    pb.text = needles[k].text;
    pb.is_needle = true;
    pb.person = needles[k].profile.name();
    blocks.insert(blocks.begin() + idx, std::move(pb));
  }
  return blocks;
}

PackedContext finalize(std::vector<PlacedBio> blocks, const ContextSpec& spec) {
  PackedContext ctx;
  ctx.numbered = spec.numbered;
  ctx.token_budget = spec.token_budget;
  ctx.bios = std::move(blocks);
  ctx.text = assemble_blocks(ctx.bios, spec.numbered);
  ctx.token_count = spec.counter.count(ctx.text);
  const int digits = digits_of(ctx.bios.size() == 0 ? 1 : ctx.bios.size());
  for (size_t i = 0; i < ctx.bios.size(); ++i) {
    if (ctx.bios[i].is_needle) ctx.needle_indices.push_back(i);
    ctx.max_block_cost =
        std::max(ctx.max_block_cost, block_cost(spec.counter, ctx.bios[i].text, spec.numbered, digits));
  }
  return ctx;
}

}  // namespace

std::string assemble_blocks(std::vector<PlacedBio>& bios, bool numbered) {
  std::string out;
  for (size_t i = 0; i < bios.size(); ++i) {
    if (i) out += kSeparator;
    if (numbered) out += number_prefix(i + 1);
    bios[i].offset = out.size();
    out += bios[i].text;
  }
  return out;
}

PackedContext pack_haystack(const BioGenerator& gen, const ContextSpec& spec,
                            int64_t needle_reserve) {
  if (spec.token_budget <= 0) throw Error("token budget must be positive");
  if (needle_reserve > spec.token_budget)
    throw Error("needle reserve " + std::to_string(needle_reserve) + " exceeds budget " +
                std::to_string(spec.token_budget));
  const int64_t limit = spec.token_budget - needle_reserve;

  FillState st;
  std::vector<PlacedBio> blocks;
  for (;;) {
    BioRecord bio = gen();
    // numbering allowance: final index can exceed the running one by at most
    // needle_count once needles go in
    const int digits = digits_of(st.blocks + 1 + static_cast<size_t>(spec.needle_count));
    FillState probe = st;
    probe.add(spec.counter, bio.text, spec.numbered, digits);
    if (probe.tokens(spec.counter) > limit) break;
    st = probe;
    PlacedBio pb;
    pb.text = bio.text;
    pb.person = bio.profile.name();
    blocks.push_back(std::move(pb));
  }
  return finalize(std::move(blocks), spec);
}

PackedContext insert_needles(const PackedContext& haystack, const std::vector<BioRecord>& needles,
                             const std::vector<double>& depths, const ContextSpec& spec) {
  if (needles.size() != depths.size())
    throw Error("needle/depth count mismatch: " + std::to_string(needles.size()) + " vs " +
                std::to_string(depths.size()));
  validate_depths(depths);
  return finalize(place(haystack.bios, needles, depths), spec);
}

BioRecord force_attribute_value(const TemplateBank& bank, const BioRecord& bio, Attribute attr,
                                const std::string& value, Rng& rng) {
  BioRecord out = bio;
  switch (attr) {
    case Attribute::birthdate:
      if (out.profile.mode == BirthMode::age) {
        out.profile.age = std::stoi(value);
      } else {
        int y = 0, m = 0, d = 0;
        if (std::sscanf(value.c_str(), "%d-%d-%d", &y, &m, &d) != 3)
          throw Error("not an ISO date: \"" + value + "\"");
        out.profile.birthdate = Date{y, m, d};
      }
      break;
    case Attribute::birthplace: out.profile.birthplace = value; break;
    case Attribute::hobby: out.profile.hobby = value; break;
    case Attribute::university: out.profile.university = value; break;
    case Attribute::major: out.profile.major = value; break;
    case Attribute::work_city: out.profile.work_city = value; break;
  }
  auto it = std::find_if(out.sentences.begin(), out.sentences.end(),
                         [&](const auto& s) { return s.first == attr; });
  if (it == out.sentences.end())
    throw Error(std::string("attribute '") + attribute_key(attr) + "' absent from bio");
  const auto& variants = bank.variants(out.style, attr, out.profile.mode);
  const auto& tmpl = variants[rng.bounded(variants.size())];
  it->second = substitute(tmpl, {{"name", out.profile.name()}, {"value", value}});
  rebuild_bio(out);
  return out;
}

std::vector<BioRecord> apply_density(const TemplateBank& bank, std::vector<BioRecord> bios,
                                     const BioRecord& needle, Attribute attr, double density,
                                     Rng& rng) {
  if (!(density >= 0.0 && density <= 1.0))
    throw Error("distractor density " + std::to_string(density) + " outside [0,1]");
  const std::string value = needle.profile.value_of(attr);
  for (auto& bio : bios)
    if (rng.chance(density)) bio = force_attribute_value(bank, bio, attr, value, rng);
  return bios;
}

PackedContext build_biah(const std::vector<BioRecord>& needles, const std::string& essay_text,
                         const ContextSpec& spec, const std::vector<double>& depths) {
  if (spec.numbered) throw Error("numbered contexts are not supported in essay mode");
  if (needles.size() != depths.size())
    throw Error("needle/depth count mismatch");
  validate_depths(depths);

  std::vector<std::string> paragraphs;
  {
    std::string para;
    auto flush = [&] {
      std::string t(trim(para));
      if (!t.empty()) paragraphs.push_back(std::move(t));
      para.clear();
    };
    for (const auto& line : split_lines(essay_text)) {
      if (trim(line).empty())
        flush();
      else {
        if (!para.empty()) para += '\n';
        para += line;
      }
    }
    flush();
  }

  const int64_t reserve = reserve_for(needles, spec, digits_of(1));
  if (reserve > spec.token_budget)
    throw Error("needle reserve " + std::to_string(reserve) + " exceeds budget " +
                std::to_string(spec.token_budget));
  const int64_t limit = spec.token_budget - reserve;

  FillState st;
  std::vector<PlacedBio> blocks;
  size_t next_para = 0;
  while (next_para < paragraphs.size()) {
    FillState probe = st;
    probe.add(spec.counter, paragraphs[next_para], false, 1);
    if (probe.tokens(spec.counter) > limit) break;
    st = probe;
    PlacedBio pb;
    pb.text = paragraphs[next_para++];
    blocks.push_back(std::move(pb));
  }

  PackedContext ctx = finalize(place(blocks, needles, depths), spec);
  // trim or top up against the true count, re-placing needles each time
  while (ctx.token_count > spec.token_budget && !blocks.empty()) {
    blocks.pop_back();
    ctx = finalize(place(blocks, needles, depths), spec);
  }
  while (next_para < paragraphs.size()) {
    auto trial = blocks;
    PlacedBio pb;
    pb.text = paragraphs[next_para];
    trial.push_back(std::move(pb));
    PackedContext bigger = finalize(place(trial, needles, depths), spec);
    if (bigger.token_count > spec.token_budget) break;
    blocks = std::move(trial);
    ctx = std::move(bigger);
    ++next_para;
  }
  if (next_para >= paragraphs.size() &&
      ctx.token_count < spec.token_budget - ctx.max_block_cost)
    throw Error("essay corpus too short for budget " + std::to_string(spec.token_budget));
  return ctx;
}

PackedContext build_context(const BioGenerator& gen, const std::vector<BioRecord>& needles,
                            const ContextSpec& spec, Rng& rng,
                            std::vector<double>* resolved_depths) {
  if (spec.mode != HaystackMode::bios)
    throw Error("build_context handles bios mode; use build_biah for essays");
  if (static_cast<int>(needles.size()) != spec.needle_count)
    throw Error("needle count mismatch with spec");

  std::vector<double> depths = spec.needle_depths;
  if (depths.empty())
    for (int k = 0; k < spec.needle_count; ++k) depths.push_back(rng.unit());
  if (static_cast<int>(depths.size()) != spec.needle_count)
    throw Error("needle_depths size must match needle_count");
  validate_depths(depths);
  if (resolved_depths) *resolved_depths = depths;

  const int digits = digits_of(9999);
  const int64_t reserve = reserve_for(needles, spec, digits);
  if (reserve > spec.token_budget)
    throw Error("needle reserve " + std::to_string(reserve) + " exceeds budget " +
                std::to_string(spec.token_budget));

  PackedContext hay = pack_haystack(gen, spec, reserve);
  std::vector<PlacedBio> blocks = hay.bios;
  PackedContext ctx = insert_needles(hay, needles, depths, spec);

  while (ctx.token_count > spec.token_budget && !blocks.empty()) {
    blocks.pop_back();
    ctx = finalize(place(blocks, needles, depths), spec);
  }
  for (;;) {
    BioRecord extra = gen();
    auto trial = blocks;
    PlacedBio pb;
    pb.text = extra.text;
    pb.person = extra.profile.name();
    trial.push_back(std::move(pb));
    PackedContext bigger = finalize(place(trial, needles, depths), spec);
    if (bigger.token_count > spec.token_budget) {
      ctx.max_block_cost = std::max(ctx.max_block_cost, bigger.max_block_cost);
      break;
    }
    blocks = std::move(trial);
    ctx = std::move(bigger);
  }
  return ctx;
}

}  // namespace longbio
