#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "longbio/biotext.hpp"
#include "longbio/tokens.hpp"

namespace longbio {

enum class HaystackMode { bios, essay };

struct ContextSpec {
  int64_t token_budget = 0;
  int needle_count = 1;
  std::vector<double> needle_depths;          // empty: uniform-random per needle
  std::optional<double> distractor_density;   // nullopt: natural collisions only
  HaystackMode mode = HaystackMode::bios;
  TokenCounter counter = TokenCounter::make("chars");
  bool numbered = false;                      // "Bio [k]: " prefixes (citation)
};

struct PlacedBio {
  std::string text;      // block text without any numbering prefix
  size_t offset = 0;     // byte offset of `text` within the packed context
  bool is_needle = false;
  std::string person;    // full name; empty for essay paragraphs
};

struct PackedContext {
  std::string text;
  std::vector<PlacedBio> bios;
  std::vector<size_t> needle_indices;
  int64_t token_count = 0;
  int64_t token_budget = 0;
  int64_t max_block_cost = 0;  // worst separator+prefix+block token cost seen
  bool numbered = false;
};

using BioGenerator = std::function<BioRecord()>;

// Join blocks with blank lines, adding "Bio [k]: " prefixes when numbered,
// and record each block's byte offset.
std::string assemble_blocks(std::vector<PlacedBio>& bios, bool numbered);

// Greedily append generated bios while the running total (plus the caller's
// needle reserve) stays within budget. Throws when the reserve alone exceeds
// the budget.
PackedContext pack_haystack(const BioGenerator& gen, const ContextSpec& spec,
                            int64_t needle_reserve = 0);

// Insert needle k at block index round(depth_k x (N+k)), clamped, then
// reassemble and recount exactly. Depths must lie in [0,1].
PackedContext insert_needles(const PackedContext& haystack, const std::vector<BioRecord>& needles,
                             const std::vector<double>& depths, const ContextSpec& spec);

// Resample one bio's attribute sentence to carry `value`.
BioRecord force_attribute_value(const TemplateBank& bank, const BioRecord& bio, Attribute attr,
                                const std::string& value, Rng& rng);

// With probability `density`, rewrite each haystack bio's questioned attribute
// to collide with the needle's value. Persons are left distinct.
std::vector<BioRecord> apply_density(const TemplateBank& bank, std::vector<BioRecord> bios,
                                     const BioRecord& needle, Attribute attr, double density,
                                     Rng& rng);

// Essay-haystack variant: contiguous essay paragraphs as filler, needles
// dropped in at paragraph boundaries. Throws when the corpus cannot fill the
// budget.
PackedContext build_biah(const std::vector<BioRecord>& needles, const std::string& essay_text,
                         const ContextSpec& spec, const std::vector<double>& depths);

// One-stop build used by task generation: resolves depths, packs, inserts,
// then trims or tops up (haystack tail only, needles re-placed by depth) until
// the final exact count honors budget - max_block <= count <= budget.
PackedContext build_context(const BioGenerator& gen, const std::vector<BioRecord>& needles,
                            const ContextSpec& spec, Rng& rng,
                            std::vector<double>* resolved_depths = nullptr);

}  // namespace longbio
