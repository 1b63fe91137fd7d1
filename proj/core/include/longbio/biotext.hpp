#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "longbio/corpus.hpp"
#include "longbio/rng.hpp"

namespace longbio {

enum class BioStyle { standard, paraphrase, pronoun };

const char* style_key(BioStyle s);
std::optional<BioStyle> style_from_key(const std::string& key);

// Sentence templates per (style, attribute). "{name}" and "{value}" are the
// placeholders; pronoun-style sentences are first person and carry no name.
class TemplateBank {
 public:
  static TemplateBank load(const std::string& path);
  static TemplateBank parse(const std::string& json_text, const std::string& origin);

  const std::vector<std::string>& variants(BioStyle style, Attribute attr, BirthMode mode) const;
  const std::string& opening(BioStyle style) const;
  const std::string& multihop_template() const { return multihop_; }

 private:
  // key: style index, then attribute slot ("age" shares the birthdate slot)
  std::map<std::string, std::vector<std::string>> sentences_;
  std::array<std::string, 3> openings_;
  std::string multihop_;
};

struct BioLink {
  Attribute attr;
  std::string antecedent;  // full name of the referenced person
};

// A rendered biography. `text` is the opening (if any) followed by one
// sentence per attribute, joined by single spaces. `spans` gives each
// attribute's byte range; the ranges tile [body_start, text.size()) exactly,
// each range covering its sentence plus the following separator.
struct BioRecord {
  PersonProfile profile;
  BioStyle style = BioStyle::standard;
  std::string text;
  size_t body_start = 0;
  std::map<Attribute, std::pair<size_t, size_t>> spans;
  std::optional<BioLink> link;

  // rebuild inputs; kept so strip/link can re-render instead of splicing bytes
  std::string opening;
  std::vector<std::pair<Attribute, std::string>> sentences;

  std::string_view span_text(Attribute a) const;
};

BioRecord render_bio(const TemplateBank& bank, const PersonProfile& profile, BioStyle style,
                     Rng& rng);

// Recompute text/spans from opening + sentences (after editing sentences).
void rebuild_bio(BioRecord& bio);

// Remove exactly the attribute's sentence. Errors if already absent. The value
// may still occur elsewhere if another attribute shares the same string;
// callers that need full absence must check the returned text.
BioRecord strip_attribute(const TemplateBank& bank, const BioRecord& bio, Attribute attr);

// Replace the attribute's sentence with the same-as form referencing the
// antecedent person. Errors on self-reference or absent attribute.
BioRecord link_attribute(const TemplateBank& bank, const BioRecord& bio, Attribute attr,
                         const std::string& antecedent_full_name);

}  // namespace longbio
