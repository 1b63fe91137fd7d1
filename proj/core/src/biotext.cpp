#include "longbio/biotext.hpp"

#include <json.hpp>

#include "longbio/util.hpp"

namespace longbio {

const char* style_key(BioStyle s) {
  switch (s) {
    case BioStyle::standard: return "standard";
    case BioStyle::paraphrase: return "paraphrase";
    case BioStyle::pronoun: return "pronoun";
  }
  return "?";
}

std::optional<BioStyle> style_from_key(const std::string& key) {
  if (key == "standard") return BioStyle::standard;
  if (key == "paraphrase") return BioStyle::paraphrase;
  if (key == "pronoun") return BioStyle::pronoun;
  return std::nullopt;
}

namespace {

std::string slot_key(BioStyle style, const std::string& slot) {
  return std::string(style_key(style)) + "/" + slot;
}

const char* attr_slot(Attribute a, BirthMode mode) {
  if (a == Attribute::birthdate && mode == BirthMode::age) return "age";
  return attribute_key(a);
}

}  // namespace

TemplateBank TemplateBank::parse(const std::string& json_text, const std::string& origin) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(origin + ": not valid JSON: " + e.what());
  }

  TemplateBank bank;
  const auto& openings = doc.at("opening");
  for (BioStyle s : {BioStyle::standard, BioStyle::paraphrase, BioStyle::pronoun}) {
    if (!openings.contains(style_key(s)))
      throw Error(origin + ": missing opening for style '" + style_key(s) + "'");
    bank.openings_[static_cast<size_t>(s)] = openings.at(style_key(s)).get<std::string>();
  }
  bank.multihop_ = doc.at("multihop").get<std::string>();
  for (const char* ph : {"{attribute}", "{name}", "{antecedent}"})
    if (!contains(bank.multihop_, ph))
      throw Error(origin + ": multihop template lacks " + std::string(ph));

  const auto& styles = doc.at("styles");
  for (BioStyle s : {BioStyle::standard, BioStyle::paraphrase, BioStyle::pronoun}) {
    if (!styles.contains(style_key(s)))
      throw Error(origin + ": missing style '" + std::string(style_key(s)) + "'");
    const auto& block = styles.at(style_key(s));
    std::vector<std::string> slots;
    for (Attribute a : kAttributeOrder) slots.push_back(attribute_key(a));
    slots.push_back("age");
    for (const auto& slot : slots) {
      if (!block.contains(slot))
        throw Error(origin + ": style '" + style_key(s) + "' missing templates for '" + slot + "'");
      auto list = block.at(slot).get<std::vector<std::string>>();
      if (list.empty())
        throw Error(origin + ": style '" + style_key(s) + "' has no templates for '" + slot + "'");
      for (const auto& t : list) {
        if (!contains(t, "{value}"))
          throw Error(origin + ": template lacks {value}: \"" + t + "\"");
        const bool has_name = contains(t, "{name}");
        if (s == BioStyle::pronoun && has_name)
          throw Error(origin + ": pronoun template must not name the person: \"" + t + "\"");
        if (s != BioStyle::pronoun && !has_name)
          throw Error(origin + ": template lacks {name}: \"" + t + "\"");
      }
      bank.sentences_[slot_key(s, slot)] = std::move(list);
    }
  }
  if (!contains(bank.openings_[static_cast<size_t>(BioStyle::pronoun)], "{name}"))
    throw Error(origin + ": pronoun opening must introduce the name");
  return bank;
}

TemplateBank TemplateBank::load(const std::string& path) {
  return parse(read_file(path), path);
}

const std::vector<std::string>& TemplateBank::variants(BioStyle style, Attribute attr,
                                                       BirthMode mode) const {
  auto it = sentences_.find(slot_key(style, attr_slot(attr, mode)));
  if (it == sentences_.end())
    throw Error(std::string("no templates for ") + style_key(style) + "/" +
                attr_slot(attr, mode));
  return it->second;
}

const std::string& TemplateBank::opening(BioStyle style) const {
  return openings_[static_cast<size_t>(style)];
}

std::string_view BioRecord::span_text(Attribute a) const {
  auto it = spans.find(a);
  if (it == spans.end())
    throw Error(std::string("attribute '") + attribute_key(a) + "' absent from bio");
  return std::string_view(text).substr(it->second.first, it->second.second - it->second.first);
}

void rebuild_bio(BioRecord& bio) {
  bio.text = bio.opening;
  bio.body_start = bio.text.size();
  bio.spans.clear();
  for (size_t i = 0; i < bio.sentences.size(); ++i) {
    if (!bio.text.empty()) bio.text += ' ';
    if (i == 0) bio.body_start = bio.text.size();
    const size_t begin = bio.text.size();
    bio.text += bio.sentences[i].second;
    // the span owns its trailing separator so spans tile the body exactly
    const size_t end = (i + 1 < bio.sentences.size()) ? bio.text.size() + 1 : bio.text.size();
    bio.spans[bio.sentences[i].first] = {begin, end};
  }
}

BioRecord render_bio(const TemplateBank& bank, const PersonProfile& profile, BioStyle style,
                     Rng& rng) {
  BioRecord bio;
  bio.profile = profile;
  bio.style = style;
  bio.opening = substitute(bank.opening(style), {{"name", profile.name()}});
  for (Attribute a : kAttributeOrder) {
    const auto& variants = bank.variants(style, a, profile.mode);
    const auto& tmpl = variants[rng.bounded(variants.size())];
    bio.sentences.emplace_back(
        a, substitute(tmpl, {{"name", profile.name()}, {"value", profile.value_of(a)}}));
  }
  rebuild_bio(bio);
  return bio;
}

BioRecord strip_attribute(const TemplateBank&, const BioRecord& bio, Attribute attr) {
  BioRecord out = bio;
  auto it = std::find_if(out.sentences.begin(), out.sentences.end(),
                         [&](const auto& s) { return s.first == attr; });
  if (it == out.sentences.end())
    throw Error(std::string("strip_attribute: '") + attribute_key(attr) + "' not present");
  out.sentences.erase(it);
  rebuild_bio(out);
  return out;
}

BioRecord link_attribute(const TemplateBank& bank, const BioRecord& bio, Attribute attr,
                         const std::string& antecedent_full_name) {
  if (antecedent_full_name == bio.profile.name())
    throw Error("link_attribute: antecedent must be a different person");
  BioRecord out = bio;
  auto it = std::find_if(out.sentences.begin(), out.sentences.end(),
                         [&](const auto& s) { return s.first == attr; });
  if (it == out.sentences.end())
    throw Error(std::string("link_attribute: '") + attribute_key(attr) + "' not present");
  it->second = substitute(
      bank.multihop_template(),
      {{"attribute", attribute_display(attr, bio.profile.mode == BirthMode::age)},
       {"name", bio.profile.name()},
       {"antecedent", antecedent_full_name}});
  out.link = BioLink{attr, antecedent_full_name};
  rebuild_bio(out);
  return out;
}

}  // namespace longbio
