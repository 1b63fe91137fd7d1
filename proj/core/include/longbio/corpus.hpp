#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "longbio/date.hpp"
#include "longbio/rng.hpp"

namespace longbio {

// ── Attributes ──────────────────────────────────────────────────────────────

// Fixed order; bios render their sentences in exactly this order.
enum class Attribute {
  birthdate,  // or age, depending on profile mode
  birthplace,
  hobby,
  university,
  major,
  work_city,
};

inline constexpr std::array<Attribute, 6> kAttributeOrder = {
    Attribute::birthdate, Attribute::birthplace, Attribute::hobby,
    Attribute::university, Attribute::major,     Attribute::work_city,
};

// Machine name, stable across configs/templates ("birthdate", "work_city", ...)
const char* attribute_key(Attribute a);
// Phrase used inside questions ("birthday", "working city", ...). Age-mode
// profiles display the birthdate slot as "age".
const char* attribute_display(Attribute a, bool age_mode);
std::optional<Attribute> attribute_from_key(const std::string& key);

// ── Pools ───────────────────────────────────────────────────────────────────

struct AttributePool {
  std::vector<std::string> first_names;
  std::vector<std::string> middle_names;
  std::vector<std::string> last_names;
  std::vector<std::string> birthplaces;
  std::vector<std::string> hobbies;
  std::vector<std::string> universities;
  std::vector<std::string> majors;
  std::vector<std::string> work_cities;

  uint64_t name_space() const {
    return static_cast<uint64_t>(first_names.size()) * middle_names.size() * last_names.size();
  }
};

// Throws Error naming the field and offending value on any violation:
// duplicates, empties, embedded newlines, or the "Bio [" marker.
void validate_pool(const AttributePool& pool);
AttributePool load_pool(const std::string& path);
AttributePool parse_pool(const std::string& json_text, const std::string& origin);

// ── Profiles ────────────────────────────────────────────────────────────────

struct FullName {
  std::string first, middle, last;
  std::string str() const { return first + " " + middle + " " + last; }
  friend bool operator==(const FullName& a, const FullName& b) {
    return a.first == b.first && a.middle == b.middle && a.last == b.last;
  }
};

enum class BirthMode { birthdate, age };

struct PersonProfile {
  FullName full_name;
  BirthMode mode = BirthMode::birthdate;
  Date birthdate;   // valid when mode == birthdate
  int age = 0;      // valid when mode == age
  std::string birthplace;
  std::string hobby;
  std::string university;
  std::string major;
  std::string work_city;

  std::string name() const { return full_name.str(); }
  // Canonical answer string for an attribute ("1993-06-26", "Dhaka", ...).
  std::string value_of(Attribute a) const;
};

struct SampleOptions {
  BirthMode mode = BirthMode::birthdate;
  int age_min = 20;
  int age_max = 70;
};

inline constexpr Date kBirthdateMin{1950, 1, 1};
inline constexpr Date kBirthdateMax{2001, 12, 31};

// Uniform independent draws per attribute; rejects full-name collisions
// against taken_names and records the new name there. Throws when the name
// space is exhausted.
PersonProfile sample_profile(const AttributePool& pool, Rng& rng, const SampleOptions& opts,
                             std::set<std::string>& taken_names);

}  // namespace longbio
