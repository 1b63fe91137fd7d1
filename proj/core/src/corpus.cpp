#include "longbio/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <unordered_set>

#include "longbio/util.hpp"

namespace longbio {

const char* attribute_key(Attribute a) {
  switch (a) {
    case Attribute::birthdate: return "birthdate";
    case Attribute::birthplace: return "birthplace";
    case Attribute::hobby: return "hobby";
    case Attribute::university: return "university";
    case Attribute::major: return "major";
    case Attribute::work_city: return "work_city";
  }
  return "?";
}

const char* attribute_display(Attribute a, bool age_mode) {
  switch (a) {
    case Attribute::birthdate: return age_mode ? "age" : "birthday";
    case Attribute::birthplace: return "birthplace";
    case Attribute::hobby: return "hobby";
    case Attribute::university: return "university";
    case Attribute::major: return "major";
    case Attribute::work_city: return "working city";
  }
  return "?";
}

std::optional<Attribute> attribute_from_key(const std::string& key) {
  for (Attribute a : kAttributeOrder)
    if (key == attribute_key(a)) return a;
  if (key == "age") return Attribute::birthdate;
  return std::nullopt;
}

namespace {

void check_field(const char* field, const std::vector<std::string>& values) {
  if (values.empty()) throw Error(std::string("pool field '") + field + "' is empty");
  std::unordered_set<std::string> seen;
  for (const auto& v : values) {
    if (v.empty()) throw Error(std::string("pool field '") + field + "' contains an empty string");
    if (v.find('\n') != std::string::npos)
      throw Error(std::string("pool field '") + field + "' value contains a newline: \"" + v + "\"");
    if (v.find("Bio [") != std::string::npos)
      throw Error(std::string("pool field '") + field + "' value contains the citation marker: \"" +
                  v + "\"");
    if (!seen.insert(v).second)
      throw Error(std::string("duplicate entry in pool field '") + field + "': \"" + v + "\"");
  }
}

}  // namespace

void validate_pool(const AttributePool& pool) {
  check_field("first_names", pool.first_names);
  check_field("middle_names", pool.middle_names);
  check_field("last_names", pool.last_names);
  check_field("birthplaces", pool.birthplaces);
  check_field("hobbies", pool.hobbies);
  check_field("universities", pool.universities);
  check_field("majors", pool.majors);
  check_field("work_cities", pool.work_cities);
}

AttributePool parse_pool(const std::string& json_text, const std::string& origin) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(origin + ": not valid JSON: " + e.what());
  }
  if (!doc.is_object()) throw Error(origin + ": pool document must be a JSON object");

  auto take = [&](const char* field, std::vector<std::string>& out) {
    if (!doc.contains(field))
      throw Error(origin + ": missing pool field '" + field + "'");
    const auto& arr = doc.at(field);
    if (!arr.is_array()) throw Error(origin + ": pool field '" + field + "' must be an array");
    out.reserve(arr.size());
    for (const auto& v : arr) {
      if (!v.is_string())
        throw Error(origin + ": pool field '" + field + "' has a non-string entry");
      out.push_back(v.get<std::string>());
    }
  };

  AttributePool pool;
  take("first_names", pool.first_names);
  take("middle_names", pool.middle_names);
  take("last_names", pool.last_names);
  take("birthplaces", pool.birthplaces);
  take("hobbies", pool.hobbies);
  take("universities", pool.universities);
  take("majors", pool.majors);
  take("work_cities", pool.work_cities);
  validate_pool(pool);
  return pool;
}

AttributePool load_pool(const std::string& path) {
  return parse_pool(read_file(path), path);
}

std::string PersonProfile::value_of(Attribute a) const {
  switch (a) {
    case Attribute::birthdate:
      return mode == BirthMode::age ? std::to_string(age) : birthdate.iso();
    case Attribute::birthplace: return birthplace;
    case Attribute::hobby: return hobby;
    case Attribute::university: return university;
    case Attribute::major: return major;
    case Attribute::work_city: return work_city;
  }
  return {};
}

PersonProfile sample_profile(const AttributePool& pool, Rng& rng, const SampleOptions& opts,
                             std::set<std::string>& taken_names) {
  if (taken_names.size() >= pool.name_space())
    throw Error("name space exhausted: " + std::to_string(taken_names.size()) +
                " names taken out of " + std::to_string(pool.name_space()));

  PersonProfile p;
  for (;;) {
    p.full_name = FullName{rng.pick(pool.first_names), rng.pick(pool.middle_names),
                           rng.pick(pool.last_names)};
    if (taken_names.insert(p.name()).second) break;
  }

  p.mode = opts.mode;
  if (opts.mode == BirthMode::birthdate) {
    const int64_t lo = kBirthdateMin.to_days();
    const int64_t hi = kBirthdateMax.to_days();
    p.birthdate = Date::from_days(lo + static_cast<int64_t>(rng.bounded(uint64_t(hi - lo + 1))));
  } else {
    p.age = opts.age_min + static_cast<int>(rng.bounded(uint64_t(opts.age_max - opts.age_min + 1)));
  }
  p.birthplace = rng.pick(pool.birthplaces);
  p.hobby = rng.pick(pool.hobbies);
  p.university = rng.pick(pool.universities);
  p.major = rng.pick(pool.majors);
  p.work_city = rng.pick(pool.work_cities);
  return p;
}

}  // namespace longbio
