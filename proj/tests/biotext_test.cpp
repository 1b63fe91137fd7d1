#include <doctest.h>

#include <longbio/biotext.hpp>
#include <longbio/util.hpp>

#include <set>

#include "testutil.hpp"

using namespace longbio;

namespace {

const TemplateBank& bank() {
  static TemplateBank b = TemplateBank::load(testutil::data_path("templates/bio_templates.json"));
  return b;
}

PersonProfile paper_profile() {
  PersonProfile p;
  p.full_name = {"Andrew", "Xavier", "Jimenez"};
  p.birthdate = {1993, 6, 26};
  p.birthplace = "Santa Paula";
  p.hobby = "dandyism";
  p.university = "Ashford University";
  p.major = "Computer Science";
  p.work_city = "Dhaka";
  return p;
}

void check_span_tiling(const BioRecord& bio) {
  size_t cursor = bio.body_start;
  std::set<std::pair<size_t, size_t>> ordered;
  for (const auto& [attr, span] : bio.spans) ordered.insert(span);
  for (const auto& [begin, end] : ordered) {
    REQUIRE(begin == cursor);
    REQUIRE(end > begin);
    cursor = end;
  }
  REQUIRE(cursor == bio.text.size());
}

}  // namespace

TEST_SUITE("biotext") {
  TEST_CASE("standard bio matches the fixed templates") {
    Rng rng(1);
    auto bio = render_bio(bank(), paper_profile(), BioStyle::standard, rng);
    CHECK(contains(bio.text, "The hobby of Andrew Xavier Jimenez is dandyism."));
    CHECK(contains(bio.text, "Andrew Xavier Jimenez was born on 1993-06-26."));
    CHECK(contains(bio.text, "Andrew Xavier Jimenez works in Dhaka."));
    CHECK(bio.body_start == 0);
    check_span_tiling(bio);
    // every sentence carries the full name
    for (const auto& [attr, span] : bio.spans)
      CHECK(contains(std::string(bio.span_text(attr)), "Andrew Xavier Jimenez"));
  }

  TEST_CASE("standard rendering is rng-stable across seeds") {
    Rng a(1), b(992);
    CHECK(render_bio(bank(), paper_profile(), BioStyle::standard, a).text ==
          render_bio(bank(), paper_profile(), BioStyle::standard, b).text);
  }

  TEST_CASE("attribute order is fixed") {
    Rng rng(5);
    auto bio = render_bio(bank(), paper_profile(), BioStyle::paraphrase, rng);
    size_t last = 0;
    for (Attribute a : kAttributeOrder) {
      const auto span = bio.spans.at(a);
      CHECK(span.first >= last);
      last = span.first;
    }
  }

  TEST_CASE("paraphrase keeps values verbatim and stays name-anchored") {
    auto profile = paper_profile();
    for (uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      auto bio = render_bio(bank(), profile, BioStyle::paraphrase, rng);
      check_span_tiling(bio);
      for (Attribute a : kAttributeOrder) {
        CHECK(count_occurrences(bio.text, profile.value_of(a)) >= 1);
        CHECK(contains(std::string(bio.span_text(a)), "Andrew Xavier Jimenez"));
      }
    }
  }

  TEST_CASE("paraphrase work_city variant includes the paper wording") {
    // at least one seed renders "worked in Dhaka"
    bool seen = false;
    for (uint64_t seed = 0; seed < 64 && !seen; ++seed) {
      Rng rng(seed);
      auto bio = render_bio(bank(), paper_profile(), BioStyle::paraphrase, rng);
      seen = contains(bio.text, "Andrew Xavier Jimenez worked in Dhaka.");
    }
    CHECK(seen);
  }

  TEST_CASE("pronoun bio names the person only in the opening") {
    Rng rng(3);
    auto bio = render_bio(bank(), paper_profile(), BioStyle::pronoun, rng);
    CHECK(bio.text.rfind("My name is Andrew Xavier Jimenez.", 0) == 0);
    CHECK(contains(bio.text, "I was born on 1993-06-26."));
    CHECK(count_occurrences(bio.text, "Andrew Xavier Jimenez") == 1);
    check_span_tiling(bio);
    for (const auto& [attr, span] : bio.spans)
      CHECK_FALSE(contains(std::string(bio.span_text(attr)), "Jimenez"));
  }

  TEST_CASE("age mode renders the years-old sentence") {
    auto profile = paper_profile();
    profile.mode = BirthMode::age;
    profile.age = 61;
    Rng rng(2);
    auto bio = render_bio(bank(), profile, BioStyle::standard, rng);
    CHECK(contains(bio.text, "Andrew Xavier Jimenez is 61 years old."));
    CHECK_FALSE(contains(bio.text, "1993"));
  }

  TEST_CASE("round-trip: every value appears exactly once in standard style") {
    Rng rng(4);
    auto profile = paper_profile();
    auto bio = render_bio(bank(), profile, BioStyle::standard, rng);
    for (Attribute a : kAttributeOrder)
      CHECK(count_occurrences(bio.text, profile.value_of(a)) == 1);
  }

  TEST_CASE("strip removes the sentence and only that sentence") {
    Rng rng(8);
    auto profile = paper_profile();
    auto bio = render_bio(bank(), profile, BioStyle::standard, rng);
    auto stripped = strip_attribute(bank(), bio, Attribute::hobby);
    CHECK(stripped.spans.size() == 5);
    CHECK_FALSE(contains(stripped.text, "dandyism"));
    CHECK(contains(stripped.text, "Dhaka"));
    check_span_tiling(stripped);
    CHECK_THROWS_AS((void)strip_attribute(bank(), stripped, Attribute::hobby), Error);
  }

  TEST_CASE("strip with colliding values keeps the other sentence") {
    auto profile = paper_profile();
    profile.birthplace = "Dhaka";  // same value as work_city
    Rng rng(6);
    auto bio = render_bio(bank(), profile, BioStyle::standard, rng);
    auto stripped = strip_attribute(bank(), bio, Attribute::birthplace);
    CHECK_FALSE(contains(stripped.text, "was born in Dhaka"));
    CHECK(contains(stripped.text, "works in Dhaka"));
    CHECK(count_occurrences(stripped.text, "Dhaka") == 1);
  }

  TEST_CASE("link rewrites to the same-as form") {
    Rng rng(9);
    auto profile = paper_profile();
    auto bio = render_bio(bank(), profile, BioStyle::standard, rng);
    auto linked = link_attribute(bank(), bio, Attribute::birthplace, "Charlotte Farley Hall");
    CHECK(contains(linked.text,
                   "The birthplace of Andrew Xavier Jimenez is the same as Charlotte Farley Hall."));
    CHECK_FALSE(contains(linked.text, "Santa Paula"));
    REQUIRE(linked.link.has_value());
    CHECK(linked.link->attr == Attribute::birthplace);
    CHECK(linked.link->antecedent == "Charlotte Farley Hall");
    check_span_tiling(linked);
    CHECK_THROWS_AS((void)link_attribute(bank(), bio, Attribute::birthplace, profile.name()),
                    Error);
  }

  TEST_CASE("template bank rejects a pronoun template that names the person") {
    const char* bad = R"({
      "opening": {"standard": "", "paraphrase": "", "pronoun": "My name is {name}."},
      "multihop": "The {attribute} of {name} is the same as {antecedent}.",
      "styles": {
        "standard": {"birthdate": ["{name} b {value}."], "age": ["{name} a {value}."],
          "birthplace": ["{name} p {value}."], "hobby": ["{name} h {value}."],
          "university": ["{name} u {value}."], "major": ["{name} m {value}."],
          "work_city": ["{name} w {value}."]},
        "paraphrase": {"birthdate": ["{name} b {value}."], "age": ["{name} a {value}."],
          "birthplace": ["{name} p {value}."], "hobby": ["{name} h {value}."],
          "university": ["{name} u {value}."], "major": ["{name} m {value}."],
          "work_city": ["{name} w {value}."]},
        "pronoun": {"birthdate": ["{name} was born on {value}."], "age": ["I am {value}."],
          "birthplace": ["I p {value}."], "hobby": ["I h {value}."],
          "university": ["I u {value}."], "major": ["I m {value}."],
          "work_city": ["I w {value}."]}
      }
    })";
    CHECK_THROWS_AS((void)TemplateBank::parse(bad, "test"), Error);
  }
}
