#include <doctest.h>

#include <json.hpp>
#include <longbio/corpus.hpp>
#include <longbio/util.hpp>

#include <cmath>
#include <map>
#include <set>

#include "testutil.hpp"

using namespace longbio;

namespace {

std::string minimal_pool_json() {
  return R"({
    "first_names": ["Ada"], "middle_names": ["Byron"], "last_names": ["Lovelace"],
    "birthplaces": ["London"], "hobbies": ["chess"], "universities": ["Oxford University"],
    "majors": ["Mathematics"], "work_cities": ["Cambridge"]
  })";
}

// 0.999 chi-square quantile via the Wilson-Hilferty cube approximation
double chi2_q999(double dof) {
  const double z = 3.090232;  // Phi^-1(0.999)
  const double t = 1.0 - 2.0 / (9.0 * dof) + z * std::sqrt(2.0 / (9.0 * dof));
  return dof * t * t * t;
}

double chi2_stat(const std::map<std::string, int>& counts, size_t k, int n) {
  const double expected = double(n) / double(k);
  double stat = 0;
  int seen = 0;
  for (const auto& [_, c] : counts) {
    stat += (c - expected) * (c - expected) / expected;
    ++seen;
  }
  stat += (int(k) - seen) * expected;  // unhit categories
  return stat;
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("minimal pool loads as singletons") {
    auto pool = parse_pool(minimal_pool_json(), "test");
    CHECK(pool.first_names == std::vector<std::string>{"Ada"});
    CHECK(pool.universities == std::vector<std::string>{"Oxford University"});
    CHECK(pool.name_space() == 1);
  }

  TEST_CASE("duplicate entry error names the value") {
    auto doc = nlohmann::json::parse(minimal_pool_json());
    doc["universities"] = {"Oxford University", "Oxford University"};
    try {
      parse_pool(doc.dump(), "test");
      FAIL("expected a duplicate-entry error");
    } catch (const Error& e) {
      CHECK(contains(e.what(), "universities"));
      CHECK(contains(e.what(), "Oxford University"));
    }
  }

  TEST_CASE("field-level validation catches bad values") {
    auto base = nlohmann::json::parse(minimal_pool_json());

    auto expect_error = [&](nlohmann::json doc, const char* needle) {
      try {
        parse_pool(doc.dump(), "test");
        FAIL_CHECK("expected an error mentioning: " << needle);
      } catch (const Error& e) {
        CHECK(contains(e.what(), needle));
      }
    };

    auto missing = base;
    missing.erase("hobbies");
    expect_error(missing, "hobbies");

    auto empty = base;
    empty["majors"] = nlohmann::json::array();
    expect_error(empty, "majors");

    auto newline = base;
    newline["birthplaces"] = {"Lon\ndon"};
    expect_error(newline, "newline");

    auto marker = base;
    marker["hobbies"] = {"collecting Bio [1] cards"};
    expect_error(marker, "citation marker");

    auto nonstring = base;
    nonstring["last_names"] = {42};
    expect_error(nonstring, "non-string");
  }

  TEST_CASE("shipped pool matches its manifest counts") {
    auto pool = load_pool(testutil::data_path("pools/default_pool.json"));
    auto manifest =
        nlohmann::json::parse(read_file(testutil::data_path("pools/default_pool.manifest.json")));
    const auto& counts = manifest.at("counts");
    CHECK(pool.first_names.size() == counts.at("first_names").get<size_t>());
    CHECK(pool.middle_names.size() == counts.at("middle_names").get<size_t>());
    CHECK(pool.last_names.size() == counts.at("last_names").get<size_t>());
    CHECK(pool.birthplaces.size() == counts.at("birthplaces").get<size_t>());
    CHECK(pool.hobbies.size() == counts.at("hobbies").get<size_t>());
    CHECK(pool.universities.size() == counts.at("universities").get<size_t>());
    CHECK(pool.majors.size() == counts.at("majors").get<size_t>());
    CHECK(pool.work_cities.size() == counts.at("work_cities").get<size_t>());
    // headline sizes
    CHECK(pool.first_names.size() == 100);
    CHECK(pool.universities.size() == 500);
    CHECK(pool.work_cities.size() == 300);
  }

  TEST_CASE("singleton pool forces the unique profile") {
    auto pool = parse_pool(minimal_pool_json(), "test");
    std::set<std::string> taken;
    Rng rng(123);
    auto p = sample_profile(pool, rng, {}, taken);
    CHECK(p.name() == "Ada Byron Lovelace");
    CHECK(p.hobby == "chess");
    CHECK(p.university == "Oxford University");
  }

  TEST_CASE("same seed, same profile") {
    auto pool = load_pool(testutil::data_path("pools/default_pool.json"));
    std::set<std::string> taken1, taken2;
    Rng r1(99), r2(99);
    auto a = sample_profile(pool, r1, {}, taken1);
    auto b = sample_profile(pool, r2, {}, taken2);
    CHECK(a.name() == b.name());
    CHECK(a.birthdate == b.birthdate);
    CHECK(a.value_of(Attribute::work_city) == b.value_of(Attribute::work_city));
  }

  TEST_CASE("birthdates stay in range and hit each decade") {
    auto pool = load_pool(testutil::data_path("pools/default_pool.json"));
    Rng rng(7);
    Date lo = kBirthdateMax, hi = kBirthdateMin;
    std::set<int> decades;
    for (int i = 0; i < 10000; ++i) {
      std::set<std::string> taken;  // fresh set: name uniqueness not under test
      auto p = sample_profile(pool, rng, {}, taken);
      REQUIRE_FALSE(p.birthdate < kBirthdateMin);
      REQUIRE_FALSE(kBirthdateMax < p.birthdate);
      if (p.birthdate < lo) lo = p.birthdate;
      if (hi < p.birthdate) hi = p.birthdate;
      decades.insert(p.birthdate.year / 10);
    }
    CHECK(decades == std::set<int>{195, 196, 197, 198, 199, 200});
    CHECK(lo.year == 1950);
    CHECK(hi.year == 2001);
  }

  TEST_CASE("full names stay unique within a run") {
    auto pool = load_pool(testutil::data_path("pools/default_pool.json"));
    Rng rng(21);
    std::set<std::string> taken;
    for (int i = 0; i < 3000; ++i) (void)sample_profile(pool, rng, {}, taken);
    CHECK(taken.size() == 3000);
  }

  TEST_CASE("name space exhaustion raises") {
    auto doc = nlohmann::json::parse(minimal_pool_json());
    doc["first_names"] = {"Ada", "Grace"};
    auto pool = parse_pool(doc.dump(), "test");
    Rng rng(1);
    std::set<std::string> taken;
    (void)sample_profile(pool, rng, {}, taken);
    (void)sample_profile(pool, rng, {}, taken);
    CHECK_THROWS_AS((void)sample_profile(pool, rng, {}, taken), Error);
  }

  TEST_CASE("age mode draws inside the configured range") {
    auto pool = load_pool(testutil::data_path("pools/default_pool.json"));
    Rng rng(17);
    SampleOptions opts;
    opts.mode = BirthMode::age;
    std::set<int> ages;
    for (int i = 0; i < 5000; ++i) {
      std::set<std::string> taken;
      auto p = sample_profile(pool, rng, opts, taken);
      REQUIRE(p.age >= 20);
      REQUIRE(p.age <= 70);
      ages.insert(p.age);
      if (i == 0) CHECK(p.value_of(Attribute::birthdate) == std::to_string(p.age));
    }
    CHECK(ages.size() == 51);
  }

  TEST_CASE("attribute draws pass a chi-square uniformity check") {
    auto pool = load_pool(testutil::data_path("pools/default_pool.json"));
    Rng rng(31);
    std::map<std::string, int> hobby_counts, uni_counts, city_counts;
    const int n = int(pool.universities.size()) * 50;
    for (int i = 0; i < n; ++i) {
      std::set<std::string> taken;
      auto p = sample_profile(pool, rng, {}, taken);
      ++hobby_counts[p.hobby];
      ++uni_counts[p.university];
      ++city_counts[p.work_city];
    }
    CHECK(chi2_stat(hobby_counts, pool.hobbies.size(), n) <
          chi2_q999(double(pool.hobbies.size() - 1)));
    CHECK(chi2_stat(uni_counts, pool.universities.size(), n) <
          chi2_q999(double(pool.universities.size() - 1)));
    CHECK(chi2_stat(city_counts, pool.work_cities.size(), n) <
          chi2_q999(double(pool.work_cities.size() - 1)));
  }
}
