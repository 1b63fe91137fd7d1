#include <doctest.h>

#include <longbio/scorekit.hpp>
#include <longbio/taskgen.hpp>
#include <longbio/util.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "oracle.hpp"
#include "testutil.hpp"

using namespace longbio;
using longbio::testing::OracleReader;

namespace {

const TemplateBank& bank() {
  static TemplateBank b = TemplateBank::load(testutil::data_path("templates/bio_templates.json"));
  return b;
}

const AttributePool& pool() {
  static AttributePool p = load_pool(testutil::data_path("pools/default_pool.json"));
  return p;
}

const PromptTemplates& prompts() {
  static PromptTemplates t = PromptTemplates::load(testutil::data_path("prompts/prompts.json"));
  return t;
}

const OracleReader& oracle() {
  static OracleReader o(bank(), prompts());
  return o;
}

GenDeps deps() {
  GenDeps d;
  d.pool = &pool();
  d.bank = &bank();
  d.prompts = &prompts();
  return d;
}

TaskInstance make_inst(TaskKind kind, std::vector<std::string> gold,
                       GoldKind gkind = GoldKind::value) {
  TaskInstance inst;
  inst.id = "t-0";
  inst.kind = kind;
  inst.length_budget = 2048;
  inst.context.text = "Placeholder block.";
  inst.questions = {"What is the hobby of John Smith?"};
  inst.question_prefixes = {"the hobby of John Smith is"};
  inst.gold.kind = gkind;
  inst.gold.values = std::move(gold);
  return inst;
}

std::vector<TaskInstance> small_suite(TaskKind kind, int count, uint64_t seed,
                                      long budget = 1024) {
  SuiteSpec spec;
  spec.kind = kind;
  if (kind == TaskKind::rank || kind == TaskKind::multi_standard) spec.n = 2;
  spec.budget = budget;
  spec.count = count;
  spec.seed = seed;
  spec.threads = 2;
  return generate_suite(deps(), spec);
}

std::map<std::string, std::string> oracle_responses(const std::vector<TaskInstance>& suite) {
  std::map<std::string, std::string> out;
  for (const auto& inst : suite) out[inst.id] = oracle().respond(inst);
  return out;
}

}  // namespace

TEST_CASE("normalize_answer canonicalizes") {
  CHECK(normalize_answer("Dandyism.") == "dandyism");
  CHECK(normalize_answer("") == "");
  CHECK(normalize_answer("  Santa   Paula ") == "santa paula");
  CHECK(normalize_answer("A\tB\nC") == "a b c");
  CHECK(normalize_answer("done!?.,") == "done");
  CHECK(normalize_answer("1993-06-26.") == "1993-06-26");
  CHECK(normalize_answer("x. y") == "x. y");
}

TEST_CASE("bounded containment refuses to extend alphanumeric runs") {
  CHECK(contains_bounded("the age difference is 18", "18"));
  CHECK_FALSE(contains_bounded("the age difference is 180", "18"));
  CHECK_FALSE(contains_bounded("in 2018", "18"));
  CHECK(contains_bounded("category 3", "category 3"));
  CHECK_FALSE(contains_bounded("category 13", "category 3"));
  CHECK_FALSE(contains_bounded("category 31", "category 3"));
  CHECK(contains_bounded("'the answer is not explicitly stated'", "the answer is not explicitly stated"));
  CHECK_FALSE(contains_bounded("dandyisms", "dandyism"));
}

TEST_CASE("score_exact applies containment on the first answer line") {
  TaskInstance calc = make_inst(TaskKind::calculation, {"18"});
  CHECK(score_exact("the age difference is 18", calc, prompts(), PrefixMode::continuation).pass);
  CHECK_FALSE(
      score_exact("the age difference is 181", calc, prompts(), PrefixMode::continuation).pass);

  TaskInstance hobby = make_inst(TaskKind::standard, {"dandyism"});
  CHECK_FALSE(score_exact("mycology", hobby, prompts(), PrefixMode::continuation).pass);
  CHECK(score_exact(" Dandyism.\nsecond line ignored", hobby, prompts(),
                    PrefixMode::continuation)
            .pass);
  // the verdict comes from the first non-empty line only
  CHECK_FALSE(score_exact("mycology\ndandyism", hobby, prompts(), PrefixMode::continuation).pass);

  TaskInstance icl = make_inst(TaskKind::icl, {"Category 3"}, GoldKind::category);
  icl.question_prefixes = {""};
  CHECK(score_exact("Category 3", icl, prompts(), PrefixMode::continuation).pass);
  CHECK(score_exact("Category 3.", icl, prompts(), PrefixMode::continuation).pass);
  CHECK_FALSE(score_exact("Category 13", icl, prompts(), PrefixMode::continuation).pass);
}

TEST_CASE("score_exact strips the echoed assistant prefix in user_append mode") {
  TaskInstance inst = make_inst(TaskKind::standard, {"dandyism"});
  const std::string echoed =
      "Based on the provided context, the hobby of John Smith is dandyism.";
  ScoreRecord strippedr = score_exact(echoed, inst, prompts(), PrefixMode::user_append);
  CHECK(strippedr.pass);
  CHECK(strippedr.answers.at(0) == "dandyism");
  ScoreRecord kept = score_exact(echoed, inst, prompts(), PrefixMode::continuation);
  CHECK(kept.pass);  // containment still tolerates the restated prefix
  CHECK(kept.answers.at(0) ==
        "based on the provided context, the hobby of john smith is dandyism");
}

TEST_CASE("score_multi is all-or-nothing and ordered") {
  TaskInstance inst = make_inst(TaskKind::multi_standard, {"red wine", "chess"},
                                GoldKind::value_list);
  inst.questions = {"q1", "q2"};
  inst.question_prefixes = {"", ""};
  CHECK(score_multi("red wine\nchess", inst, prompts(), PrefixMode::continuation).pass);
  CHECK_FALSE(score_multi("red wine\npoetry", inst, prompts(), PrefixMode::continuation).pass);
  CHECK_FALSE(score_multi("chess\nred wine", inst, prompts(), PrefixMode::continuation).pass);
  CHECK_FALSE(score_multi("", inst, prompts(), PrefixMode::continuation).pass);
}

TEST_CASE("score_rank extracts the final name sequence") {
  TaskInstance inst = make_inst(TaskKind::rank, {"Bob Ray", "Ann Lee"}, GoldKind::name_order);
  inst.question_prefixes = {""};
  CHECK(score_rank("Bob Ray, then Ann Lee", inst, prompts(), PrefixMode::continuation).pass);
  CHECK_FALSE(score_rank("Ann Lee, Bob Ray", inst, prompts(), PrefixMode::continuation).pass);
  CHECK_FALSE(score_rank("Bob Ray", inst, prompts(), PrefixMode::continuation).pass);
  CHECK_FALSE(score_rank("nobody here", inst, prompts(), PrefixMode::continuation).pass);

  // reasoning that restates people in context order, then answers
  const std::string cot =
      "Ann Lee is 30 years old and Bob Ray is 25 years old, "
      "so the ranking from youngest to oldest is Bob Ray, Ann Lee.";
  CHECK(score_rank(cot, inst, prompts(), PrefixMode::continuation).pass);

  // the answer may arrive on its own line after the reasoning
  const std::string lines = "Ann Lee is 30 years old. Bob Ray is 25 years old.\n"
                            "Answer: Bob Ray, Ann Lee.";
  CHECK(score_rank(lines, inst, prompts(), PrefixMode::continuation).pass);
}

TEST_CASE("score_rank claims nested names longest first") {
  TaskInstance inst =
      make_inst(TaskKind::rank, {"Mary Ann Lee", "Ann Lee"}, GoldKind::name_order);
  inst.question_prefixes = {""};
  CHECK(score_rank("Mary Ann Lee, Ann Lee", inst, prompts(), PrefixMode::continuation).pass);
  CHECK_FALSE(score_rank("Ann Lee, Mary Ann Lee", inst, prompts(), PrefixMode::continuation).pass);
  // one mention of the long name must not satisfy the short one
  CHECK_FALSE(score_rank("Mary Ann Lee", inst, prompts(), PrefixMode::continuation).pass);
}

TEST_CASE("score_twodiff accepts any context pair with the target difference") {
  TaskInstance inst = make_inst(TaskKind::twodiff, {"Ann Lee", "Bob Ray"}, GoldKind::pair_diff);
  inst.question_prefixes = {""};
  inst.gold.target_diff = 7;
  inst.gold.ages = {{"Ann Lee", 30}, {"Bob Ray", 37}, {"Cid Om", 44}};

  CHECK(score_twodiff("Ann Lee and Bob Ray", inst, prompts(), PrefixMode::continuation).pass);
  // unplanted but valid pair
  CHECK(score_twodiff("Bob Ray and Cid Om", inst, prompts(), PrefixMode::continuation).pass);
  CHECK(score_twodiff("Answer: Cid Om and Bob Ray.", inst, prompts(), PrefixMode::continuation)
            .pass);
  CHECK_FALSE(score_twodiff("Ann Lee and Cid Om", inst, prompts(), PrefixMode::continuation).pass);
  // fabricated partner
  CHECK_FALSE(
      score_twodiff("Ann Lee and Zed Quux", inst, prompts(), PrefixMode::continuation).pass);
  // naming three people is not an answer
  CHECK_FALSE(score_twodiff("Ann Lee, Bob Ray and Cid Om", inst, prompts(),
                            PrefixMode::continuation)
                  .pass);
}

TEST_CASE("score_citation compares bracket sets") {
  TaskInstance inst = make_inst(TaskKind::citation, {"dandyism"}, GoldKind::citation_set);
  inst.gold.citations = {7};
  CHECK(score_citation("the hobby is dandyism [7].", inst, prompts(), PrefixMode::continuation)
            .pass);
  CHECK_FALSE(score_citation("[7][9]", inst, prompts(), PrefixMode::continuation).pass);
  CHECK_FALSE(score_citation("no brackets", inst, prompts(), PrefixMode::continuation).pass);
  CHECK(score_citation("[7] and again [7]", inst, prompts(), PrefixMode::continuation).pass);
  CHECK_FALSE(score_citation("[not a number]", inst, prompts(), PrefixMode::continuation).pass);

  TaskInstance multi = make_inst(TaskKind::citation_multi, {"a", "b"}, GoldKind::citation_set);
  multi.questions = {"q1", "q2"};
  multi.question_prefixes = {"", ""};
  multi.gold.citations = {3, 5};
  CHECK(score_citation("a [3]. B [5].", multi, prompts(), PrefixMode::continuation).pass);
  CHECK_FALSE(score_citation("a [3].", multi, prompts(), PrefixMode::continuation).pass);
}

TEST_CASE("score_idk demands the answer and the refusal") {
  TaskInstance present = make_inst(TaskKind::idk, {"dandyism"});
  present.pair_id = "pair-1";
  TaskInstance absent = make_inst(TaskKind::idk, {"The answer is not explicitly stated"},
                                  GoldKind::refusal);
  absent.pair_id = "pair-1";

  ScoreRecord good = score_idk("dandyism", "The answer is not explicitly stated.", present,
                               absent, prompts(), PrefixMode::continuation);
  CHECK(good.pass);
  CHECK(good.id == "pair-1");
  CHECK(good.kind == TaskKind::idk);

  CHECK_FALSE(score_idk("dandyism", "mycology", present, absent, prompts(),
                        PrefixMode::continuation)
                  .pass);
  CHECK_FALSE(score_idk("The answer is not explicitly stated",
                        "The answer is not explicitly stated", present, absent, prompts(),
                        PrefixMode::continuation)
                  .pass);
}

TEST_CASE("score_response dispatches by kind and rejects lone idk halves") {
  TaskInstance inst = make_inst(TaskKind::standard, {"dandyism"});
  CHECK(score_response("dandyism", inst, prompts(), PrefixMode::continuation).pass);
  inst.kind = TaskKind::idk;
  CHECK_THROWS_AS(score_response("dandyism", inst, prompts(), PrefixMode::continuation), Error);
}

TEST_CASE("scoring the oracle yields a perfect suite") {
  for (TaskKind kind : {TaskKind::standard, TaskKind::rank, TaskKind::citation, TaskKind::icl}) {
    auto suite = small_suite(kind, 3, 40 + static_cast<uint64_t>(kind));
    auto records = score_suite(suite, oracle_responses(suite), prompts(),
                               PrefixMode::continuation);
    REQUIRE(records.size() == suite.size());
    for (const auto& r : records) CHECK(r.pass);
  }

  auto idk_suite = small_suite(TaskKind::idk, 3, 77);
  auto records =
      score_suite(idk_suite, oracle_responses(idk_suite), prompts(), PrefixMode::continuation);
  REQUIRE(records.size() == 3);  // one record per pair
  for (const auto& r : records) {
    CHECK(r.pass);
    CHECK(r.kind == TaskKind::idk);
  }
}

TEST_CASE("score_suite marks missing responses as failures") {
  auto suite = small_suite(TaskKind::standard, 2, 50);
  auto responses = oracle_responses(suite);
  responses.erase(suite[1].id);
  auto records = score_suite(suite, responses, prompts(), PrefixMode::continuation);
  REQUIRE(records.size() == 2);
  CHECK(records[0].pass);
  CHECK_FALSE(records[1].pass);
  CHECK(records[1].notes == "no response");
}

TEST_CASE("rescoring a log is byte-identical") {
  auto suite = small_suite(TaskKind::standard, 3, 51);
  auto responses = oracle_responses(suite);
  auto r1 = score_suite(suite, responses, prompts(), PrefixMode::continuation);
  auto r2 = score_suite(suite, responses, prompts(), PrefixMode::continuation);
  REQUIRE(r1.size() == r2.size());
  for (size_t i = 0; i < r1.size(); ++i) CHECK(record_to_json(r1[i]) == record_to_json(r2[i]));
}

TEST_CASE("hallucination rate follows the count quotient") {
  // 24 failures, 14 of them answering with text absent from the context
  auto suite = small_suite(TaskKind::standard, 24, 52, 768);
  std::map<std::string, std::string> responses;
  for (size_t i = 0; i < suite.size(); ++i) {
    if (i < 14)
      responses[suite[i].id] = "flurbovision";  // nowhere in any context
    else
      responses[suite[i].id] = suite[i].needles[0].name;  // wrong, but stated in context
  }
  auto records = score_suite(suite, responses, prompts(), PrefixMode::continuation);
  auto stats = hallucination_rate(records, suite);
  CHECK(stats.total == 24);
  CHECK(stats.failed == 24);
  CHECK(stats.hallucinated == 14);
  REQUIRE(stats.rate.has_value());
  // 14/24 = 58.33%; the source table prints 58.8% for the same counts, the
  // formula is authoritative here
  CHECK(*stats.rate == doctest::Approx(14.0 / 24.0).epsilon(1e-12));
  int flagged = 0;
  for (const auto& r : records) flagged += r.hallucination ? 1 : 0;
  CHECK(flagged == 14);
}

TEST_CASE("hallucination rate is undefined without failures") {
  auto suite = small_suite(TaskKind::standard, 3, 53);
  auto records = score_suite(suite, oracle_responses(suite), prompts(),
                             PrefixMode::continuation);
  auto stats = hallucination_rate(records, suite);
  CHECK(stats.total == 3);
  CHECK(stats.failed == 0);
  CHECK_FALSE(stats.rate.has_value());
}

TEST_CASE("aggregate groups by task, budget and attribute") {
  std::vector<ScoreRecord> records;
  const char* attrs[] = {"birthdate", "birthplace", "hobby", "university", "major", "work_city"};
  for (int i = 0; i < 12; ++i) {
    ScoreRecord r;
    r.id = "r" + std::to_string(i);
    r.kind = TaskKind::standard;
    r.budget = 2048;
    r.attribute = attrs[i % 6];
    r.pass = i % 2 == 0;
    records.push_back(r);
  }
  auto rows = aggregate(records);
  REQUIRE(rows.size() == 7);  // "all" plus six attributes
  CHECK(rows[0].attribute == "all");
  CHECK(rows[0].n == 12);
  CHECK(rows[0].passed == 6);
  CHECK(rows[0].accuracy == doctest::Approx(0.5));
  for (size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i].n == 2);
    CHECK(rows[i].task == "standard");
  }
  std::string csv = aggregate_csv(rows);
  CHECK(csv.rfind("task,budget,attribute,n,passed,accuracy\n", 0) == 0);
  CHECK(contains(csv, "standard,2048,all,12,6,0.5000\n"));
}

TEST_CASE("depth and density form a grid") {
  std::vector<ScoreRecord> records;
  for (double depth : {0.0, 0.5, 1.0}) {
    for (double density : {0.0, 0.3}) {
      for (int i = 0; i < 4; ++i) {
        ScoreRecord r;
        r.kind = TaskKind::standard;
        r.budget = 2048;
        r.depth = depth;
        r.density = density;
        r.pass = i < 3;
        records.push_back(r);
      }
    }
  }
  ScoreRecord no_keys;  // excluded: suite ran without forced density
  no_keys.depth = 0.5;
  records.push_back(no_keys);

  auto cells = depth_density_grid(records);
  REQUIRE(cells.size() == 6);
  for (const auto& c : cells) {
    CHECK(c.n == 4);
    CHECK(c.passed == 3);
    CHECK(c.accuracy == doctest::Approx(0.75));
  }
  std::string csv = grid_csv(cells);
  CHECK(csv.rfind("depth,density,accuracy,n\n", 0) == 0);
  CHECK(contains(csv, "0.5,0.3,0.7500,4\n"));
}

namespace {

// O(n^2) tie-averaged rank, independent of the library's sort-based version
std::vector<double> brute_ranks(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  for (size_t i = 0; i < v.size(); ++i) {
    int less = 0, equal = 0;
    for (size_t j = 0; j < v.size(); ++j) {
      if (v[j] < v[i]) ++less;
      if (v[j] == v[i]) ++equal;
    }
    out[i] = 1.0 + less + (equal - 1) / 2.0;
  }
  return out;
}

double brute_spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  auto rx = brute_ranks(xs);
  auto ry = brute_ranks(ys);
  double mx = 0, my = 0;
  for (size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= static_cast<double>(rx.size());
  my /= static_cast<double>(ry.size());
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST_CASE("spearman hits the monotone extremes exactly") {
  std::vector<double> xs = {1, 2, 3, 4, 5, 6};
  std::vector<double> up = {2, 4, 9, 16, 25, 99};
  std::vector<double> down = {9, 7, 5, 3.5, 2, -4};
  auto inc = spearman(xs, up);
  CHECK(inc.rho == 1.0);
  CHECK(inc.p_value == 0.0);
  auto dec = spearman(xs, down);
  CHECK(dec.rho == -1.0);
  CHECK(dec.p_value == 0.0);

  CHECK_THROWS_AS(spearman({1, 2}, {1, 2}), Error);
  CHECK_THROWS_AS(spearman({1, 2, 3}, {1, 2}), Error);
  CHECK_THROWS_AS(spearman({1, 1, 1}, {1, 2, 3}), Error);
}

TEST_CASE("spearman matches the brute-force oracle on random vectors with ties") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const size_t n = 5 + rng.bounded(20);
    std::vector<double> xs, ys;
    for (size_t i = 0; i < n; ++i) {
      xs.push_back(static_cast<double>(rng.bounded(8)));  // small range forces ties
      ys.push_back(static_cast<double>(rng.bounded(8)));
    }
    bool xc = true, yc = true;
    for (size_t i = 1; i < n; ++i) {
      xc = xc && xs[i] == xs[0];
      yc = yc && ys[i] == ys[0];
    }
    if (xc || yc) continue;
    auto got = spearman(xs, ys);
    CHECK(std::fabs(got.rho - brute_spearman(xs, ys)) < 1e-9);
    CHECK(got.p_value >= 0.0);
    CHECK(got.p_value <= 1.0);
    auto flipped = spearman(ys, xs);
    CHECK(std::fabs(got.rho - flipped.rho) < 1e-12);
    CHECK(std::fabs(got.p_value - flipped.p_value) < 1e-12);
  }
}

TEST_CASE("the p-value approximation matches closed forms at small df") {
  // df = 2: two-sided p = 1 - t/sqrt(2 + t^2)
  for (double rho : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    const double df = 2.0;
    const double t = rho * std::sqrt(df / (1 - rho * rho));
    const double expected = 1.0 - t / std::sqrt(2.0 + t * t);
    const double got = incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
    CHECK(std::fabs(got - expected) < 1e-12);
  }
  // df = 1: two-sided p = 1 - (2/pi) atan(t)
  for (double rho : {0.2, 0.4, 0.6, 0.8}) {
    const double df = 1.0;
    const double t = rho * std::sqrt(df / (1 - rho * rho));
    const double expected = 1.0 - 2.0 / M_PI * std::atan(t);
    const double got = incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
    CHECK(std::fabs(got - expected) < 1e-10);
  }
  // symmetry of the regularized incomplete beta
  CHECK(std::fabs(incomplete_beta(2.5, 0.5, 0.3) - (1.0 - incomplete_beta(0.5, 2.5, 0.7))) <
        1e-12);
  CHECK(incomplete_beta(1.0, 1.0, 0.25) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("score records round trip through JSONL") {
  ScoreRecord r;
  r.id = "citation-2048-0001";
  r.kind = TaskKind::citation;
  r.budget = 2048;
  r.attribute = "hobby";
  r.depth = 0.25;
  r.density = 0.3;
  r.pass = false;
  r.answers = {"mycology [4]"};
  r.citations = {4, 9};
  r.hallucination = true;
  r.notes = "wrong citation";

  ScoreRecord back = record_from_json(record_to_json(r));
  CHECK(back.id == r.id);
  CHECK(back.kind == r.kind);
  CHECK(back.budget == r.budget);
  CHECK(back.attribute == r.attribute);
  CHECK(back.depth == r.depth);
  CHECK(back.density == r.density);
  CHECK(back.pass == r.pass);
  CHECK(back.answers == r.answers);
  CHECK(back.citations == r.citations);
  CHECK(back.hallucination == r.hallucination);
  CHECK(back.notes == r.notes);

  auto path = (std::filesystem::temp_directory_path() / "longbio_score_test.jsonl").string();
  write_score_log(path, {r, back});
  auto logged = read_score_log(path);
  std::remove(path.c_str());
  REQUIRE(logged.size() == 2);
  CHECK(record_to_json(logged[0]) == record_to_json(logged[1]));

  CHECK_THROWS_AS(record_from_json("{}"), Error);
  CHECK(prefix_mode_from_key(prefix_mode_key(PrefixMode::user_append)) ==
        PrefixMode::user_append);
  CHECK_THROWS_AS(prefix_mode_from_key("psychic"), Error);
}
