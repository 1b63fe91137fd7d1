#include "longbio/scorekit.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "longbio/util.hpp"

namespace longbio {

namespace {

using nlohmann::json;

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// first occurrence at or after `from` that does not extend an alphanumeric run
size_t find_bounded(const std::string& hay, const std::string& needle, size_t from = 0) {
  if (needle.empty()) return from <= hay.size() ? from : std::string::npos;
  for (size_t at = hay.find(needle, from); at != std::string::npos;
       at = hay.find(needle, at + 1)) {
    const bool left_ok = at == 0 || !is_alnum(hay[at - 1]) || !is_alnum(needle.front());
    const size_t end = at + needle.size();
    const bool right_ok = end == hay.size() || !is_alnum(hay[end]) || !is_alnum(needle.back());
    if (left_ok && right_ok) return at;
  }
  return std::string::npos;
}

std::string first_line(const std::string& text) {
  size_t begin = 0;
  while (begin < text.size()) {
    size_t end = text.find('\n', begin);
    std::string line = text.substr(begin, end == std::string::npos ? end : end - begin);
    if (!normalize_answer(line).empty()) return line;
    if (end == std::string::npos) break;
    begin = end + 1;
  }
  return "";
}

std::string assistant_prefix_of(const TaskInstance& inst, const PromptTemplates& templates) {
  const PromptTemplateSet& g = templates.group(inst.kind);
  const std::string prefix =
      inst.question_prefixes.empty() ? std::string() : inst.question_prefixes[0];
  return substitute(g.assistant, {{"question_prefix", prefix}});
}

// normalize and, in echo mode, drop the repeated assistant prefix
std::string stripped(const std::string& text, const TaskInstance& inst,
                     const PromptTemplates& templates, PrefixMode mode) {
  std::string n = normalize_answer(text);
  if (mode == PrefixMode::user_append) {
    std::string echo = normalize_answer(assistant_prefix_of(inst, templates));
    if (!echo.empty() && n.rfind(echo, 0) == 0) {
      n.erase(0, echo.size());
      while (!n.empty() && n.front() == ' ') n.erase(n.begin());
    }
  }
  return n;
}

ScoreRecord base_record(const TaskInstance& inst) {
  ScoreRecord r;
  r.id = inst.id;
  r.kind = inst.kind;
  r.budget = inst.length_budget;
  switch (inst.kind) {
    case TaskKind::standard:
    case TaskKind::paraphrase:
    case TaskKind::pronoun:
    case TaskKind::idk:
      if (!inst.needles.empty()) r.attribute = inst.needles[0].attribute;
      break;
    default:
      break;
  }
  if (inst.needles.size() == 1) r.depth = inst.needles[0].depth;
  r.density = inst.density.value_or(-1.0);
  return r;
}

struct NameHit {
  size_t pos = 0;
  std::string name;  // original casing
};

// Last boundary-guarded occurrence of each roster name on the line, longest
// names claiming their spans first so nested names cannot double-count.
std::vector<NameHit> extract_names(const std::string& nline,
                                   const std::vector<std::string>& roster) {
  std::vector<std::string> order = roster;
  std::sort(order.begin(), order.end(), [](const std::string& a, const std::string& b) {
    return a.size() != b.size() ? a.size() > b.size() : a < b;
  });
  std::vector<std::pair<size_t, size_t>> claimed;
  auto overlaps = [&](size_t at, size_t len) {
    for (const auto& [s, l] : claimed)
      if (at < s + l && s < at + len) return true;
    return false;
  };
  std::vector<NameHit> hits;
  for (const auto& name : order) {
    const std::string n = normalize_answer(name);
    if (n.empty()) continue;
    size_t last = std::string::npos;
    for (size_t at = find_bounded(nline, n); at != std::string::npos;
         at = find_bounded(nline, n, at + 1)) {
      if (!overlaps(at, n.size())) last = at;
    }
    if (last == std::string::npos) continue;
    claimed.emplace_back(last, n.size());
    hits.push_back({last, name});
  }
  std::sort(hits.begin(), hits.end(),
            [](const NameHit& a, const NameHit& b) { return a.pos < b.pos; });
  return hits;
}

// last response line that mentions anyone from the roster, normalized
std::string final_answer_line(const std::string& response, const TaskInstance& inst,
                              const PromptTemplates& templates, PrefixMode mode,
                              const std::vector<std::string>& roster) {
  std::string best;
  for (const auto& line : split_lines(response)) {
    std::string n = stripped(std::string(line), inst, templates, mode);
    for (const auto& name : roster) {
      if (find_bounded(n, normalize_answer(name)) != std::string::npos) {
        best = n;
        break;
      }
    }
  }
  return best;
}

}  // namespace

std::string prefix_mode_key(PrefixMode mode) {
  return mode == PrefixMode::continuation ? "continuation" : "user_append";
}

PrefixMode prefix_mode_from_key(const std::string& key) {
  if (key == "continuation") return PrefixMode::continuation;
  if (key == "user_append") return PrefixMode::user_append;
  throw Error("unknown prefix mode: " + key);
}

std::string normalize_answer(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  while (!out.empty()) {
    char c = out.back();
    if (c == '.' || c == '!' || c == '?' || c == ',' || c == ';' || c == ':')
      out.pop_back();
    else
      break;
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

bool contains_bounded(const std::string& hay, const std::string& needle) {
  return find_bounded(hay, needle) != std::string::npos;
}

ScoreRecord score_exact(const std::string& response, const TaskInstance& inst,
                        const PromptTemplates& templates, PrefixMode mode) {
  ScoreRecord r = base_record(inst);
  const std::string answer = stripped(first_line(response), inst, templates, mode);
  r.answers = {answer};
  r.pass = contains_bounded(answer, normalize_answer(inst.gold.values.at(0)));
  return r;
}

ScoreRecord score_multi(const std::string& response, const TaskInstance& inst,
                        const PromptTemplates& templates, PrefixMode mode) {
  ScoreRecord r = base_record(inst);
  const std::string answer = stripped(response, inst, templates, mode);
  r.answers = {answer};
  size_t pos = 0;
  r.pass = true;
  for (const auto& gold : inst.gold.values) {
    const std::string g = normalize_answer(gold);
    size_t at = find_bounded(answer, g, pos);
    if (at == std::string::npos) {
      r.pass = false;
      r.notes = "missing or out-of-order: " + gold;
      break;
    }
    pos = at + g.size();
  }
  return r;
}

ScoreRecord score_rank(const std::string& response, const TaskInstance& inst,
                       const PromptTemplates& templates, PrefixMode mode) {
  ScoreRecord r = base_record(inst);
  const std::vector<std::string>& roster = inst.gold.values;
  const std::string line = final_answer_line(response, inst, templates, mode, roster);
  auto hits = extract_names(line, roster);
  for (const auto& h : hits) r.answers.push_back(h.name);
  r.pass = hits.size() == roster.size();
  if (r.pass) {
    for (size_t i = 0; i < roster.size(); ++i)
      if (hits[i].name != roster[i]) {
        r.pass = false;
        break;
      }
  } else {
    r.notes = "named " + std::to_string(hits.size()) + " of " + std::to_string(roster.size());
  }
  return r;
}

ScoreRecord score_twodiff(const std::string& response, const TaskInstance& inst,
                          const PromptTemplates& templates, PrefixMode mode) {
  ScoreRecord r = base_record(inst);
  std::vector<std::string> roster;
  roster.reserve(inst.gold.ages.size());
  for (const auto& [name, age] : inst.gold.ages) roster.push_back(name);
  const std::string line = final_answer_line(response, inst, templates, mode, roster);
  auto hits = extract_names(line, roster);
  for (const auto& h : hits) r.answers.push_back(h.name);
  if (hits.size() != 2) {
    r.notes = "expected two context names, found " + std::to_string(hits.size());
    return r;
  }
  const int a = inst.gold.ages.at(hits[0].name);
  const int b = inst.gold.ages.at(hits[1].name);
  r.pass = std::abs(a - b) == inst.gold.target_diff;
  if (!r.pass)
    r.notes = "named pair differs by " + std::to_string(std::abs(a - b)) + ", not " +
              std::to_string(inst.gold.target_diff);
  return r;
}

ScoreRecord score_citation(const std::string& response, const TaskInstance& inst,
                           const PromptTemplates& templates, PrefixMode mode) {
  ScoreRecord r = base_record(inst);
  r.answers = {stripped(response, inst, templates, mode)};
  for (size_t at = response.find('['); at != std::string::npos; at = response.find('[', at + 1)) {
    size_t close = response.find(']', at + 1);
    if (close == std::string::npos) break;
    const std::string inner = response.substr(at + 1, close - at - 1);
    if (inner.empty() || inner.size() > 9) continue;
    bool digits = true;
    for (char c : inner) digits = digits && std::isdigit(static_cast<unsigned char>(c));
    if (digits) r.citations.insert(std::stoi(inner));
  }
  r.pass = r.citations == inst.gold.citations;
  return r;
}

ScoreRecord score_idk(const std::string& present_response, const std::string& absent_response,
                      const TaskInstance& present, const TaskInstance& absent,
                      const PromptTemplates& templates, PrefixMode mode) {
  ScoreRecord leg = score_exact(present_response, present, templates, mode);
  ScoreRecord r = base_record(present);
  r.id = present.pair_id.empty() ? present.id + "+" + absent.id : present.pair_id;
  r.kind = TaskKind::idk;
  const std::string absent_answer = stripped(absent_response, absent, templates, mode);
  const bool refused =
      contains_bounded(absent_answer, normalize_answer(absent.gold.values.at(0)));
  r.answers = {leg.answers.at(0), absent_answer};
  r.pass = leg.pass && refused;
  if (!leg.pass)
    r.notes = "present half missed the stated value";
  else if (!refused)
    r.notes = "absent half answered instead of refusing";
  return r;
}

ScoreRecord score_response(const std::string& response, const TaskInstance& inst,
                           const PromptTemplates& templates, PrefixMode mode) {
  switch (inst.kind) {
    case TaskKind::standard:
    case TaskKind::paraphrase:
    case TaskKind::pronoun:
    case TaskKind::multihop:
    case TaskKind::calculation:
    case TaskKind::icl:
      return score_exact(response, inst, templates, mode);
    case TaskKind::multi_standard:
      return score_multi(response, inst, templates, mode);
    case TaskKind::rank:
      return score_rank(response, inst, templates, mode);
    case TaskKind::twodiff:
      return score_twodiff(response, inst, templates, mode);
    case TaskKind::citation:
    case TaskKind::citation_multi:
      return score_citation(response, inst, templates, mode);
    case TaskKind::idk:
      throw Error("idk instances are scored as pairs via score_idk");
  }
  throw Error("unknown task kind");
}

std::vector<ScoreRecord> score_suite(const std::vector<TaskInstance>& suite,
                                     const std::map<std::string, std::string>& responses,
                                     const PromptTemplates& templates, PrefixMode mode) {
  std::map<std::string, std::pair<const TaskInstance*, const TaskInstance*>> pairs;
  for (const auto& inst : suite) {
    if (inst.kind != TaskKind::idk) continue;
    if (inst.pair_id.empty()) throw Error("idk instance without pair id: " + inst.id);
    auto& slot = pairs[inst.pair_id];
    (inst.gold.kind == GoldKind::refusal ? slot.second : slot.first) = &inst;
  }

  auto text_of = [&](const TaskInstance& inst) -> const std::string* {
    auto it = responses.find(inst.id);
    return it == responses.end() ? nullptr : &it->second;
  };

  std::vector<ScoreRecord> out;
  out.reserve(suite.size());
  for (const auto& inst : suite) {
    if (inst.kind == TaskKind::idk) {
      const auto& pair = pairs.at(inst.pair_id);
      if (inst.gold.kind == GoldKind::refusal) {
        if (pair.first == nullptr)
          throw Error("idk pair missing its present half: " + inst.pair_id);
        continue;  // scored with its present half
      }
      if (pair.second == nullptr) throw Error("idk pair missing its absent half: " + inst.pair_id);
      const std::string* pr = text_of(*pair.first);
      const std::string* ar = text_of(*pair.second);
      if (pr == nullptr || ar == nullptr) {
        ScoreRecord r = base_record(inst);
        r.id = inst.pair_id;
        r.notes = "no response";
        out.push_back(std::move(r));
        continue;
      }
      out.push_back(score_idk(*pr, *ar, *pair.first, *pair.second, templates, mode));
      continue;
    }
    const std::string* text = text_of(inst);
    if (text == nullptr) {
      ScoreRecord r = base_record(inst);
      r.notes = "no response";
      out.push_back(std::move(r));
      continue;
    }
    out.push_back(score_response(*text, inst, templates, mode));
  }
  return out;
}

HallucinationStats hallucination_rate(std::vector<ScoreRecord>& records,
                                      const std::vector<TaskInstance>& suite) {
  std::map<std::string, const TaskInstance*> by_id;
  for (const auto& inst : suite) by_id[inst.id] = &inst;
  std::map<std::string, std::string> contexts;  // normalized, cached

  HallucinationStats stats;
  for (auto& r : records) {
    if (r.kind != TaskKind::standard && r.kind != TaskKind::paraphrase &&
        r.kind != TaskKind::pronoun)
      continue;
    ++stats.total;
    if (r.pass) continue;
    ++stats.failed;
    auto it = by_id.find(r.id);
    if (it == by_id.end()) throw Error("no instance for scored id: " + r.id);
    auto [cit, inserted] = contexts.try_emplace(r.id);
    if (inserted) cit->second = normalize_answer(it->second->context.text);
    const std::string& answer = r.answers.empty() ? std::string() : r.answers[0];
    if (!answer.empty() && !contains_bounded(cit->second, answer)) {
      r.hallucination = true;
      ++stats.hallucinated;
    }
  }
  if (stats.failed > 0)
    stats.rate = static_cast<double>(stats.hallucinated) / static_cast<double>(stats.failed);
  return stats;
}

std::vector<AggregateRow> aggregate(const std::vector<ScoreRecord>& records) {
  std::map<std::tuple<std::string, long, std::string>, std::pair<int, int>> groups;
  for (const auto& r : records) {
    auto& all = groups[{task_kind_key(r.kind), r.budget, "all"}];
    ++all.first;
    all.second += r.pass ? 1 : 0;
    if (!r.attribute.empty()) {
      auto& attr = groups[{task_kind_key(r.kind), r.budget, r.attribute}];
      ++attr.first;
      attr.second += r.pass ? 1 : 0;
    }
  }
  std::vector<AggregateRow> rows;
  rows.reserve(groups.size());
  for (const auto& [key, counts] : groups) {
    AggregateRow row;
    row.task = std::get<0>(key);
    row.budget = std::get<1>(key);
    row.attribute = std::get<2>(key);
    row.n = counts.first;
    row.passed = counts.second;
    row.accuracy = counts.first ? static_cast<double>(counts.second) / counts.first : 0.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::string out = "task,budget,attribute,n,passed,accuracy\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.4f", r.accuracy);
    out += r.task + "," + std::to_string(r.budget) + "," + r.attribute + "," +
           std::to_string(r.n) + "," + std::to_string(r.passed) + "," + buf + "\n";
  }
  return out;
}

std::vector<GridCell> depth_density_grid(const std::vector<ScoreRecord>& records) {
  std::map<std::pair<double, double>, std::pair<int, int>> cells;
  for (const auto& r : records) {
    if (r.depth < 0.0 || r.density < 0.0) continue;
    auto& cell = cells[{r.depth, r.density}];
    ++cell.first;
    cell.second += r.pass ? 1 : 0;
  }
  std::vector<GridCell> out;
  out.reserve(cells.size());
  for (const auto& [key, counts] : cells) {
    GridCell cell;
    cell.depth = key.first;
    cell.density = key.second;
    cell.n = counts.first;
    cell.passed = counts.second;
    cell.accuracy = counts.first ? static_cast<double>(counts.second) / counts.first : 0.0;
    out.push_back(cell);
  }
  return out;
}

std::string grid_csv(const std::vector<GridCell>& cells) {
  std::string out = "depth,density,accuracy,n\n";
  char buf[96];
  for (const auto& c : cells) {
    std::snprintf(buf, sizeof buf, "%g,%g,%.4f,%d\n", c.depth, c.density, c.accuracy, c.n);
    out += buf;
  }
  return out;
}

namespace {

// continued fraction for the incomplete beta (modified Lentz)
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw Error("incomplete beta did not converge");
}

std::vector<double> average_ranks(const std::vector<double>& v) {
  const size_t n = v.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                    b * std::log1p(-x);
  const double front = std::exp(ln);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

SpearmanResult spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw Error("spearman: length mismatch");
  const size_t n = xs.size();
  if (n < 3) throw Error("spearman: need at least 3 points");

  const std::vector<double> rx = average_ranks(xs);
  const std::vector<double> ry = average_ranks(ys);
  const double mean = (static_cast<double>(n) + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double dx = rx[i] - mean;
    const double dy = ry[i] - mean;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error("spearman: constant input");

  SpearmanResult out;
  out.rho = sxy / std::sqrt(sxx * syy);
  if (out.rho > 1.0) out.rho = 1.0;
  if (out.rho < -1.0) out.rho = -1.0;

  const double df = static_cast<double>(n) - 2.0;
  const double r2 = out.rho * out.rho;
  if (r2 >= 1.0) {
    out.p_value = 0.0;
  } else {
    const double t2 = r2 * df / (1.0 - r2);
    out.p_value = incomplete_beta(df / 2.0, 0.5, df / (df + t2));
  }
  return out;
}

std::string record_to_json(const ScoreRecord& r) {
  json j;
  j["schema"] = "longbio-score/1";
  j["id"] = r.id;
  j["kind"] = task_kind_key(r.kind);
  j["budget"] = r.budget;
  if (!r.attribute.empty()) j["attribute"] = r.attribute;
  j["depth"] = r.depth;
  j["density"] = r.density;
  j["pass"] = r.pass;
  j["answers"] = r.answers;
  if (!r.citations.empty())
    j["citations"] = std::vector<int>(r.citations.begin(), r.citations.end());
  if (r.hallucination) j["hallucination"] = true;
  if (!r.notes.empty()) j["notes"] = r.notes;
  return j.dump();
}

ScoreRecord record_from_json(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(std::string("bad score line: ") + e.what());
  }
  if (j.value("schema", "") != "longbio-score/1")
    throw Error("score line: expected schema longbio-score/1");
  ScoreRecord r;
  r.id = j.at("id").get<std::string>();
  r.kind = task_kind_from_key(j.at("kind").get<std::string>());
  r.budget = j.at("budget").get<long>();
  r.attribute = j.value("attribute", "");
  r.depth = j.value("depth", -1.0);
  r.density = j.value("density", -1.0);
  r.pass = j.at("pass").get<bool>();
  r.answers = j.at("answers").get<std::vector<std::string>>();
  if (j.contains("citations"))
    for (int c : j.at("citations").get<std::vector<int>>()) r.citations.insert(c);
  r.hallucination = j.value("hallucination", false);
  r.notes = j.value("notes", "");
  return r;
}

void write_score_log(const std::string& path, const std::vector<ScoreRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open score log for writing: " + path);
  for (const auto& r : records) out << record_to_json(r) << '\n';
  if (!out) throw Error("failed writing score log: " + path);
}

std::vector<ScoreRecord> read_score_log(const std::string& path) {
  std::vector<ScoreRecord> records;
  for (const auto& line : split_lines(read_file(path))) {
    if (line.empty()) continue;
    records.push_back(record_from_json(line));
  }
  return records;
}

}  // namespace longbio
