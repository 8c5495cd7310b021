#include "asof/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <tuple>

#include "asof/error.hpp"

namespace asof {

using nlohmann::json;

bool is_perfect(double score) { return std::abs(score - 1.0) <= kPerfectTolerance; }

namespace {

std::string fmt(const char* f, double v) {
  if (std::isnan(v)) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::map<std::string, const QAPair*> index_dataset(const std::vector<QAPair>& dataset) {
  std::map<std::string, const QAPair*> out;
  for (const auto& p : dataset) out[p.id] = &p;
  return out;
}

/// Setting labels sort by kind first so tables list vanilla, web, rag.
std::pair<int, std::string> setting_order(const Setting& s) { return {static_cast<int>(s.kind), s.label()}; }

/// Pads every column to its widest cell; first `left` columns left-aligned.
std::string align(const std::vector<std::vector<std::string>>& rows, std::size_t left) {
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    if (width.size() < r.size()) width.resize(r.size(), 0);
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  }
  std::string out;
  for (std::size_t ri = 0; ri < rows.size(); ++ri) {
    const auto& r = rows[ri];
    std::string line;
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) line += "  ";
      std::string pad(width[i] - r[i].size(), ' ');
      line += i < left ? r[i] + pad : pad + r[i];
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
    if (ri == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
    }
  }
  return out;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string csv_line(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += csv_escape(cells[i]);
  }
  return out + "\n";
}

double mean_or_nan(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

}  // namespace

MetricTable aggregate_metrics(const std::vector<RunRecord>& records, const std::vector<QAPair>& dataset) {
  auto by_id = index_dataset(dataset);
  using Key = std::tuple<std::string, QACategory, std::pair<int, std::string>>;
  std::map<Key, MetricRow> cells;
  std::map<Key, std::array<double, 4>> sums;
  MetricTable table;
  for (const auto& r : records) {
    if (r.error) {
      ++table.excluded_errors;
      continue;
    }
    auto q = by_id.find(r.qa_id);
    if (q == by_id.end()) {
      ++table.unknown_questions;
      continue;
    }
    Key key{r.model_id, q->second->category, setting_order(r.setting)};
    auto& row = cells[key];
    if (row.n == 0) {
      row.model_id = r.model_id;
      row.category = q->second->category;
      row.setting = r.setting.label();
      row.kind = r.setting.kind;
    }
    ++row.n;
    if (r.refusal) ++row.refusals;
    if (r.scores) {
      ++row.scored;
      for (std::size_t c = 0; c < 4; ++c) {
        double v = r.scores->get(kAllCriteria[c]);
        sums[key][c] += v;
        if (is_perfect(v)) ++row.perfect[c];
      }
    }
  }
  for (auto& [key, row] : cells) {
    for (std::size_t c = 0; c < 4; ++c) {
      row.percent[c] = 100.0 * static_cast<double>(row.perfect[c]) / static_cast<double>(row.n);
      row.mean[c] = row.scored ? sums[key][c] / static_cast<double>(row.scored) : std::numeric_limits<double>::quiet_NaN();
    }
    table.rows.push_back(row);
  }
  return table;
}

MetricTable perfect_score_table(const std::vector<RunRecord>& records, const std::vector<QAPair>& dataset) {
  return aggregate_metrics(records, dataset);
}

MetricTable metric_means(const std::vector<RunRecord>& records, const std::vector<QAPair>& dataset) {
  return aggregate_metrics(records, dataset);
}

std::string format_percent(double pct) { return fmt("%.2f", pct); }

std::string render_perfect_text(const MetricTable& t) {
  std::vector<std::vector<std::string>> rows = {{"Model", "Category", "Setting", "CO %", "R %", "LB %", "V %", "RC", "n"}};
  for (const auto& r : t.rows) {
    rows.push_back({r.model_id, std::string(to_string(r.category)), r.setting, format_percent(r.percent[0]),
                    format_percent(r.percent[1]), format_percent(r.percent[2]), format_percent(r.percent[3]),
                    std::to_string(r.refusals), std::to_string(r.n)});
  }
  return align(rows, 3);
}

std::string render_perfect_csv(const MetricTable& t) {
  std::string out = csv_line({"model", "category", "setting", "CO", "R", "LB", "V", "RC", "n"});
  for (const auto& r : t.rows) {
    out += csv_line({r.model_id, std::string(to_string(r.category)), r.setting, format_percent(r.percent[0]),
                     format_percent(r.percent[1]), format_percent(r.percent[2]), format_percent(r.percent[3]),
                     std::to_string(r.refusals), std::to_string(r.n)});
  }
  return out;
}

std::string render_means_text(const MetricTable& t) {
  std::vector<std::vector<std::string>> rows = {{"Model", "Category", "Setting", "CO", "R", "LB", "V", "scored"}};
  for (const auto& r : t.rows) {
    rows.push_back({r.model_id, std::string(to_string(r.category)), r.setting, fmt("%.4f", r.mean[0]),
                    fmt("%.4f", r.mean[1]), fmt("%.4f", r.mean[2]), fmt("%.4f", r.mean[3]), std::to_string(r.scored)});
  }
  return align(rows, 3);
}

std::string render_means_csv(const MetricTable& t) {
  std::string out = csv_line({"model", "category", "setting", "outcome", "reasoning", "basis", "version", "scored"});
  for (const auto& r : t.rows) {
    out += csv_line({r.model_id, std::string(to_string(r.category)), r.setting, fmt("%.4f", r.mean[0]),
                     fmt("%.4f", r.mean[1]), fmt("%.4f", r.mean[2]), fmt("%.4f", r.mean[3]),
                     std::to_string(r.scored)});
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

/// Continued fraction for I_x(a, b), valid for x < (a + 1) / (a + b + 2).
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 100000;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  fail(ErrorCode::kDomainError, "incomplete beta continued fraction did not converge");
}

}  // namespace

namespace {

/// I_x(a, b) with y = 1 - x supplied by the caller so that neither tail
/// loses digits to cancellation.
double ibeta(double a, double b, double x, double y) {
  if (x == 0.0) return 0.0;
  if (y == 0.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log(y);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, y) / b;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b))
    fail(ErrorCode::kDomainError, "incomplete beta needs a, b > 0");
  if (!(x >= 0.0 && x <= 1.0)) fail(ErrorCode::kDomainError, "incomplete beta needs 0 <= x <= 1");
  return ibeta(a, b, x, 1.0 - x);
}

double student_t_sf(double t, double df) {
  if (!(df > 0.0) || std::isnan(df)) fail(ErrorCode::kDomainError, "student_t_sf needs df > 0");
  if (std::isnan(t)) fail(ErrorCode::kDomainError, "student_t_sf got NaN");
  if (std::isinf(t)) return 0.0;
  if (t == 0.0) return 1.0;
  const double t2 = t * t;
  const double x = df / (df + t2);
  const double y = t2 / (df + t2);
  return std::clamp(ibeta(df / 2.0, 0.5, x, y), 0.0, 1.0);
}

WelchResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) fail(ErrorCode::kDegenerateInput, "welch_t_test needs at least two values per group");
  auto moments = [](const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::pair{m, ss / (v.size() - 1)};
  };
  WelchResult w;
  w.n1 = a.size();
  w.n2 = b.size();
  std::tie(w.mean1, w.var1) = moments(a);
  std::tie(w.mean2, w.var2) = moments(b);
  if (!std::isfinite(w.var1) || !std::isfinite(w.var2)) fail(ErrorCode::kDegenerateInput, "non-finite variance");
  if (w.var1 == 0.0 && w.var2 == 0.0) fail(ErrorCode::kDegenerateInput, "both groups have zero variance");
  const double s1 = w.var1 / w.n1, s2 = w.var2 / w.n2;
  w.t = (w.mean1 - w.mean2) / std::sqrt(s1 + s2);
  w.df = (s1 + s2) * (s1 + s2) / (s1 * s1 / (w.n1 - 1) + s2 * s2 / (w.n2 - 1));
  w.p_two_sided = student_t_sf(w.t, w.df);
  return w;
}

void to_json(json& j, const WelchResult& w) {
  j = json{{"t", w.t},         {"df", w.df},   {"p_two_sided", w.p_two_sided},
           {"mean1", w.mean1}, {"mean2", w.mean2}, {"var1", w.var1},
           {"var2", w.var2},   {"n1", w.n1},   {"n2", w.n2}};
}

namespace {

Comparison compare(std::string model, std::string scope, std::string a_name, std::string b_name, Criterion c,
                   const std::vector<double>& a, const std::vector<double>& b) {
  Comparison cmp;
  cmp.model_id = std::move(model);
  cmp.scope = std::move(scope);
  cmp.group_a = std::move(a_name);
  cmp.group_b = std::move(b_name);
  cmp.criterion = c;
  try {
    cmp.result = welch_t_test(a, b);
  } catch (const Error& e) {
    cmp.note = e.what();
  }
  return cmp;
}

}  // namespace

std::vector<Comparison> setting_comparisons(const std::vector<RunRecord>& records, const std::vector<QAPair>& dataset,
                                            std::optional<QACategory> category) {
  auto by_id = index_dataset(dataset);
  // model -> setting -> criterion scores
  std::map<std::string, std::map<std::pair<int, std::string>, std::array<std::vector<double>, 4>>> samples;
  for (const auto& r : records) {
    if (r.error || !r.scores) continue;
    auto q = by_id.find(r.qa_id);
    if (q == by_id.end()) continue;
    if (category && q->second->category != *category) continue;
    auto& cell = samples[r.model_id][setting_order(r.setting)];
    for (std::size_t c = 0; c < 4; ++c) cell[c].push_back(r.scores->get(kAllCriteria[c]));
  }
  std::string scope = category ? std::string(to_string(*category)) : "all";
  std::vector<Comparison> out;
  for (const auto& [model, settings] : samples) {
    for (auto i = settings.begin(); i != settings.end(); ++i) {
      for (auto k = std::next(i); k != settings.end(); ++k) {
        for (std::size_t c = 0; c < 4; ++c)
          out.push_back(compare(model, scope, i->first.second, k->first.second, kAllCriteria[c], i->second[c],
                                k->second[c]));
      }
    }
  }
  return out;
}

std::vector<Comparison> category_comparisons(const std::vector<RunRecord>& records, const std::vector<QAPair>& dataset,
                                             QACategory a, QACategory b) {
  auto by_id = index_dataset(dataset);
  std::map<std::pair<std::string, std::pair<int, std::string>>, std::array<std::array<std::vector<double>, 4>, 2>> samples;
  for (const auto& r : records) {
    if (r.error || !r.scores) continue;
    auto q = by_id.find(r.qa_id);
    if (q == by_id.end()) continue;
    int side = q->second->category == a ? 0 : q->second->category == b ? 1 : -1;
    if (side < 0) continue;
    auto& cell = samples[{r.model_id, setting_order(r.setting)}][side];
    for (std::size_t c = 0; c < 4; ++c) cell[c].push_back(r.scores->get(kAllCriteria[c]));
  }
  std::vector<Comparison> out;
  for (const auto& [key, sides] : samples) {
    for (std::size_t c = 0; c < 4; ++c)
      out.push_back(compare(key.first, key.second.second, std::string(to_string(a)), std::string(to_string(b)),
                            kAllCriteria[c], sides[0][c], sides[1][c]));
  }
  return out;
}

std::string render_comparisons_text(const std::vector<Comparison>& cs) {
  std::vector<std::vector<std::string>> rows = {
      {"Model", "Scope", "A", "B", "Metric", "mean A", "mean B", "t", "df", "p", ""}};
  for (const auto& c : cs) {
    if (c.result) {
      const auto& w = *c.result;
      rows.push_back({c.model_id, c.scope, c.group_a, c.group_b, std::string(column_label(c.criterion)),
                      fmt("%.4f", w.mean1), fmt("%.4f", w.mean2), fmt("%.4f", w.t), fmt("%.3f", w.df),
                      fmt("%.4f", w.p_two_sided), c.significant() ? "*" : ""});
    } else {
      rows.push_back({c.model_id, c.scope, c.group_a, c.group_b, std::string(column_label(c.criterion)), "-", "-", "-",
                      "-", "-", c.note});
    }
  }
  return align(rows, 5) + "samples are per-question criterion scores; * marks p < 0.05\n";
}

std::string render_comparisons_csv(const std::vector<Comparison>& cs) {
  std::string out = csv_line({"model", "scope", "group_a", "group_b", "criterion", "mean_a", "mean_b", "n_a", "n_b",
                              "t", "df", "p_two_sided", "significant", "note"});
  for (const auto& c : cs) {
    if (c.result) {
      const auto& w = *c.result;
      out += csv_line({c.model_id, c.scope, c.group_a, c.group_b, std::string(to_string(c.criterion)),
                       fmt("%.6f", w.mean1), fmt("%.6f", w.mean2), std::to_string(w.n1), std::to_string(w.n2),
                       fmt("%.6f", w.t), fmt("%.6f", w.df), fmt("%.6g", w.p_two_sided),
                       c.significant() ? "1" : "0", ""});
    } else {
      out += csv_line({c.model_id, c.scope, c.group_a, c.group_b, std::string(to_string(c.criterion)), "", "", "", "",
                       "", "", "", "0", c.note});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

Date default_recency_midpoint() { return *Date::from_ymd(2014, 10, 30); }

int recency_interval(Date fact_date, Date midpoint) { return fact_date < midpoint ? 1 : 2; }

RecencyReport recency_split(const std::vector<RunRecord>& records, const std::vector<QAPair>& dataset, Date midpoint,
                            std::vector<QACategory> categories) {
  auto by_id = index_dataset(dataset);
  RecencyReport rep;
  rep.midpoint = midpoint;
  using Key = std::tuple<std::string, std::pair<int, std::string>, std::size_t>;
  std::map<Key, std::array<std::vector<double>, 2>> samples;
  for (const auto& r : records) {
    if (r.error || !r.scores) continue;
    auto q = by_id.find(r.qa_id);
    if (q == by_id.end()) continue;
    if (!categories.empty() &&
        std::find(categories.begin(), categories.end(), q->second->category) == categories.end())
      continue;
    int side = recency_interval(q->second->fact_date, midpoint);
    ++rep.n;
    (side == 1 ? rep.interval1 : rep.interval2)++;
    for (std::size_t c = 0; c < 4; ++c)
      samples[{r.model_id, setting_order(r.setting), c}][side - 1].push_back(r.scores->get(kAllCriteria[c]));
  }
  for (const auto& [key, sides] : samples) {
    RecencyCell cell;
    cell.model_id = std::get<0>(key);
    cell.setting = std::get<1>(key).second;
    cell.criterion = kAllCriteria[std::get<2>(key)];
    cell.n1 = sides[0].size();
    cell.n2 = sides[1].size();
    cell.mean1 = mean_or_nan(sides[0]);
    cell.mean2 = mean_or_nan(sides[1]);
    cell.delta = cell.mean2 - cell.mean1;
    try {
      cell.welch = welch_t_test(sides[0], sides[1]);
    } catch (const Error& e) {
      cell.note = e.what();
    }
    rep.cells.push_back(std::move(cell));
  }
  return rep;
}

std::string render_recency_text(const RecencyReport& r) {
  std::string head = "midpoint " + r.midpoint.iso() + ": interval 1 (before) n=" + std::to_string(r.interval1) +
                     ", interval 2 (on or after) n=" + std::to_string(r.interval2) + ", total n=" +
                     std::to_string(r.n) + "\n";
  std::vector<std::vector<std::string>> rows = {
      {"Model", "Setting", "Metric", "n1", "n2", "mean1", "mean2", "delta", "t", "df", "p", ""}};
  for (const auto& c : r.cells) {
    bool sig = c.welch && c.welch->p_two_sided < kSignificanceLevel;
    rows.push_back({c.model_id, c.setting, std::string(column_label(c.criterion)), std::to_string(c.n1),
                    std::to_string(c.n2), fmt("%.4f", c.mean1), fmt("%.4f", c.mean2), fmt("%+.4f", c.delta),
                    c.welch ? fmt("%.4f", c.welch->t) : "-", c.welch ? fmt("%.3f", c.welch->df) : "-",
                    c.welch ? fmt("%.4f", c.welch->p_two_sided) : "-", sig ? "*" : ""});
  }
  return head + align(rows, 3);
}

std::string render_recency_csv(const RecencyReport& r) {
  std::string out = csv_line({"model", "setting", "criterion", "n1", "n2", "mean1", "mean2", "delta", "t", "df",
                              "p_two_sided", "midpoint"});
  for (const auto& c : r.cells) {
    out += csv_line({c.model_id, c.setting, std::string(to_string(c.criterion)), std::to_string(c.n1),
                     std::to_string(c.n2), fmt("%.6f", c.mean1), fmt("%.6f", c.mean2), fmt("%.6f", c.delta),
                     c.welch ? fmt("%.6f", c.welch->t) : "", c.welch ? fmt("%.6f", c.welch->df) : "",
                     c.welch ? fmt("%.6g", c.welch->p_two_sided) : "", r.midpoint.iso()});
  }
  return out;
}

// ---------------------------------------------------------------------------

DuplicateReport duplicate_consistency(const std::vector<RunRecord>& records, const std::vector<QAPair>& dataset) {
  auto by_id = index_dataset(dataset);
  using Key = std::tuple<std::string, std::string, std::pair<int, std::string>, std::size_t>;
  std::map<Key, std::vector<double>> scores;
  std::set<std::string> groups;
  for (const auto& r : records) {
    if (r.error || !r.scores) continue;
    auto q = by_id.find(r.qa_id);
    if (q == by_id.end() || !q->second->duplicate_group) continue;
    for (std::size_t c = 0; c < 4; ++c)
      scores[{*q->second->duplicate_group, r.model_id, setting_order(r.setting), c}].push_back(
          r.scores->get(kAllCriteria[c]));
  }
  DuplicateReport rep;
  double total = 0.0;
  for (const auto& [key, v] : scores) {
    if (v.size() < 2) continue;
    auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    SpreadEntry e;
    e.group = std::get<0>(key);
    e.model_id = std::get<1>(key);
    e.setting = std::get<2>(key).second;
    e.criterion = kAllCriteria[std::get<3>(key)];
    e.members = v.size();
    e.spread = *hi - *lo;
    groups.insert(e.group);
    total += e.spread;
    rep.max_spread = std::max(rep.max_spread, e.spread);
    if (e.spread == 0.0) ++rep.zero_spread;
    rep.entries.push_back(std::move(e));
  }
  rep.groups = groups.size();
  rep.mean_spread = rep.entries.empty() ? 0.0 : total / rep.entries.size();
  return rep;
}

std::string render_duplicates_text(const DuplicateReport& r) {
  std::vector<std::vector<std::string>> rows = {{"Group", "Model", "Setting", "Metric", "members", "spread"}};
  for (const auto& e : r.entries) {
    rows.push_back({e.group, e.model_id, e.setting, std::string(column_label(e.criterion)), std::to_string(e.members),
                    fmt("%.4f", e.spread)});
  }
  return align(rows, 4) + "groups=" + std::to_string(r.groups) + " cells=" + std::to_string(r.entries.size()) +
         " zero_spread=" + std::to_string(r.zero_spread) + " mean_spread=" + fmt("%.4f", r.mean_spread) +
         " max_spread=" + fmt("%.4f", r.max_spread) + "\n";
}

std::string render_duplicates_csv(const DuplicateReport& r) {
  std::string out = csv_line({"group", "model", "setting", "criterion", "members", "spread"});
  for (const auto& e : r.entries) {
    out += csv_line({e.group, e.model_id, e.setting, std::string(to_string(e.criterion)), std::to_string(e.members),
                     fmt("%.6f", e.spread)});
  }
  return out;
}

}  // namespace asof
