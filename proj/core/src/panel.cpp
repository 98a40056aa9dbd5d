#include "gestimate/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "gestimate/error.hpp"
#include "gestimate/nuisance.hpp"

namespace gestimate {

namespace {

constexpr double nan_v = std::numeric_limits<double>::quiet_NaN();

std::string fmt_num(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan" || cell == "NULL";
}

std::optional<double> parse_cell(const std::string& cell, std::size_t line, const std::string& column) {
  if (is_missing(cell)) return std::nullopt;
  double v = 0.0;
  const char* first = cell.data();
  if (*first == '+') ++first;
  auto res = std::from_chars(first, cell.data() + cell.size(), v);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
    throw DataError("non-numeric cell '" + cell + "' in column '" + column + "' at line " + std::to_string(line));
  return v;
}

bool reserved_name(const std::string& s) { return s == "A" || s == "Y" || s == "t" || s == "m" || s == "k"; }

struct RawRow {
  std::size_t line = 0;
  std::vector<std::optional<double>> cells;  // indexed by header position
};

}  // namespace

double SubjectRecord::follow_up() const {
  if (event_observed.value_or(false) && event_time) return *event_time;
  return censor_time.value_or(std::numeric_limits<double>::infinity());
}

Panel::Panel(PanelLayout layout, std::vector<SubjectRecord> subjects)
    : layout_(std::move(layout)), subjects_(std::move(subjects)) {
  const int K = layout_.K;
  if (K < 0) throw DataError("panel needs K >= 0");
  if (layout_.time_grid.empty())
    for (int k = 0; k <= K + 1; ++k) layout_.time_grid.push_back(k);
  if (layout_.survival && static_cast<int>(layout_.time_grid.size()) == K + 1)
    layout_.time_grid.push_back(layout_.time_grid.back() + 1.0);
  if (static_cast<int>(layout_.time_grid.size()) != K + 2)
    throw DataError("time grid must list t_0..t_{K+1} (" + std::to_string(K + 2) + " values)");
  for (std::size_t j = 1; j < layout_.time_grid.size(); ++j)
    if (!(layout_.time_grid[j] > layout_.time_grid[j - 1])) throw DataError("time grid must be strictly increasing");
  if (!layout_.survival && layout_.outcome_times.empty())
    for (int k = 1; k <= K + 1; ++k) layout_.outcome_times.push_back(k);
  std::sort(layout_.outcome_times.begin(), layout_.outcome_times.end());
  layout_.outcome_times.erase(std::unique(layout_.outcome_times.begin(), layout_.outcome_times.end()),
                              layout_.outcome_times.end());
  for (int k : layout_.outcome_times)
    if (k < 1 || k > K + 1) throw DataError("outcome time " + std::to_string(k) + " outside 1..K+1");
  for (const auto& c : layout_.covariate_names)
    if (reserved_name(c)) throw DataError("covariate name '" + c + "' is reserved");

  const std::size_t p = layout_.covariate_names.size();
  for (auto& s : subjects_) {
    if (s.y.empty()) s.y.assign(K + 2, nan_v);
    if (static_cast<int>(s.y.size()) != K + 2) throw DataError("subject " + s.id + ": outcome vector length");
    if (s.l.size() != s.a.size()) throw DataError("subject " + s.id + ": covariate and treatment lengths differ");
    for (const auto& lk : s.l)
      if (lk.size() != p) throw DataError("subject " + s.id + ": covariate vector length");
    for (double a : s.a)
      if (!std::isfinite(a)) throw DataError("missing analysis value: treatment of subject " + s.id);
    for (const auto& lk : s.l)
      for (double v : lk)
        if (!std::isfinite(v)) throw DataError("missing analysis value: covariate of subject " + s.id);
    if (!(s.weight > 0.0) || !std::isfinite(s.weight)) throw DataError("subject " + s.id + ": weight must be positive");
    if (layout_.survival) {
      if (!s.censor_time || !std::isfinite(*s.censor_time))
        throw DataError("subject " + s.id + ": survival mode requires a finite censor_time");
      if (!s.event_observed) throw DataError("missing analysis value: event_observed of subject " + s.id);
      if (*s.event_observed) {
        if (!s.event_time || !std::isfinite(*s.event_time))
          throw DataError("missing analysis value: event_time of subject " + s.id);
        if (*s.event_time > *s.censor_time)
          throw DataError("subject " + s.id + ": observed event after its censor_time");
      } else {
        s.event_time.reset();
      }
      double f = s.follow_up();
      int need = 0;
      while (need <= K && layout_.time_grid[need] < f) ++need;
      if (need == 0) throw DataError("subject " + s.id + ": follow-up ends before t_0");
      if (static_cast<int>(s.a.size()) < need)
        throw DataError("ragged time grid: subject " + s.id + " lacks time index " + std::to_string(s.a.size()));
      s.a.resize(need);
      s.l.resize(need);
    } else {
      if (static_cast<int>(s.a.size()) != K + 1)
        throw DataError("ragged time grid: subject " + s.id + " has " + std::to_string(s.a.size()) +
                        " treatment times, expected " + std::to_string(K + 1));
      for (int k : layout_.outcome_times)
        if (!std::isfinite(s.y[k]))
          throw DataError("missing analysis value: Y_" + std::to_string(k) + " of subject " + s.id);
    }
  }
  index_levels();
}

bool Panel::is_outcome_time(int k) const {
  return std::binary_search(layout_.outcome_times.begin(), layout_.outcome_times.end(), k);
}

std::size_t Panel::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < subjects_.size(); ++i)
    if (subjects_[i].id == id) return i;
  throw DataError("unknown subject '" + std::string(id) + "'");
}

void Panel::index_levels() {
  std::set<double> lv;
  for (const auto& s : subjects_) lv.insert(s.a.begin(), s.a.end());
  levels_.assign(lv.begin(), lv.end());
}

bool Panel::binary_treatment() const {
  for (double v : treatment_levels())
    if (v != 0.0 && v != 1.0) return false;
  return true;
}

Panel Panel::select(std::span<const std::size_t> rows) const {
  Panel out;
  out.layout_ = layout_;
  out.subjects_.reserve(rows.size());
  for (std::size_t r : rows) out.subjects_.push_back(subjects_.at(r));
  out.index_levels();
  return out;
}

Panel read_panel(std::istream& in, const PanelSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("panel file is empty");
  auto header = split_csv(line);
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (col.count(header[j])) throw DataError("duplicated column '" + header[j] + "'");
    col[header[j]] = j;
  }
  auto need = [&](const std::string& name) -> std::size_t {
    auto it = col.find(name);
    if (it == col.end()) throw DataError("missing column '" + name + "'");
    return it->second;
  };
  auto maybe = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = col.find(name);
    if (it == col.end()) return std::nullopt;
    return it->second;
  };

  const std::size_t c_subject = need(schema.subject);
  const std::size_t c_time = need(schema.time);
  const std::size_t c_a = need(schema.treatment);
  std::optional<std::size_t> c_y = schema.survival ? maybe(schema.outcome) : std::optional(need(schema.outcome));
  std::optional<std::size_t> c_event, c_censor, c_observed, c_weight;
  if (schema.survival) {
    c_event = need(schema.event_time);
    c_censor = need(schema.censor_time);
    c_observed = need(schema.event_observed);
  }
  if (schema.weight) c_weight = need(*schema.weight);

  std::vector<std::string> cov_names = schema.covariates;
  if (cov_names.empty()) {
    std::set<std::size_t> used{c_subject, c_time, c_a};
    for (auto c : {c_y, c_event, c_censor, c_observed, c_weight})
      if (c) used.insert(*c);
    for (std::size_t j = 0; j < header.size(); ++j)
      if (!used.count(j)) cov_names.push_back(header[j]);
  }
  std::vector<std::size_t> c_cov;
  for (const auto& nm : cov_names) c_cov.push_back(need(nm));

  std::vector<std::string> order;
  std::unordered_map<std::string, std::map<int, RawRow>> rows;
  std::size_t lineno = 1;
  int max_time = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw DataError("line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(header.size()));
    const std::string& id = cells[c_subject];
    if (id.empty()) throw DataError("missing subject id at line " + std::to_string(lineno));
    auto tv = parse_cell(cells[c_time], lineno, schema.time);
    if (!tv || *tv < 0 || std::floor(*tv) != *tv)
      throw DataError("bad time index at line " + std::to_string(lineno));
    int t = static_cast<int>(*tv);
    RawRow r;
    r.line = lineno;
    r.cells.resize(header.size());
    for (std::size_t j = 0; j < header.size(); ++j)
      if (j != c_subject) r.cells[j] = parse_cell(cells[j], lineno, header[j]);
    auto [it, fresh] = rows.try_emplace(id);
    if (fresh) order.push_back(id);
    if (!it->second.emplace(t, std::move(r)).second)
      throw DataError("duplicated (subject, time) pair (" + id + ", " + std::to_string(t) + ")");
    max_time = std::max(max_time, t);
  }
  if (order.empty()) throw DataError("panel has no rows");

  PanelLayout layout;
  layout.survival = schema.survival;
  layout.K = schema.survival ? max_time : max_time - 1;
  if (layout.K < 0) throw DataError("mean-mode panel needs at least time indices 0 and 1");
  layout.time_grid = schema.time_grid;
  layout.covariate_names = cov_names;
  layout.outcome_times = schema.outcome_times;
  layout.has_weight = c_weight.has_value();
  const int K = layout.K;
  std::vector<int> outcome_times = schema.outcome_times;
  if (!schema.survival && outcome_times.empty())
    for (int k = 1; k <= K + 1; ++k) outcome_times.push_back(k);

  std::vector<SubjectRecord> subjects;
  subjects.reserve(order.size());
  for (const auto& id : order) {
    const auto& srows = rows[id];
    SubjectRecord s;
    s.id = id;
    s.y.assign(K + 2, nan_v);
    auto missing = [&](const std::string& what, int t) {
      throw DataError("missing analysis value: " + what + " for subject " + id + " at time " + std::to_string(t));
    };
    auto row0 = srows.find(0);
    if (row0 == srows.end()) throw DataError("ragged time grid: subject " + id + " lacks time index 0");

    int last_time = K;
    if (schema.survival) {
      const auto& c = row0->second.cells;
      if (!c[*c_censor]) missing(schema.censor_time, 0);
      if (!c[*c_observed]) missing(schema.event_observed, 0);
      double obs = *c[*c_observed];
      if (obs != 0.0 && obs != 1.0) throw DataError("event_observed must be 0 or 1 for subject " + id);
      s.censor_time = *c[*c_censor];
      s.event_observed = obs == 1.0;
      if (obs == 1.0) {
        if (!c[*c_event]) missing(schema.event_time, 0);
        s.event_time = *c[*c_event];
      }
      std::vector<double> grid = schema.time_grid;
      if (grid.empty())
        for (int k = 0; k <= K + 1; ++k) grid.push_back(k);
      double f = s.follow_up();
      last_time = -1;
      while (last_time + 1 <= K && last_time + 1 < static_cast<int>(grid.size()) && grid[last_time + 1] < f)
        ++last_time;
    }
    if (c_weight) {
      const auto& w = row0->second.cells[*c_weight];
      if (!w) missing(*schema.weight, 0);
      s.weight = *w;
    }

    const int last_row = schema.survival ? last_time : K + 1;
    for (int t = 0; t <= last_row; ++t) {
      auto it = srows.find(t);
      if (it == srows.end())
        throw DataError("ragged time grid: subject " + id + " lacks time index " + std::to_string(t));
      const auto& c = it->second.cells;
      if (t <= (schema.survival ? last_time : K)) {
        if (!c[c_a]) missing(schema.treatment, t);
        s.a.push_back(*c[c_a]);
        std::vector<double> lk;
        lk.reserve(c_cov.size());
        for (std::size_t j = 0; j < c_cov.size(); ++j) {
          if (!c[c_cov[j]]) missing(cov_names[j], t);
          lk.push_back(*c[c_cov[j]]);
        }
        s.l.push_back(std::move(lk));
      }
      if (c_y && t >= 1 && c[*c_y]) s.y[t] = *c[*c_y];
    }
    if (!schema.survival)
      for (int k : outcome_times)
        if (std::isnan(s.y[k])) missing(schema.outcome, k);
    subjects.push_back(std::move(s));
  }
  return Panel(std::move(layout), std::move(subjects));
}

Panel load_panel(const std::string& path, const PanelSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open panel file '" + path + "'");
  return read_panel(in, schema);
}

void write_panel(std::ostream& out, const Panel& panel) {
  const auto& L = panel.layout();
  out << "subject_id,time_index,A,Y";
  for (const auto& c : L.covariate_names) out << ',' << c;
  if (L.survival) out << ",event_time,censor_time,event_observed";
  if (L.has_weight) out << ",weight";
  out << '\n';
  for (const auto& s : panel.subjects()) {
    const int rows = L.survival ? static_cast<int>(s.a.size()) : L.K + 2;
    for (int t = 0; t < rows; ++t) {
      out << s.id << ',' << t << ',';
      const bool has_a = t < static_cast<int>(s.a.size());
      if (has_a) out << fmt_num(s.a[t]);
      out << ',' << fmt_num(t < static_cast<int>(s.y.size()) ? s.y[t] : nan_v);
      for (std::size_t j = 0; j < L.covariate_names.size(); ++j) out << ',' << (has_a ? fmt_num(s.l[t][j]) : "");
      if (L.survival) {
        if (t == 0)
          out << ',' << (s.event_time ? fmt_num(*s.event_time) : "") << ',' << fmt_num(*s.censor_time) << ','
              << (*s.event_observed ? 1 : 0);
        else
          out << ",,,";
      }
      if (L.has_weight) out << ',' << (t == 0 ? fmt_num(s.weight) : "");
      out << '\n';
    }
  }
}

void write_panel(const std::string& path, const Panel& panel) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write panel file '" + path + "'");
  write_panel(out, panel);
}

HistoryView::HistoryView(const Panel& panel, const SubjectRecord& record, int m)
    : panel_(&panel), rec_(&record), m_(m), max_treatment_(m) {
  if (m < 0 || m > panel.K())
    throw DataError("history index m = " + std::to_string(m) + " outside 0.." + std::to_string(panel.K()));
  if (m >= static_cast<int>(record.a.size()))
    throw DataError("subject " + record.id + " is not at risk at time index " + std::to_string(m));
}

std::span<const std::vector<double>> HistoryView::lbar() const {
  return std::span<const std::vector<double>>(rec_->l.data(), std::min(rec_->l.size(), static_cast<std::size_t>(m_) + 1));
}

std::vector<double> HistoryView::abar() const {
  std::vector<double> out;
  for (int j = 0; j <= max_treatment_; ++j) out.push_back(treatment(j));
  return out;
}

double HistoryView::treatment(int time) const {
  if (time < 0 || time > max_treatment_)
    throw DataError("history at m = " + std::to_string(m_) + " cannot read A[" + std::to_string(time) + "]");
  if (path_) return path_[time];
  if (time == override_time_) return override_value_;
  return rec_->a[time];
}

double HistoryView::covariate(int j, int time) const {
  if (time < 0 || time > m_)
    throw DataError("history at m = " + std::to_string(m_) + " cannot read covariate at time " + std::to_string(time));
  // rows past the subject's last observed time only arise for counterfactual treatment paths;
  // the last observed covariates are carried forward
  const auto& rows = rec_->l;
  return rows[std::min<std::size_t>(time, rows.size() - 1)][j];
}

double HistoryView::outcome(int time) const {
  if (time < 1 || time > m_)
    throw DataError("history at m = " + std::to_string(m_) + " cannot read Y[" + std::to_string(time) + "]");
  double v = rec_->y[time];
  if (std::isnan(v)) throw DataError("Y[" + std::to_string(time) + "] is not a declared outcome time");
  return v;
}

double HistoryView::value(VarKind kind, int cov, int time) const {
  switch (kind) {
    case VarKind::treatment:
      return treatment(time);
    case VarKind::covariate:
      return covariate(cov, time);
    case VarKind::outcome:
      return outcome(time);
    case VarKind::time:
      if (time < 0 || time > panel_->K() + 1) throw DataError("t[" + std::to_string(time) + "] outside the time grid");
      return panel_->time_grid()[time];
  }
  return 0.0;
}

HistoryView HistoryView::with_treatment(int time, double a) const {
  HistoryView h = *this;
  h.override_time_ = time;
  h.override_value_ = a;
  return h;
}

HistoryView HistoryView::with_treatments(const double* path) const {
  HistoryView h = *this;
  h.path_ = path;
  return h;
}

HistoryView HistoryView::without_current_treatment() const {
  HistoryView h = *this;
  h.max_treatment_ = m_ - 1;
  return h;
}

HistoryView HistoryView::counterfactual(const Panel& panel, const SubjectRecord& record, int m, const double* path) {
  if (m < 0 || m > panel.K())
    throw DataError("history index m = " + std::to_string(m) + " outside 0.." + std::to_string(panel.K()));
  HistoryView h;
  h.panel_ = &panel;
  h.rec_ = &record;
  h.m_ = m;
  h.max_treatment_ = m;
  h.path_ = path;
  return h;
}

HistoryView history_view(const Panel& panel, std::string_view subject, int m) {
  return HistoryView(panel, panel.subject(panel.index_of(subject)), m);
}

bool OverlapReport::any_flagged() const {
  for (const auto& t : times)
    if (t.flagged > 0) return true;
  return false;
}

OverlapReport summarize_overlap(const Panel& panel, const PropensityFit& propensity, double epsilon, int bins) {
  OverlapReport rep;
  rep.epsilon = epsilon;
  for (int m = 0; m <= panel.K(); ++m) {
    OverlapTime ot;
    ot.m = m;
    for (int b = 0; b < bins; ++b) {
      ot.propensity_histogram.push_back({double(b) / bins, double(b + 1) / bins, 0});
      ot.variance_histogram.push_back({0.25 * b / bins, 0.25 * (b + 1) / bins, 0});
    }
    bool any = false;
    for (const auto& s : panel.subjects()) {
      if (m >= static_cast<int>(s.a.size())) continue;
      any = true;
      HistoryView h(panel, s, m);
      double p = propensity.predict(h);
      double v = propensity.family() == Family::bernoulli_logit ? p * (1.0 - p) : propensity.variance(m);
      int bp = std::clamp(static_cast<int>(p * bins), 0, bins - 1);
      int bv = std::clamp(static_cast<int>(v / 0.25 * bins), 0, bins - 1);
      ot.propensity_histogram[bp].count++;
      ot.variance_histogram[bv].count++;
      if (p < epsilon || p > 1.0 - epsilon) {
        ot.flagged++;
        ot.flagged_subjects.push_back(s.id);
      }
    }
    if (any) rep.times.push_back(std::move(ot));
  }
  return rep;
}

}  // namespace gestimate
