#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gestimate/expr.hpp"

namespace gestimate {

struct SubjectRecord {
  std::string id;
  std::vector<double> a;               // A_0..A_K; shorter in survival mode once the subject leaves the risk set
  std::vector<double> y;               // Y_0..Y_{K+1}, NaN where no outcome is declared
  std::vector<std::vector<double>> l;  // l[time][covariate], same length as a
  std::optional<double> event_time;
  std::optional<double> censor_time;
  std::optional<bool> event_observed;
  double weight = 1.0;  // inverse-probability-of-censoring weight when supplied

  // observed follow-up time min(T, C) in survival mode
  double follow_up() const;
};

struct PanelSchema {
  std::string subject = "subject_id";
  std::string time = "time_index";
  std::string treatment = "A";
  std::string outcome = "Y";
  std::vector<std::string> covariates;  // empty: every remaining column
  std::vector<double> time_grid;        // empty: t_k = k
  std::vector<int> outcome_times;       // empty: 1..K+1 (mean mode)
  bool survival = false;
  std::string event_time = "event_time";
  std::string censor_time = "censor_time";
  std::string event_observed = "event_observed";
  std::optional<std::string> weight;
};

struct PanelLayout {
  int K = 0;
  std::vector<double> time_grid;  // t_0..t_{K+1}
  std::vector<std::string> covariate_names;
  std::vector<int> outcome_times;
  bool survival = false;
  bool has_weight = false;
};

class Panel {
 public:
  Panel() = default;
  Panel(PanelLayout layout, std::vector<SubjectRecord> subjects);

  int K() const { return layout_.K; }
  std::size_t n() const { return subjects_.size(); }
  const PanelLayout& layout() const { return layout_; }
  const std::vector<double>& time_grid() const { return layout_.time_grid; }
  const std::vector<std::string>& covariate_names() const { return layout_.covariate_names; }
  const std::vector<int>& outcome_times() const { return layout_.outcome_times; }
  bool survival() const { return layout_.survival; }
  bool is_outcome_time(int k) const;

  const std::vector<SubjectRecord>& subjects() const { return subjects_; }
  const SubjectRecord& subject(std::size_t i) const { return subjects_[i]; }
  std::size_t index_of(std::string_view id) const;

  Symbols symbols() const { return Symbols{layout_.covariate_names}; }
  // distinct treatment values over all subjects and times, sorted
  const std::vector<double>& treatment_levels() const { return levels_; }
  bool binary_treatment() const;

  Panel select(std::span<const std::size_t> rows) const;

 private:
  PanelLayout layout_;
  std::vector<SubjectRecord> subjects_;
  std::vector<double> levels_;
  void index_levels();
};

Panel load_panel(const std::string& path, const PanelSchema& schema);
Panel read_panel(std::istream& in, const PanelSchema& schema);
void write_panel(std::ostream& out, const Panel& panel);
void write_panel(const std::string& path, const Panel& panel);

// (L̄_m, Ā_m) of one subject; reads after t_m throw
class HistoryView : public VariableSource {
 public:
  HistoryView(const Panel& panel, const SubjectRecord& record, int m);

  const std::string& subject_id() const { return rec_->id; }
  int m() const { return m_; }
  const SubjectRecord& record() const { return *rec_; }
  const Panel& panel() const { return *panel_; }

  std::span<const std::vector<double>> lbar() const;
  std::vector<double> abar() const;

  double treatment(int time) const;
  double covariate(int j, int time) const;
  double outcome(int time) const;

  double value(VarKind kind, int covariate, int time) const override;

  // counterfactual reads: override A at one time, or replace the whole treatment path
  HistoryView with_treatment(int time, double a) const;
  HistoryView with_treatments(const double* path) const;
  // hides A_m, as required for features of (L̄_m, Ā_{m-1})
  HistoryView without_current_treatment() const;
  // history along a full counterfactual treatment path; m may run past the subject's follow-up,
  // in which case the last observed covariates are carried forward
  static HistoryView counterfactual(const Panel& panel, const SubjectRecord& record, int m, const double* path);

 private:
  HistoryView() = default;

  const Panel* panel_ = nullptr;
  const SubjectRecord* rec_ = nullptr;
  int m_ = 0;
  int override_time_ = -1;
  double override_value_ = 0.0;
  const double* path_ = nullptr;
  int max_treatment_ = 0;
};

HistoryView history_view(const Panel& panel, std::string_view subject, int m);

class PropensityFit;

struct OverlapBin {
  double lo = 0.0, hi = 0.0;
  std::size_t count = 0;
};

struct OverlapTime {
  int m = 0;
  std::vector<OverlapBin> propensity_histogram;
  std::vector<OverlapBin> variance_histogram;  // Var(A_m | history) = p(1-p)
  std::size_t flagged = 0;
  std::vector<std::string> flagged_subjects;
};

struct OverlapReport {
  double epsilon = 0.01;
  std::vector<OverlapTime> times;
  bool any_flagged() const;
};

OverlapReport summarize_overlap(const Panel& panel, const PropensityFit& propensity, double epsilon = 0.01,
                                int bins = 10);

}  // namespace gestimate
