#include "report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

#include "gestimate/error.hpp"

namespace gestimate::cli {

namespace {

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void emit(std::ostringstream& os, const ordered_json& j, int depth) {
  const std::string pad(2 * depth + 2, ' '), close(2 * depth, ' ');
  switch (j.type()) {
    case ordered_json::value_t::object: {
      if (j.empty()) {
        os << "{}";
        return;
      }
      os << "{\n";
      bool first = true;
      for (const auto& [k, v] : j.items()) {
        if (!first) os << ",\n";
        first = false;
        os << pad << ordered_json(k).dump() << ": ";
        emit(os, v, depth + 1);
      }
      os << "\n" << close << "}";
      return;
    }
    case ordered_json::value_t::array: {
      if (j.empty()) {
        os << "[]";
        return;
      }
      bool scalars = true;
      for (const auto& v : j) scalars = scalars && !v.is_structured();
      if (scalars) {
        os << "[";
        for (std::size_t i = 0; i < j.size(); ++i) {
          if (i) os << ", ";
          emit(os, j[i], depth + 1);
        }
        os << "]";
        return;
      }
      os << "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) os << ",\n";
        os << pad;
        emit(os, j[i], depth + 1);
      }
      os << "\n" << close << "]";
      return;
    }
    case ordered_json::value_t::number_float: {
      double x = j.get<double>();
      os << (std::isfinite(x) ? fmt17(x) : "null");
      return;
    }
    default:
      os << j.dump();
  }
}

double z_of(double level) { return boost::math::quantile(boost::math::normal(), 0.5 + level / 2.0); }

}  // namespace

std::string dump(const ordered_json& j) {
  std::ostringstream os;
  emit(os, j, 0);
  os << "\n";
  return os.str();
}

std::string num(double x) { return std::isnan(x) ? std::string() : fmt17(x); }

ordered_json vec_json(const Eigen::VectorXd& v) {
  ordered_json a = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

ordered_json mat_json(const Eigen::MatrixXd& m) {
  ordered_json a = ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vec_json(m.row(i).transpose()));
  return a;
}

ordered_json result_json(const EstimateResult& r, double level) {
  ordered_json j;
  j["method"] = r.method;
  j["psi_names"] = r.psi_names;
  j["psi"] = vec_json(r.psi);
  Eigen::VectorXd se = r.se();
  j["se"] = vec_json(se);
  const double z = z_of(level);
  j["ci_level"] = level;
  j["ci_lower"] = vec_json(r.psi - z * se);
  j["ci_upper"] = vec_json(r.psi + z * se);
  j["cov"] = mat_json(r.cov);
  j["converged"] = r.converged;
  j["mode"] = mode_name(r.mode);
  j["iterations"] = r.n_iter;
  j["equation_norm"] = r.equation_norm;
  ordered_json metrics = ordered_json::object();
  for (const auto& [k, v] : r.metrics) metrics[k] = v;
  j["metrics"] = metrics;
  j["warnings"] = r.warnings;
  j["notes"] = r.notes;
  return j;
}

ordered_json set_json(const ConfidenceSet& s) {
  ordered_json j;
  j["level"] = s.level;
  j["threshold"] = s.threshold;
  j["grid_points"] = s.grid.size();
  j["accepted_points"] = s.accepted.size();
  if (!s.accepted.empty()) {
    Eigen::VectorXd lo = s.grid[s.accepted.front()], hi = lo;
    for (auto i : s.accepted) {
      lo = lo.cwiseMin(s.grid[i]);
      hi = hi.cwiseMax(s.grid[i]);
    }
    j["accepted_lower"] = vec_json(lo);
    j["accepted_upper"] = vec_json(hi);
  }
  return j;
}

ordered_json overlap_json(const OverlapReport& o) {
  ordered_json j;
  j["epsilon"] = o.epsilon;
  j["any_flagged"] = o.any_flagged();
  ordered_json times = ordered_json::array();
  for (const auto& t : o.times) {
    ordered_json tj;
    tj["m"] = t.m;
    tj["flagged"] = t.flagged;
    tj["flagged_subjects"] = t.flagged_subjects;
    auto hist = [](const std::vector<OverlapBin>& bins) {
      ordered_json a = ordered_json::array();
      for (const auto& b : bins) a.push_back(ordered_json{{"lo", b.lo}, {"hi", b.hi}, {"count", b.count}});
      return a;
    };
    tj["propensity_histogram"] = hist(t.propensity_histogram);
    tj["variance_histogram"] = hist(t.variance_histogram);
    times.push_back(tj);
  }
  j["times"] = times;
  return j;
}

ordered_json mc_json(const MCSummary& s) {
  ordered_json j;
  j["scenario"] = s.scenario;
  j["n"] = s.n;
  j["reps"] = s.reps;
  j["seed"] = s.seed;
  ordered_json rows = ordered_json::array();
  for (const auto& r : s.rows)
    rows.push_back(ordered_json{{"estimator", r.estimator},
                                {"parameter", r.parameter},
                                {"truth", r.truth},
                                {"mean", r.mean},
                                {"bias", r.bias},
                                {"sd", r.sd},
                                {"se_mc", r.se_mc},
                                {"mean_se", r.mean_se},
                                {"coverage", r.coverage},
                                {"rejection", r.rejection},
                                {"reps", r.reps},
                                {"failures", r.failures}});
  j["rows"] = rows;
  return j;
}

std::string estimates_csv(const EstimateResult& r, double level) {
  std::ostringstream os;
  os << "parameter,estimate,se,ci_lower,ci_upper\n";
  Eigen::VectorXd se = r.se();
  const double z = z_of(level);
  for (Eigen::Index j = 0; j < r.psi.size(); ++j) {
    std::string name = j < static_cast<Eigen::Index>(r.psi_names.size()) ? r.psi_names[j] : "psi" + std::to_string(j);
    os << name << ',' << num(r.psi[j]) << ',' << num(se[j]) << ',' << num(r.psi[j] - z * se[j]) << ','
       << num(r.psi[j] + z * se[j]) << '\n';
  }
  return os.str();
}

std::string set_csv(const ConfidenceSet& s, const std::vector<std::string>& names) {
  std::ostringstream os;
  for (const auto& n : names) os << n << ',';
  os << "statistic,accepted";
  if (!s.artificial_censoring.empty()) os << ",artificially_censored";
  os << '\n';
  std::vector<char> acc(s.grid.size(), 0);
  for (auto i : s.accepted) acc[i] = 1;
  for (std::size_t i = 0; i < s.grid.size(); ++i) {
    for (Eigen::Index j = 0; j < s.grid[i].size(); ++j) os << num(s.grid[i][j]) << ',';
    os << num(s.statistic[i]) << ',' << int(acc[i]);
    if (!s.artificial_censoring.empty()) os << ',' << s.artificial_censoring[i];
    os << '\n';
  }
  return os.str();
}

std::string mc_csv(const MCSummary& s) {
  std::ostringstream os;
  os << "estimator,parameter,truth,mean,bias,sd,se_mc,mean_se,coverage,rejection,reps,failures\n";
  for (const auto& r : s.rows)
    os << r.estimator << ',' << r.parameter << ',' << num(r.truth) << ',' << num(r.mean) << ',' << num(r.bias) << ','
       << num(r.sd) << ',' << num(r.se_mc) << ',' << num(r.mean_se) << ',' << num(r.coverage) << ','
       << num(r.rejection) << ',' << r.reps << ',' << r.failures << '\n';
  return os.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << content;
  if (!out) throw DataError("failed writing '" + path + "'");
}

}  // namespace gestimate::cli
