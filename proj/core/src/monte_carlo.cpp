#include <cmath>
#include <limits>
#include <sstream>

#include "gestimate/error.hpp"
#include "gestimate/rng.hpp"
#include "gestimate/sim.hpp"

namespace gestimate {

using Eigen::VectorXd;

const MCRow& MCSummary::row(const std::string& estimator, std::size_t j) const {
  std::size_t seen = 0;
  for (const auto& r : rows)
    if (r.estimator == estimator && seen++ == j) return r;
  throw ConfigError("no Monte Carlo row for estimator '" + estimator + "' parameter " + std::to_string(j));
}

MCSummary monte_carlo(const Scenario& scenario, const std::vector<EstimatorSpec>& estimators, std::size_t n, int reps,
                      std::uint64_t seed, int jobs) {
  if (reps < 2) throw ConfigError("Monte Carlo needs at least 2 replications");
  if (estimators.empty()) throw ConfigError("Monte Carlo needs at least one estimator");
  const std::size_t ne = estimators.size();
  MCSummary s;
  s.scenario = scenario.name;
  s.n = n;
  s.reps = reps;
  s.seed = seed;
  s.rep_seeds.resize(reps);
  for (int r = 0; r < reps; ++r) s.rep_seeds[r] = derive_seed(seed, {static_cast<std::uint64_t>(r)});
  s.estimates.assign(ne, std::vector<VectorXd>(reps));
  s.std_errors.assign(ne, std::vector<VectorXd>(reps));
  s.errors.assign(ne, std::vector<std::string>(reps));

  parallel_for(reps, jobs, [&](std::size_t r) {
    Generated g = generate(scenario, n, s.rep_seeds[r]);
    for (std::size_t e = 0; e < ne; ++e) {
      try {
        EstimateResult res = estimators[e].run(g);
        if (!res.psi.allFinite()) throw NumericalError("non-finite estimate");
        s.estimates[e][r] = res.psi;
        s.std_errors[e][r] = res.se();
      } catch (const Error& ex) {
        s.errors[e][r] = ex.what();
      }
    }
  });

  const double z = 1.959964;
  for (std::size_t e = 0; e < ne; ++e) {
    const auto& spec = estimators[e];
    VectorXd truth = spec.truth.size() ? spec.truth : scenario.psi;
    int failures = 0;
    for (int r = 0; r < reps; ++r) failures += s.estimates[e][r].size() == 0;
    if (failures * 10 > reps) {
      std::ostringstream msg;
      msg << "estimator " << spec.name << " failed in " << failures << " of " << reps << " replications";
      for (int r = 0; r < reps; ++r)
        if (!s.errors[e][r].empty()) {
          msg << "; first failure (replication " << r << ", seed " << s.rep_seeds[r] << "): " << s.errors[e][r];
          break;
        }
      throw NumericalError(msg.str());
    }
    for (Eigen::Index j = 0; j < truth.size(); ++j) {
      MCRow row;
      row.estimator = spec.name;
      row.parameter = truth.size() == static_cast<Eigen::Index>(scenario.psi_names.size()) ? scenario.psi_names[j]
                                                                                            : "psi" + std::to_string(j);
      row.truth = truth[j];
      row.reps = reps - failures;
      row.failures = failures;
      double sum = 0.0, sum_se = 0.0;
      int cover = 0, reject = 0, m = 0, m_se = 0;
      for (int r = 0; r < reps; ++r) {
        const VectorXd& est = s.estimates[e][r];
        if (est.size() == 0) continue;
        if (j >= est.size()) throw ConfigError("estimator " + spec.name + " returned fewer parameters than its truth");
        sum += est[j];
        ++m;
        const VectorXd& se = s.std_errors[e][r];
        if (j < se.size() && std::isfinite(se[j])) {
          sum_se += se[j];
          ++m_se;
          cover += std::abs(est[j] - truth[j]) <= z * se[j];
          reject += std::abs(est[j]) > z * se[j];
        }
      }
      row.mean = sum / m;
      row.bias = row.mean - row.truth;
      double ss = 0.0;
      for (int r = 0; r < reps; ++r)
        if (s.estimates[e][r].size()) ss += std::pow(s.estimates[e][r][j] - row.mean, 2);
      row.sd = m > 1 ? std::sqrt(ss / (m - 1.0)) : std::numeric_limits<double>::quiet_NaN();
      row.se_mc = row.sd / std::sqrt(double(m));
      const double nan_v = std::numeric_limits<double>::quiet_NaN();
      row.mean_se = m_se ? sum_se / m_se : nan_v;
      row.coverage = m_se ? double(cover) / m_se : nan_v;
      row.rejection = m_se ? double(reject) / m_se : nan_v;
      s.rows.push_back(row);
    }
  }
  return s;
}

}  // namespace gestimate
