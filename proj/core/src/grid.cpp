#include <cmath>
#include <limits>
#include <memory>

#include <boost/math/distributions/chi_squared.hpp>

#include "gestimate/error.hpp"
#include "gestimate/gest.hpp"
#include "system.hpp"

namespace gestimate {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace detail {

namespace {

double axis_value(const GridAxis& ax, int i) {
  if (ax.points == 1) return 0.5 * (ax.lo + ax.hi);
  return ax.lo + (ax.hi - ax.lo) * double(i) / double(ax.points - 1);
}

bool better(double t, const VectorXd& psi, double best_t, const VectorXd& best) {
  if (!std::isfinite(t)) return false;
  if (!std::isfinite(best_t) || t < best_t) return true;
  return t == best_t && psi.norm() < best.norm();
}

}  // namespace

std::pair<EstimateResult, ConfidenceSet> run_grid(int p, const GridSpec& grid,
                                                  const std::function<GridPoint(const VectorXd&)>& eval) {
  if (static_cast<int>(grid.axes.size()) != p)
    throw ConfigError("grid has " + std::to_string(grid.axes.size()) + " axes for " + std::to_string(p) +
                      " parameters");
  for (const auto& ax : grid.axes)
    if (ax.points < 1 || !(ax.hi >= ax.lo)) throw ConfigError("grid axis needs lo <= hi and at least one point");
  if (!(grid.level > 0.0 && grid.level < 1.0)) throw ConfigError("grid level must lie in (0, 1)");

  ConfidenceSet cs;
  cs.level = grid.level;
  cs.threshold = boost::math::quantile(boost::math::chi_squared(p), grid.level);

  const double nan = std::numeric_limits<double>::quiet_NaN();
  double best_t = nan;
  VectorXd best = VectorXd::Zero(p);
  auto visit = [&](const VectorXd& psi) {
    GridPoint g = eval(psi);
    cs.grid.push_back(psi);
    cs.statistic.push_back(g.statistic);
    cs.artificial_censoring.push_back(g.artificial);
    if (better(g.statistic, psi, best_t, best)) {
      best_t = g.statistic;
      best = psi;
    }
    return g.statistic;
  };

  int sweeps = 0;
  if (p <= 3) {
    std::vector<int> idx(p, 0);
    while (true) {
      VectorXd psi(p);
      for (int j = 0; j < p; ++j) psi[j] = axis_value(grid.axes[j], idx[j]);
      visit(psi);
      int j = p - 1;
      while (j >= 0 && ++idx[j] == grid.axes[j].points) idx[j--] = 0;
      if (j < 0) break;
    }
  } else {
    // coordinate descent along the grid lines through the current best point
    std::vector<int> idx(p);
    for (int j = 0; j < p; ++j) idx[j] = grid.axes[j].points / 2;
    auto point = [&](const std::vector<int>& ix) {
      VectorXd psi(p);
      for (int j = 0; j < p; ++j) psi[j] = axis_value(grid.axes[j], ix[j]);
      return psi;
    };
    double cur = visit(point(idx));
    for (sweeps = 1; sweeps <= 20; ++sweeps) {
      bool moved = false;
      for (int j = 0; j < p; ++j) {
        int keep = idx[j];
        for (int i = 0; i < grid.axes[j].points; ++i) {
          if (i == keep) continue;
          auto ix = idx;
          ix[j] = i;
          VectorXd psi = point(ix);
          double t = visit(psi);
          if (better(t, psi, cur, point(idx))) {
            cur = t;
            idx = ix;
            moved = true;
          }
        }
      }
      if (!moved) break;
    }
  }

  for (std::size_t i = 0; i < cs.grid.size(); ++i)
    if (std::isfinite(cs.statistic[i]) && cs.statistic[i] <= cs.threshold) cs.accepted.push_back(i);

  EstimateResult res;
  res.mode = SolveMode::grid;
  res.converged = false;
  res.n_iter = static_cast<int>(cs.grid.size());
  res.notes.push_back("grid estimates are solved only to grid resolution");
  if (p > 3) res.notes.push_back("coordinate descent over grid lines, " + std::to_string(sweeps) + " sweeps");
  if (!std::isfinite(best_t)) throw NumericalError("test statistic undefined at every grid point");
  res.psi = best;
  res.equation_norm = best_t;
  res.metric("statistic_min", best_t);
  res.metric("threshold", cs.threshold);
  res.metric("accepted_points", static_cast<double>(cs.accepted.size()));
  res.cov = MatrixXd::Constant(p, p, nan);
  if (cs.accepted.empty()) {
    res.warnings.push_back("empty accepted set at level " + std::to_string(grid.level) +
                           "; the estimating equations may have no solution in this grid");
  } else {
    // normal approximation read off the width of the accepted region
    res.cov.setZero();
    for (int j = 0; j < p; ++j) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (auto i : cs.accepted) {
        lo = std::min(lo, cs.grid[i][j]);
        hi = std::max(hi, cs.grid[i][j]);
      }
      double half = 0.5 * (hi - lo) / std::sqrt(cs.threshold);
      res.cov(j, j) = half * half;
    }
    for (int j = 0; j < p; ++j) {
      const auto& ax = grid.axes[j];
      for (auto i : cs.accepted)
        if (ax.points > 1 && (cs.grid[i][j] == ax.lo || cs.grid[i][j] == ax.hi)) {
          res.warnings.push_back("accepted set touches the grid boundary on axis " + std::to_string(j));
          break;
        }
    }
  }
  return {res, cs};
}

}  // namespace detail

std::pair<EstimateResult, ConfidenceSet> gest_grid(const Panel& panel, const SndmSpec& spec,
                                                   const PropensityFit& prop, const OutcomeModel& out,
                                                   const GridSpec& grid, const IndexMap& index) {
  spec.check_panel(panel);
  const int p = spec.p();
  const std::size_t n = panel.n();

  // u[i] holds subject i's recursion at the current grid point
  auto u = std::make_shared<std::vector<std::vector<std::vector<double>>>>(n);
  const SubjectRecord* base = panel.subjects().data();
  auto subject_of = [base](const HistoryView& h) { return static_cast<std::size_t>(&h.record() - base); };

  IndexMap idx = index;
  if (!idx) {
    idx = [spec, u, subject_of](const HistoryView& h, int, int k) {
      return sndm_index_features(spec, h, (*u)[subject_of(h)], k);
    };
  }

  std::vector<detail::SlotPlan> plans;
  for (int m = 0; m <= panel.K(); ++m) {
    auto rows = at_risk(panel, m);
    if (rows.empty()) continue;
    MatrixXd design = out.zero ? MatrixXd(rows.size(), 0) : history_design(panel, out.features, m, rows);
    auto proj = std::make_shared<const Projector>(design, VectorXd::Ones(rows.size()));
    for (int k = m + 1; k <= panel.K() + 1; ++k) {
      if (!index) {
        bool any = false;
        for (const auto& t : spec.terms()) any = any || (t.source_m == m && t.target_k == k);
        if (!any) continue;
      }
      detail::SlotPlan plan;
      plan.m = m;
      plan.k = k;
      plan.rows = rows;
      plan.design = design;
      plan.index = idx;
      plan.proj = proj;
      plans.push_back(std::move(plan));
    }
  }
  if (plans.empty()) throw ConfigError("distribution blip has no terms matching any (m, k) equation");

  auto cache = detail::make_nuisance(panel, prop, detail::plan_times(plans));
  detail::ResponseFn fn = [plans, u](const VectorXd&, bool) {
    detail::Response r;
    for (const auto& pl : plans) {
      VectorXd q(pl.rows.size());
      for (std::size_t j = 0; j < pl.rows.size(); ++j) q[j] = (*u)[pl.rows[j]][pl.m][pl.k - pl.m - 1];
      r.q.push_back(std::move(q));
    }
    return r;
  };

  auto eval = [&](const VectorXd& psi) {
    for (std::size_t i = 0; i < n; ++i) (*u)[i] = sndm_recursion(spec, panel, panel.subject(i), psi);
    auto sys = detail::build_system(panel, p, cache, plans, fn);
    detail::GridPoint g;
    g.statistic = sys.statistic(sys.evaluate(psi, false));
    return g;
  };
  auto result = detail::run_grid(p, grid, eval);
  result.first.method = "sndm-grid";
  result.first.psi_names = spec.psi_names();
  if (!prop.estimated()) result.first.notes.push_back("propensity treated as known");
  return result;
}

}  // namespace gestimate
