#include "system.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>

#include "gestimate/error.hpp"

namespace gestimate::detail {

EstimatingSystem::EstimatingSystem(std::size_t n, int p, std::vector<Slot> slots, std::vector<NuisanceBlock> blocks,
                                   ResponseFn fn)
    : n_(n), p_(p), slots_(std::move(slots)), blocks_(std::move(blocks)), fn_(std::move(fn)) {}

Evaluation EstimatingSystem::evaluate(const VectorXd& psi, bool derivative) const {
  Evaluation ev;
  ev.psi = psi;
  ev.resp = fn_(psi, derivative);
  ev.score = VectorXd::Zero(p_);
  if (derivative) ev.jacobian = MatrixXd::Zero(p_, p_);
  ev.resid.resize(slots_.size());
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    const Slot& sl = slots_[s];
    ev.resid[s] = sl.proj->residual(ev.resp.q[s]);
    ev.score += sl.dtilde.transpose() * sl.w.cwiseProduct(ev.resid[s]);
    if (derivative) ev.jacobian += sl.dtilde.transpose() * sl.w.asDiagonal() * sl.proj->residual(ev.resp.dq[s]);
  }
  return ev;
}

MatrixXd EstimatingSystem::contributions(const Evaluation& ev) const {
  MatrixXd C = MatrixXd::Zero(n_, p_);
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    const Slot& sl = slots_[s];
    for (std::size_t r = 0; r < sl.rows.size(); ++r)
      C.row(sl.rows[r]) += (sl.w[r] * ev.resid[s][r]) * sl.dtilde.row(r);
  }
  return C;
}

MatrixXd EstimatingSystem::adjusted_contributions(const Evaluation& ev) const {
  MatrixXd C = MatrixXd::Zero(n_, p_);
  std::vector<MatrixXd> cross(blocks_.size());
  for (std::size_t b = 0; b < blocks_.size(); ++b) cross[b] = MatrixXd::Zero(p_, blocks_[b].X.cols());
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    const Slot& sl = slots_[s];
    MatrixXd dres = sl.proj->residual(sl.dtilde);
    for (std::size_t r = 0; r < sl.rows.size(); ++r) {
      double wr = sl.w[r] * ev.resid[s][r];
      C.row(sl.rows[r]) += wr * dres.row(r);
      if (sl.block >= 0) {
        const NuisanceBlock& nb = blocks_[sl.block];
        int j = sl.block_row[r];
        cross[sl.block] -= (wr * nb.slope[j]) * sl.dshift.row(r).transpose() * nb.X.row(j);
      }
    }
  }
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const NuisanceBlock& nb = blocks_[b];
    MatrixXd Jaa = -(nb.X.transpose() * nb.slope.asDiagonal() * nb.X);
    MatrixXd M = Jaa.transpose().ldlt().solve(cross[b].transpose()).transpose();  // cross * Jaa^{-1}
    for (std::size_t j = 0; j < nb.rows.size(); ++j)
      C.row(nb.rows[j]) -= (M * (nb.X.row(j).transpose() * nb.resid[j])).transpose();
  }
  return C;
}

double EstimatingSystem::statistic(const Evaluation& ev) const {
  MatrixXd C = adjusted_contributions(ev);
  MatrixXd V = C.transpose() * C;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(V);
  double mx = es.eigenvalues().maxCoeff();
  double mn = es.eigenvalues().minCoeff();
  if (!(mx > 0.0) || mn <= 1e-12 * mx) return std::numeric_limits<double>::quiet_NaN();
  VectorXd x = es.eigenvectors().transpose() * ev.score;
  return (x.array().square() / es.eigenvalues().array()).sum();
}

bool EstimatingSystem::degenerate() const {
  for (const auto& sl : slots_)
    if (sl.dshift.size() > 0 && sl.dtilde.cwiseAbs().maxCoeff() > 0.0) {
      // variation of the index itself across rows
      for (Eigen::Index j = 0; j < sl.dtilde.cols(); ++j) {
        double lo = sl.dtilde.col(j).minCoeff(), hi = sl.dtilde.col(j).maxCoeff();
        if (hi - lo > 1e-12 * std::max(1.0, std::abs(hi))) return false;
      }
    }
  return true;
}

StackedScores EstimatingSystem::stacked(const VectorXd& psi) const {
  Evaluation ev = evaluate(psi, true);
  std::vector<int> a_off(blocks_.size()), b_off(slots_.size());
  int q = 0;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    a_off[b] = q;
    q += static_cast<int>(blocks_[b].X.cols());
  }
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    b_off[s] = q;
    q += slots_[s].proj->cols();
  }
  const int po = q;
  q += p_;

  StackedScores out;
  out.psi_offset = po;
  out.psi_dim = p_;
  out.contributions = MatrixXd::Zero(n_, q);
  out.jacobian = MatrixXd::Zero(q, q);
  out.theta = VectorXd::Zero(q);
  out.theta.tail(p_) = psi;

  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const NuisanceBlock& nb = blocks_[b];
    const int qb = static_cast<int>(nb.X.cols());
    for (std::size_t j = 0; j < nb.rows.size(); ++j)
      out.contributions.block(nb.rows[j], a_off[b], 1, qb) += nb.resid[j] * nb.X.row(j);
    out.jacobian.block(a_off[b], a_off[b], qb, qb) = -(nb.X.transpose() * nb.slope.asDiagonal() * nb.X);
  }
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    const Slot& sl = slots_[s];
    const int bs = sl.proj->cols();
    const VectorXd& r = ev.resid[s];
    if (bs > 0) {
      const MatrixXd& X = sl.proj->design();
      out.theta.segment(b_off[s], bs) = sl.proj->coef(ev.resp.q[s]);
      for (std::size_t i = 0; i < sl.rows.size(); ++i)
        out.contributions.block(sl.rows[i], b_off[s], 1, bs) += (sl.w[i] * r[i]) * X.row(i);
      out.jacobian.block(b_off[s], b_off[s], bs, bs) = -(X.transpose() * sl.w.asDiagonal() * X);
      out.jacobian.block(b_off[s], po, bs, p_) = X.transpose() * sl.w.asDiagonal() * ev.resp.dq[s];
      out.jacobian.block(po, b_off[s], p_, bs) = -(sl.dtilde.transpose() * sl.w.asDiagonal() * X);
    }
    for (std::size_t i = 0; i < sl.rows.size(); ++i)
      out.contributions.block(sl.rows[i], po, 1, p_) += (sl.w[i] * r[i]) * sl.dtilde.row(i);
    out.jacobian.block(po, po, p_, p_) += sl.dtilde.transpose() * sl.w.asDiagonal() * ev.resp.dq[s];
    if (sl.block >= 0) {
      const NuisanceBlock& nb = blocks_[sl.block];
      const int qb = static_cast<int>(nb.X.cols());
      for (std::size_t i = 0; i < sl.rows.size(); ++i) {
        int j = sl.block_row[i];
        out.jacobian.block(po, a_off[sl.block], p_, qb) -=
            (sl.w[i] * r[i] * nb.slope[j]) * sl.dshift.row(i).transpose() * nb.X.row(j);
      }
    }
  }
  return out;
}

std::vector<int> plan_times(const std::vector<SlotPlan>& plans) {
  std::vector<int> ts;
  for (const auto& p : plans)
    if (std::find(ts.begin(), ts.end(), p.m) == ts.end()) ts.push_back(p.m);
  std::sort(ts.begin(), ts.end());
  return ts;
}

NuisanceCache make_nuisance(const Panel& panel, const PropensityFit& prop, const std::vector<int>& times,
                            const OffsetFn& tilt) {
  const bool bern = prop.family() == Family::bernoulli_logit;
  NuisanceCache cache;
  for (int m : times) {
    if (!prop.has_time(m)) throw ConfigError("propensity model has no fit for time " + std::to_string(m));
    std::vector<double> mu(panel.n(), std::numeric_limits<double>::quiet_NaN());
    auto rows = at_risk(panel, m);
    if (prop.estimated()) {
      NuisanceBlock nb;
      nb.m = m;
      nb.rows = rows;
      nb.X = history_design(panel, prop.features(), m, rows);
      const VectorXd& alpha = prop.at(m).alpha;
      nb.resid.resize(rows.size());
      nb.slope.resize(rows.size());
      std::vector<int> pos(panel.n(), -1);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        double eta = nb.X.row(r).dot(alpha);
        double a = panel.subject(rows[r]).a[m];
        if (bern) {
          if (tilt) eta += tilt(rows[r], m);
          double pr = expit(eta);
          mu[rows[r]] = pr;
          nb.slope[r] = pr * (1.0 - pr);
          nb.resid[r] = a - pr;
        } else {
          mu[rows[r]] = eta;
          nb.slope[r] = 1.0;
          nb.resid[r] = a - eta;
        }
        pos[rows[r]] = static_cast<int>(r);
      }
      cache.block_of[m] = static_cast<int>(cache.blocks.size());
      cache.blocks.push_back(std::move(nb));
      cache.pos.push_back(std::move(pos));
    } else {
      for (auto i : rows) {
        HistoryView h(panel, panel.subject(i), m);
        double pr = prop.predict(h);
        if (bern && tilt) pr = tilted_propensity(pr, tilt(i, m));
        mu[i] = pr;
      }
    }
    cache.mu.emplace(m, std::move(mu));
  }
  cache.bernoulli = bern;
  return cache;
}

EstimatingSystem build_system(const Panel& panel, int p, const PropensityFit& prop, const std::vector<SlotPlan>& plans,
                              ResponseFn fn, const OffsetFn& tilt) {
  return build_system(panel, p, make_nuisance(panel, prop, plan_times(plans), tilt), plans, std::move(fn));
}

EstimatingSystem build_system(const Panel& panel, int p, const NuisanceCache& cache, const std::vector<SlotPlan>& plans,
                              ResponseFn fn) {
  const bool bern = cache.bernoulli;
  std::vector<Slot> slots;
  slots.reserve(plans.size());
  for (const auto& plan : plans) {
    Slot sl;
    sl.m = plan.m;
    sl.k = plan.k;
    sl.rows = plan.rows;
    const std::size_t nr = plan.rows.size();
    sl.w = plan.weight.size() ? plan.weight : VectorXd::Ones(nr);
    sl.proj = plan.proj ? plan.proj : std::make_shared<const Projector>(plan.design, sl.w);
    auto mit = cache.mu.find(plan.m);
    if (mit == cache.mu.end()) throw ConfigError("propensity model has no fit for time " + std::to_string(plan.m));
    const auto& mu = mit->second;
    if (auto it = cache.block_of.find(plan.m); it != cache.block_of.end()) {
      sl.block = it->second;
      for (auto i : plan.rows) sl.block_row.push_back(cache.pos[it->second][i]);
    }
    sl.dtilde.resize(nr, p);
    sl.dshift.resize(nr, p);
    for (std::size_t r = 0; r < nr; ++r) {
      const auto& rec = panel.subject(plan.rows[r]);
      HistoryView h(panel, rec, plan.m);
      double a = rec.a[plan.m];
      VectorXd d1 = plan.index(h.with_treatment(plan.m, 1.0), plan.m, plan.k);
      VectorXd d0 = plan.index(h.with_treatment(plan.m, 0.0), plan.m, plan.k);
      VectorXd d;
      if (bern) {
        if (a != 0.0 && a != 1.0) throw DataError("binary treatment expected at time " + std::to_string(plan.m));
        d = a == 1.0 ? d1 : d0;
      } else {
        VectorXd d2 = plan.index(h.with_treatment(plan.m, 2.0), plan.m, plan.k);
        if (((d2 - d0) - 2.0 * (d1 - d0)).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, d2.cwiseAbs().maxCoeff()))
          throw ConfigError("index function must be linear in a continuous treatment");
        d = d0 + a * (d1 - d0);
      }
      double m_i = mu[plan.rows[r]];
      sl.dshift.row(r) = (d1 - d0).transpose();
      sl.dtilde.row(r) = (d - d0 - m_i * (d1 - d0)).transpose();
    }
    slots.push_back(std::move(sl));
  }
  return EstimatingSystem(panel.n(), p, std::move(slots), cache.blocks, std::move(fn));
}

IndexMap default_index(const BlipSpec& spec) {
  return [spec](const HistoryView& h, int m, int k) { return blip_features(spec, h, m, k); };
}

SnmmData snmm_data(const Panel& panel, const BlipSpec& spec, const OutcomeModel& out, const IndexMap& index) {
  SnmmData data;
  const bool default_idx = !index;
  IndexMap idx = default_idx ? default_index(spec) : index;
  for (int m = 0; m <= panel.K(); ++m) {
    auto rows = at_risk(panel, m);
    if (rows.empty()) continue;
    MatrixXd design = out.zero ? MatrixXd(rows.size(), 0) : history_design(panel, out.features, m, rows);
    for (int k : components_after(panel, m)) {
      if (default_idx) {
        bool any = false;
        for (const auto& t : spec.terms()) any = any || (t.source_m == m && t.target_k == k);
        if (!any) continue;
      }
      SlotPlan plan;
      plan.m = m;
      plan.k = k;
      plan.rows = rows;
      plan.design = design;
      plan.index = idx;
      MatrixXd G(rows.size(), spec.p());
      VectorXd y(rows.size());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& rec = panel.subject(rows[r]);
        G.row(r) = cumulative_features(spec, panel, rec, m, k).transpose();
        y[r] = rec.y[k];
      }
      data.plans.push_back(std::move(plan));
      data.G.push_back(std::move(G));
      data.y.push_back(std::move(y));
    }
  }
  if (data.plans.empty()) throw ConfigError("blip has no terms matching any (m, k) equation");
  return data;
}

ResponseFn snmm_response(const SnmmData& data, Link link) {
  auto G = std::make_shared<std::vector<MatrixXd>>(data.G);
  auto y = std::make_shared<std::vector<VectorXd>>(data.y);
  return [G, y, link](const VectorXd& psi, bool derivative) {
    Response r;
    r.q.resize(G->size());
    if (derivative) r.dq.resize(G->size());
    for (std::size_t s = 0; s < G->size(); ++s) {
      VectorXd eta = (*G)[s] * psi;
      if (link == Link::identity) {
        r.q[s] = (*y)[s] - eta;
        if (derivative) r.dq[s] = -(*G)[s];
      } else {
        if (eta.size() && eta.cwiseAbs().maxCoeff() > 700) throw NumericalError("log-link blip overflows exp");
        r.q[s] = (*y)[s].cwiseProduct((-eta).array().exp().matrix());
        if (derivative) r.dq[s] = -(r.q[s].asDiagonal() * (*G)[s]);
      }
    }
    return r;
  };
}

namespace {

double norm_of(const Evaluation& ev, std::size_t n) { return ev.score.cwiseAbs().maxCoeff() / double(n); }

bool singular(const MatrixXd& J) {
  Eigen::JacobiSVD<MatrixXd> svd(J);
  const auto& sv = svd.singularValues();
  return !(sv.maxCoeff() > 0.0) || sv.minCoeff() <= 1e-12 * sv.maxCoeff() || !J.allFinite();
}

}  // namespace

SolveResult solve_linear(const EstimatingSystem& sys) {
  if (sys.degenerate()) throw NumericalError("singular linear system: no treatment variation in the estimating equations");
  VectorXd psi = VectorXd::Zero(sys.p());
  Evaluation ev = sys.evaluate(psi, true);
  if (singular(ev.jacobian))
    throw NumericalError("singular linear system: no treatment variation within the feature span");
  SolveResult sol;
  sol.mode = SolveMode::closed_form;
  psi = -ev.jacobian.colPivHouseholderQr().solve(ev.score);
  for (int refine = 0; refine < 3; ++refine) {
    ev = sys.evaluate(psi, true);
    sol.norm = norm_of(ev, sys.n());
    if (sol.norm < 1e-10) break;
    psi -= ev.jacobian.colPivHouseholderQr().solve(ev.score);
  }
  ev = sys.evaluate(psi, false);
  sol.norm = norm_of(ev, sys.n());
  sol.psi = psi;
  sol.iterations = 1;
  sol.converged = sol.norm < 1e-8;
  return sol;
}

SolveResult solve_newton(const EstimatingSystem& sys, const VectorXd& start, int max_iter, double tol) {
  if (sys.degenerate()) throw NumericalError("singular linear system: no treatment variation in the estimating equations");
  SolveResult sol;
  sol.mode = SolveMode::root_find;
  VectorXd psi = start;
  int it = 0;
  bool stuck = false;
  for (; it < max_iter; ++it) {
    Evaluation ev = sys.evaluate(psi, true);
    double nrm = norm_of(ev, sys.n());
    sol.norm = nrm;
    if (nrm < tol) {
      sol.converged = true;
      break;
    }
    if (singular(ev.jacobian)) {
      if (it == 0) throw NumericalError("singular linear system: no treatment variation within the feature span");
      stuck = true;
      break;
    }
    VectorXd step = -ev.jacobian.colPivHouseholderQr().solve(ev.score);
    double t = 1.0;
    bool accepted = false;
    while (t > 1e-8) {
      VectorXd cand = psi + t * step;
      try {
        Evaluation evc = sys.evaluate(cand, false);
        if (norm_of(evc, sys.n()) < nrm) {
          psi = cand;
          accepted = true;
          break;
        }
      } catch (const NumericalError&) {
      }
      t *= 0.5;
    }
    if (!accepted) {
      stuck = true;
      break;
    }
  }
  if (stuck && !sol.converged) {
    // coordinate-wise secant searches on each equation in turn
    for (int sweep = 0; sweep < max_iter && !sol.converged; ++sweep, ++it) {
      for (int j = 0; j < sys.p(); ++j) {
        auto f = [&](double x) {
          VectorXd c = psi;
          c[j] = x;
          return sys.evaluate(c, false).score[j] / double(sys.n());
        };
        double x0 = psi[j], x1 = psi[j] + 0.1 * std::max(1.0, std::abs(psi[j]));
        double f0 = f(x0), f1 = f(x1);
        for (int s = 0; s < 60 && std::abs(f1) > 0.1 * tol; ++s) {
          if (f1 == f0) break;
          double x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
          x0 = x1;
          f0 = f1;
          x1 = x2;
          f1 = f(x1);
        }
        if (std::isfinite(x1)) psi[j] = x1;
      }
      Evaluation ev = sys.evaluate(psi, false);
      sol.norm = norm_of(ev, sys.n());
      sol.converged = sol.norm < tol;
    }
  }
  sol.psi = psi;
  sol.iterations = it;
  if (!sol.converged) throw NumericalError("root finder did not converge in " + std::to_string(max_iter) + " iterations");
  return sol;
}

void finish_result(EstimateResult& res, const EstimatingSystem& sys, const SolveResult& sol) {
  res.psi = sol.psi;
  res.converged = sol.converged;
  res.n_iter = sol.iterations;
  res.equation_norm = sol.norm;
  res.mode = sol.mode;
  res.cov = sandwich_cov(sys.stacked(sol.psi));
}

}  // namespace gestimate::detail
