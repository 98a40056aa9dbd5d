#include <cmath>
#include <memory>

#include "gestimate/error.hpp"
#include "gestimate/gest.hpp"
#include "gestimate/linalg.hpp"
#include "system.hpp"

namespace gestimate {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// first blipped-down outcome after m, the argument of the tilt
std::vector<std::vector<double>> first_u(const Panel& panel, const BlipSpec& spec, const VectorXd& psi) {
  std::vector<std::vector<double>> u(panel.n());
  for (std::size_t i = 0; i < panel.n(); ++i) {
    const auto& rec = panel.subject(i);
    u[i].resize(rec.a.size());
    for (int m = 0; m < static_cast<int>(rec.a.size()); ++m) u[i][m] = blipdown_snmm(spec, panel, rec, psi, m)[0];
  }
  return u;
}

struct Tilt {
  const Panel* panel;
  SensitivityFunction q;
  std::shared_ptr<std::vector<std::vector<double>>> u;

  double operator()(std::size_t i, int m) const {
    HistoryView h = HistoryView(*panel, panel->subject(i), m).without_current_treatment();
    return q((*u)[i][m], h, 1.0);
  }
};

struct Problem {
  const Panel& panel;
  const BlipSpec& spec;
  const PropensityFit& prop;
  detail::SnmmData data;
  detail::ResponseFn fn;
};

// the G-estimate at a fixed tilt evaluated at psi_tilt
struct Step {
  PropensityFit prop;
  detail::SolveResult sol;
  std::unique_ptr<detail::EstimatingSystem> sys;
};

Step solve_at(const Problem& pb, const Tilt& tilt, bool zero) {
  Step st;
  if (zero) {
    st.prop = pb.prop;
  } else if (pb.prop.estimated()) {
    st.prop = fit_propensity(pb.panel, pb.prop.features(), Family::bernoulli_logit, detail::plan_times(pb.data.plans),
                             tilt);
  } else {
    st.prop = pb.prop;
  }
  OffsetFn off;
  if (!zero) off = tilt;
  st.sys = std::make_unique<detail::EstimatingSystem>(
      detail::build_system(pb.panel, pb.spec.p(), st.prop, pb.data.plans, pb.fn, off));
  if (pb.spec.link() == Link::identity)
    st.sol = detail::solve_linear(*st.sys);
  else
    st.sol = detail::solve_newton(*st.sys, VectorXd::Zero(pb.spec.p()), 100, 1e-8);
  return st;
}

}  // namespace

std::vector<SensitivityPoint> gest_sensitivity(const Panel& panel, const BlipSpec& spec, const PropensityFit& prop,
                                               const SensitivitySpec& sens, const OutcomeModel& out) {
  if (!panel.binary_treatment() || prop.family() != Family::bernoulli_logit)
    throw DataError("sensitivity analysis needs binary treatments and a bernoulli propensity");
  if (spec.link() == Link::logit) throw DataError("sensitivity analysis supports identity and log links");
  if (sens.gamma.empty()) throw ConfigError("sensitivity analysis needs at least one gamma value");
  spec.check_panel(panel);
  for (int m = 0; m <= panel.K(); ++m)
    if (components_after(panel, m).empty()) throw ConfigError("no outcome after time " + std::to_string(m));

  Problem pb{panel, spec, prop, detail::snmm_data(panel, spec, out, {}), {}};
  pb.fn = detail::snmm_response(pb.data, spec.link());

  Step primary = solve_at(pb, Tilt{&panel, {}, nullptr}, true);

  std::vector<SensitivityPoint> points;
  for (double gamma : sens.gamma) {
    SensitivityPoint pt;
    pt.gamma = gamma;
    SensitivityFunction q = sens.q ? SensitivityFunction([q0 = sens.q, gamma](double u, const HistoryView& h, double a) {
      return gamma * q0(u, h, a);
    })
                                   : SensitivityFunction([gamma](double u, const HistoryView&, double a) {
                                       return gamma * u * a;
                                     });
    try {
      EstimateResult res;
      res.method = std::string("sensitivity-") + link_name(spec.link());
      res.psi_names = spec.psi_names();
      if (gamma == 0.0) {
        detail::finish_result(res, *primary.sys, primary.sol);
      } else {
        auto u = std::make_shared<std::vector<std::vector<double>>>();
        Tilt tilt{&panel, q, u};
        // q must vanish at a = 0
        {
          HistoryView h = HistoryView(panel, panel.subject(0), 0).without_current_treatment();
          if (q(1.0, h, 0.0) != 0.0) throw ConfigError("sensitivity function must vanish at a = 0");
        }
        VectorXd psi = primary.sol.psi;
        Step st;
        bool done = false;
        int sweep = 0;
        for (; sweep < sens.max_sweeps; ++sweep) {
          *u = first_u(panel, spec, psi);
          st = solve_at(pb, tilt, false);
          double change = (st.sol.psi - psi).cwiseAbs().maxCoeff();
          psi = st.sol.psi;
          if (change < sens.tol) {
            done = true;
            break;
          }
        }
        if (!done)
          throw NumericalError("sensitivity fixed point did not converge in " + std::to_string(sens.max_sweeps) +
                               " sweeps");
        *u = first_u(panel, spec, psi);
        st = solve_at(pb, tilt, false);
        res.psi = st.sol.psi;
        res.converged = st.sol.converged;
        res.n_iter = sweep + 1;
        res.equation_norm = st.sol.norm;
        res.mode = st.sol.mode;

        // sandwich with the tilt's dependence on psi included through finite differences
        StackedScores sc = st.sys->stacked(res.psi);
        const int po = sc.psi_offset, p = spec.p();
        VectorXd theta = sc.theta;
        auto fitted_prop = std::make_shared<PropensityFit>(st.prop);
        auto summed = [&, fitted_prop](const VectorXd& psi_v) {
          *u = first_u(panel, spec, psi_v);
          auto sys = detail::build_system(panel, p, *fitted_prop, pb.data.plans, pb.fn, tilt);
          // beta is re-profiled here; total() moves it back to beta-hat
          return sys.stacked(psi_v);
        };
        for (int j = 0; j < p; ++j) {
          double h = 1e-5 * std::max(1.0, std::abs(res.psi[j]));
          VectorXd pp = res.psi, pm = res.psi;
          pp[j] += h;
          pm[j] -= h;
          StackedScores sp = summed(pp), sm = summed(pm);
          // summed estimating functions at (alpha-hat, beta-hat, psi +- h)
          auto total = [&](const StackedScores& s) {
            VectorXd t = s.contributions.colwise().sum().transpose();
            // shift beta back to beta-hat using the exact linear dependence on beta
            VectorXd db = theta.segment(0, po) - s.theta.segment(0, po);
            t += s.jacobian.leftCols(po) * db;
            return t;
          };
          sc.jacobian.col(po + j) = (total(sp) - total(sm)) / (2.0 * h);
        }
        *u = first_u(panel, spec, res.psi);
        res.cov = sandwich_cov(sc);
        res.notes.push_back("sensitivity tilt uses the fitted propensity family for the unknown density t(A_m | history)");
      }
      if (!res.converged) throw NumericalError("equations not solved at gamma = " + std::to_string(gamma));
      res.metric("gamma", gamma);
      pt.result = std::move(res);
    } catch (const Error& e) {
      pt.ok = false;
      pt.error = e.what();
    }
    points.push_back(std::move(pt));
  }
  return points;
}

}  // namespace gestimate
