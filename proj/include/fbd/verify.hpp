#pragma once

#include "fbd/inclusion.hpp"

namespace fbd {

// Time-ordered pieces of a composite solution.  Segment j ends on the row where
// segment j+1 starts; fluxes[j] is the strictly parabolic flux its base solves.
struct Composite {
  std::vector<SubsolutionField> segments;
  std::vector<FluxModel> fluxes;

  double t_begin() const { return segments.front().t.front(); }
  double t_end() const { return segments.back().t.back(); }
};

inline Composite composite_of(const Trajectory& tr, const FluxModel& flux) {
  Composite c;
  c.segments.push_back(field_from_rows(tr.grid.L, tr.grid.times, tr.u));
  c.fluxes.push_back(flux);
  return c;
}

// test functions --------------------------------------------------------------

struct Mode {
  int m = 0, n = 0;
};

// zeta = cos(m pi x / L) (t / tau)^n
struct TestFunctionFamily {
  std::vector<Mode> modes;
  double L = 1, tau = 1;

  static TestFunctionFamily standard(double L, double tau, int m_max = 4, int n_max = 2) {
    TestFunctionFamily f;
    f.L = L;
    f.tau = tau;
    for (int m = 0; m <= m_max; ++m)
      for (int n = 0; n <= n_max; ++n) f.modes.push_back({m, n});
    return f;
  }
  double tp(int n, double t) const { return n == 0 ? 1.0 : std::pow(t / tau, n); }
  double tp_d(int n, double t) const { return n == 0 ? 0.0 : n * std::pow(t / tau, n - 1) / tau; }
  double zeta(const Mode& k, double x, double t) const { return std::cos(k.m * M_PI * x / L) * tp(k.n, t); }
  double zeta_t(const Mode& k, double x, double t) const { return std::cos(k.m * M_PI * x / L) * tp_d(k.n, t); }
  double zeta_x(const Mode& k, double x, double t) const {
    return -(k.m * M_PI / L) * std::sin(k.m * M_PI * x / L) * tp(k.n, t);
  }
};

struct ResidualReport {
  std::vector<Mode> modes;
  std::vector<double> total, grid, patch;  // per mode; patch = total - grid
  double max_abs = 0, max_grid = 0, max_patch = 0;
  int nx = 0;
  double dx = 0, tau = 0;
  double eps_patch = 0;  // inclusion defect of the laminates, set by the caller
};

namespace detail {

// flux of a cell at time t, averaged over its laminate phases
inline double cell_flux(const FluxModel& sigma, double ux, const CellPatch* p, double dt_cell) {
  if (!p) return sigma(ux);
  const double off[2] = {p->lam_plus, -p->lam_minus};
  const double th[2] = {p->theta_plus(), p->theta_minus()};
  double plateau = 0, ramp = 0;
  for (int s = 0; s < 2; ++s) plateau += th[s] * sigma(ux + off[s]);
  for (int q = 0; q < 4; ++q) {
    double chi = smootherstep(0.5 * (1 + gl4_nodes()[q]));
    for (int s = 0; s < 2; ++s) ramp += 0.5 * gl4_weights()[q] * th[s] * sigma(ux + chi * off[s]);
  }
  double frac = 2 * p->ramp / dt_cell;
  return (1 - frac) * plateau + frac * ramp;
}

}  // namespace detail

// Left minus right side of the weak identity per test function, on [t_begin, tau].
// Space: trapezoid on nodes for u zeta_t, midpoint for the flux term; time: two
// Gauss points per row interval with u_x linear in between.  `grid` is the same
// sum with each segment's own flux and no laminates.
inline ResidualReport weak_residual(const Composite& c, const FluxModel& sigma, const TestFunctionFamily& fam) {
  ResidualReport R;
  R.modes = fam.modes;
  const auto& first = c.segments.front();
  const auto& last = c.segments.back();
  R.nx = first.nx;
  R.dx = first.dx();
  R.tau = c.t_end();
  const int K = static_cast<int>(fam.modes.size());
  std::vector<double> lhs(K, 0), rhs_u(K, 0), rhs_f(K, 0), rhs_g(K, 0);
  const double h = first.dx();
  const double t0 = c.t_begin(), t1 = c.t_end();
  // boundary terms
  for (int i = 0; i <= first.nx; ++i) {
    double wq = (i == 0 || i == first.nx) ? 0.5 * h : h, x = i * h;
    double ua = first.u[first.node(i, 0)], ub = last.u[last.node(i, last.nt() - 1)];
    for (int k = 0; k < K; ++k)
      lhs[k] += wq * (ub * fam.zeta(fam.modes[k], x, t1) - ua * fam.zeta(fam.modes[k], x, t0));
  }
  const double g = 0.5 / std::sqrt(3.0);
  for (std::size_t sgi = 0; sgi < c.segments.size(); ++sgi) {
    const SubsolutionField& w = c.segments[sgi];
    const FluxModel& own = c.fluxes[sgi];
    for (int n = 0; n + 1 < w.nt(); ++n) {
      const double k_dt = w.dt(n);
      if (k_dt <= 0) continue;
      for (double a : {0.5 - g, 0.5 + g}) {
        const double t = w.t[n] + a * k_dt, wt = 0.5 * k_dt;
        for (int i = 0; i <= w.nx; ++i) {
          double wq = (i == 0 || i == w.nx) ? 0.5 * h : h, x = i * h;
          double uu = (1 - a) * w.u[w.node(i, n)] + a * w.u[w.node(i, n + 1)];
          for (int k = 0; k < K; ++k) rhs_u[k] += wt * wq * uu * fam.zeta_t(fam.modes[k], x, t);
        }
        for (int i = 0; i < w.nx; ++i) {
          double p0 = (w.u[w.node(i + 1, n)] - w.u[w.node(i, n)]) / h;
          double p1 = (w.u[w.node(i + 1, n + 1)] - w.u[w.node(i, n + 1)]) / h;
          double ux = (1 - a) * p0 + a * p1;
          double fs = detail::cell_flux(sigma, ux, w.patch(w.cell(i, n)), k_dt);
          double fo = own(ux);
          double x = (i + 0.5) * h;
          for (int k = 0; k < K; ++k) {
            double zx = fam.zeta_x(fam.modes[k], x, t);
            rhs_f[k] += wt * h * fs * zx;
            rhs_g[k] += wt * h * fo * zx;
          }
        }
      }
    }
  }
  for (int k = 0; k < K; ++k) {
    double tot = lhs[k] - (rhs_u[k] - rhs_f[k]);
    double grd = lhs[k] - (rhs_u[k] - rhs_g[k]);
    R.total.push_back(tot);
    R.grid.push_back(grd);
    R.patch.push_back(tot - grd);
    R.max_abs = std::max(R.max_abs, std::abs(tot));
    R.max_grid = std::max(R.max_grid, std::abs(grd));
    R.max_patch = std::max(R.max_patch, std::abs(tot - grd));
  }
  return R;
}

inline ResidualReport weak_residual(const Trajectory& tr, const FluxModel& sigma) {
  auto c = composite_of(tr, sigma);
  return weak_residual(c, sigma, TestFunctionFamily::standard(tr.grid.L, tr.grid.times.back()));
}

// envelopes ---------------------------------------------------------------------

struct EnvelopeReport {
  bool pass = true;
  double worst = 0;        // largest violation of monotonicity
  std::string curve;       // which envelope, empty on a clean pass
  int row = -1;            // row where the worst violation appears
  double time = nan_v;
};

// min u and min u_x must not decrease, max u and max u_x must not increase
inline EnvelopeReport envelope_check(const Trajectory& tr, double tol = 1e-9) {
  EnvelopeReport E;
  const double dx = tr.grid.dx();
  auto ext = [&](int n) {
    const auto& u = tr.u[n];
    auto [lo, hi] = std::minmax_element(u.begin(), u.end());
    return std::array<double, 4>{*lo, -*hi, statistic(u, dx, Statistic::min_ux),
                                 -statistic(u, dx, Statistic::max_ux)};
  };
  static const char* names[4] = {"min u", "max u", "min u_x", "max u_x"};
  auto prev = ext(0);
  for (int n = 1; n < tr.nt(); ++n) {
    auto cur = ext(n);
    for (int k = 0; k < 4; ++k) {
      double drop = prev[k] - cur[k];
      if (drop > E.worst) {
        E.worst = drop;
        E.curve = names[k];
        E.row = n;
        E.time = tr.t(n);
      }
    }
    prev = cur;
  }
  E.pass = E.worst <= tol;
  if (E.pass) E.curve.clear();
  return E;
}

// energy ------------------------------------------------------------------------

// trapezoid time average of the energy over [ta, tb]; rows are interpolated linearly
inline double energy_average(const Trajectory& tr, const Potential& W, double ta, double tb) {
  const auto& T = tr.grid.times;
  if (!(tb > ta)) throw DomainError("energy_average needs a nonempty interval");
  if (ta < T.front() - 1e-12 || tb > T.back() + 1e-12)
    throw DomainError(cat("interval [", ta, ", ", tb, "] outside the data [", T.front(), ", ", T.back(), "]"));
  const double dx = tr.grid.dx();
  std::vector<double> E(tr.nt());
  for (int n = 0; n < tr.nt(); ++n) E[n] = energy(tr.u[n], dx, W);
  auto at = [&](double t) {
    int n = static_cast<int>(std::upper_bound(T.begin(), T.end(), t) - T.begin()) - 1;
    n = std::clamp(n, 0, tr.nt() - 2);
    double a = (t - T[n]) / (T[n + 1] - T[n]);
    return (1 - a) * E[n] + a * E[n + 1];
  };
  if (tr.nt() == 1) return E[0];
  double acc = 0, tp = ta, ep = at(ta);
  for (int n = 0; n < tr.nt(); ++n) {
    if (T[n] <= ta || T[n] >= tb) continue;
    acc += 0.5 * (T[n] - tp) * (ep + E[n]);
    tp = T[n];
    ep = E[n];
  }
  acc += 0.5 * (tb - tp) * (ep + at(tb));
  return acc / (tb - ta);
}

// time average of the energy of a (possibly laminated) field over its span
inline double energy_average(const SubsolutionField& w, const Potential& W) {
  double acc = 0;
  const double h = w.dx();
  for (int n = 0; n + 1 < w.nt(); ++n)
    for (int i = 0; i < w.nx; ++i) {
      if (w.patch(w.cell(i, n))) {
        for_each_micro(w, i, n, [&](double ux, double, double wt) { acc += W(ux) * wt; });
      } else {
        double p0 = (w.u[w.node(i + 1, n)] - w.u[w.node(i, n)]) / h;
        double p1 = (w.u[w.node(i + 1, n + 1)] - w.u[w.node(i, n + 1)]) / h;
        acc += 0.5 * (W(p0) + W(p1)) * w.area(n);
      }
    }
  return acc / (w.t.back() - w.t.front());
}

// concentration -------------------------------------------------------------------

inline double well_distance(double s, double s0m, double s0p) {
  return std::min(std::abs(s - s0m), std::abs(s - s0p));
}

// per snapshot sup over x of the distance of u_x to the two wells
inline std::vector<double> concentration_check(const Trajectory& tr, double s0m, double s0p) {
  std::vector<double> out;
  const double dx = tr.grid.dx();
  for (const auto& row : tr.u) {
    double m = 0;
    for (double p : gradients(row, dx)) m = std::max(m, well_distance(p, s0m, s0p));
    out.push_back(m);
  }
  return out;
}

struct Concentration {
  std::vector<double> times;  // row midpoints
  std::vector<double> sup;    // over laminated cells of the row, NaN if none
  double unpatched_measure = 0;
  double worst = 0;
};

// Laminated field: sup over the plateau phases of the laminated cells of each row.
// Cells left without a laminate are reported by measure only.
inline Concentration concentration_check(const SubsolutionField& w, double s0m, double s0p) {
  Concentration C;
  for (int n = 0; n + 1 < w.nt(); ++n) {
    double m = nan_v;
    for (int i = 0; i < w.nx; ++i) {
      const CellPatch* p = w.patch(w.cell(i, n));
      if (!p) {
        C.unpatched_measure += w.area(n);
        continue;
      }
      double ux = w.jac(i, n).ux;
      double d = std::max(well_distance(ux + p->lam_plus, s0m, s0p), well_distance(ux - p->lam_minus, s0m, s0p));
      m = std::isnan(m) ? d : std::max(m, d);
    }
    C.times.push_back(0.5 * (w.t[n] + w.t[n + 1]));
    C.sup.push_back(m);
    if (!std::isnan(m)) C.worst = std::max(C.worst, m);
  }
  return C;
}

}  // namespace fbd
