#pragma once

#include <ostream>

#include "flux.hpp"

namespace fbd {

struct Grid {
  double L = 1;
  int nx = 256;
  std::vector<double> times;

  double dx() const { return L / nx; }
  double x(int i) const { return i * dx(); }
  void validate() const {
    if (nx < 16) throw DomainError(cat("grid needs nx >= 16, got ", nx));
    if (!(L > 0)) throw DomainError("grid length must be positive");
  }
};

struct Trajectory {
  Grid grid;
  std::vector<std::vector<double>> u;  // one row of nx+1 nodes per entry of grid.times
  std::string flux_id;
  std::vector<double> initial;

  int nt() const { return static_cast<int>(u.size()); }
  double t(int n) const { return grid.times[n]; }
  const std::vector<double>& back() const { return u.back(); }
};

// cell gradients (nx values)
inline std::vector<double> gradients(const std::vector<double>& u, double dx) {
  std::vector<double> p(u.size() - 1);
  for (std::size_t i = 0; i + 1 < u.size(); ++i) p[i] = (u[i + 1] - u[i]) / dx;
  return p;
}

// trapezoid integral; the quantity the scheme conserves
inline double mass(const std::vector<double>& u, double dx) {
  double s = 0.5 * (u.front() + u.back());
  for (std::size_t i = 1; i + 1 < u.size(); ++i) s += u[i];
  return s * dx;
}

inline double mean(const std::vector<double>& u, double dx) {
  return mass(u, dx) / (dx * (u.size() - 1));
}

enum class Statistic { max_ux, min_ux };

// extremes of u_x including the boundary value 0
inline double statistic(const std::vector<double>& u, double dx, Statistic st) {
  auto p = gradients(u, dx);
  return st == Statistic::max_ux ? std::max(0.0, *std::max_element(p.begin(), p.end()))
                                 : std::min(0.0, *std::min_element(p.begin(), p.end()));
}

struct SolveOptions {
  double dt = 0;           // 0 means dx
  int stride = 1;          // keep every stride-th step
  double newton_tol = 1e-13;
  int newton_max = 40;
  int max_halvings = 8;
};

namespace detail {

// one implicit Euler step; returns false when Newton stalls
inline bool implicit_step(const FluxModel& f, const std::vector<double>& un, double dt, double dx,
                          std::vector<double>& out, const SolveOptions& opt, int* iters = nullptr) {
  const int n = static_cast<int>(un.size());
  const int nc = n - 1;
  std::vector<double> u = un, F(nc), dF(nc), a(n), b(n), c(n), r(n);
  auto w = [&](int i) { return (i == 0 || i == n - 1) ? 0.5 * dx : dx; };
  double scale = 1;
  for (double v : un) scale = std::max(scale, std::abs(v));
  for (int it = 0; it < opt.newton_max; ++it) {
    for (int i = 0; i < nc; ++i) {
      double p = (u[i + 1] - u[i]) / dx;
      F[i] = f(p);
      dF[i] = f.d(p);
    }
    for (int i = 0; i < n; ++i) {
      double fr = i < nc ? F[i] : 0, fl = i > 0 ? F[i - 1] : 0;
      r[i] = -(w(i) * (u[i] - un[i]) - dt * (fr - fl));
      double kr = i < nc ? dt * dF[i] / dx : 0, kl = i > 0 ? dt * dF[i - 1] / dx : 0;
      a[i] = -kl;
      c[i] = -kr;
      b[i] = w(i) + kl + kr;
    }
    thomas(a, b, c, r);
    double step = 0;
    for (int i = 0; i < n; ++i) {
      u[i] += r[i];
      step = std::max(step, std::abs(r[i]));
      if (!std::isfinite(u[i])) return false;
    }
    if (step <= opt.newton_tol * scale) {
      // conservative final update so the trapezoid mass telescopes exactly
      for (int i = 0; i < nc; ++i) F[i] = f((u[i + 1] - u[i]) / dx);
      out.resize(n);
      for (int i = 0; i < n; ++i) {
        double fr = i < nc ? F[i] : 0, fl = i > 0 ? F[i - 1] : 0;
        out[i] = un[i] + dt * (fr - fl) / w(i);
      }
      if (iters) *iters = it + 1;
      return true;
    }
  }
  return false;
}

inline void check_monotone_on(const FluxModel& f, double lo, double hi) {
  for (int k = 0; k <= 2000; ++k) {
    double s = lo + (hi - lo) * k / 2000;
    if (!(f.d(s) > 0))
      throw PreconditionError(cat("flux not strictly increasing at s = ", s, " (", f.id, ")"));
  }
}

// step with dt halving on Newton failure
inline void robust_step(const FluxModel& f, const std::vector<double>& un, double dt, double dx,
                        std::vector<double>& out, const SolveOptions& opt, double t) {
  if (implicit_step(f, un, dt, dx, out, opt)) return;
  std::vector<double> cur = un, nxt;
  for (int h = 1; h <= opt.max_halvings; ++h) {
    int pieces = 1 << h;
    double sub = dt / pieces;
    cur = un;
    bool ok = true;
    for (int k = 0; k < pieces && ok; ++k) {
      ok = implicit_step(f, cur, sub, dx, nxt, opt);
      if (ok) cur.swap(nxt);
    }
    if (ok) {
      out = cur;
      return;
    }
  }
  throw SolverError(cat("Newton failed at t = ", t, " with dt = ", dt, " after ", opt.max_halvings,
                        " halvings"),
                    t);
}

}  // namespace detail

inline Trajectory start_trajectory(const FluxModel& f, const std::vector<double>& u0, const Grid& g) {
  g.validate();
  if (static_cast<int>(u0.size()) != g.nx + 1)
    throw DomainError(cat("initial datum has ", u0.size(), " nodes, grid needs ", g.nx + 1));
  auto p = gradients(u0, g.dx());
  auto [lo, hi] = std::minmax_element(p.begin(), p.end());
  detail::check_monotone_on(f, *lo - 1e-9, *hi + 1e-9);
  Trajectory tr;
  tr.grid = g;
  tr.grid.times = {g.times.empty() ? 0.0 : g.times.front()};
  tr.u = {u0};
  tr.flux_id = f.id;
  tr.initial = u0;
  return tr;
}

// integrate on to t_end, appending every stride-th step and the end row
inline void advance(const FluxModel& f, Trajectory& tr, double t_end, const SolveOptions& opt = {}) {
  const double dx = tr.grid.dx();
  const double dt = opt.dt > 0 ? opt.dt : dx;
  double t = tr.grid.times.back();
  std::vector<double> cur = tr.u.back(), nxt;
  long step = 0;
  while (t < t_end - 1e-14 * (1 + t_end)) {
    double h = std::min(dt, t_end - t);
    detail::robust_step(f, cur, h, dx, nxt, opt, t);
    cur.swap(nxt);
    t = (t_end - t <= dt) ? t_end : t + h;
    ++step;
    if (step % opt.stride == 0 || t == t_end) {
      tr.grid.times.push_back(t);
      tr.u.push_back(cur);
    }
  }
}

inline Trajectory solve(const FluxModel& f, const std::vector<double>& u0, const Grid& g, double t_end,
                        const SolveOptions& opt = {}) {
  Trajectory tr = start_trajectory(f, u0, g);
  advance(f, tr, t_end, opt);
  return tr;
}

struct HitResult {
  double time;
  bool reached;
};

// integrate until pred holds on a row, landing the last snapshot on the first such
// time (bisection on the step length); appends to tr
template <class Pred>
HitResult solve_until_event(const FluxModel& f, Trajectory& tr, Pred&& pred, double t_max,
                            const SolveOptions& opt = {}) {
  const double dx = tr.grid.dx();
  const double dt = opt.dt > 0 ? opt.dt : dx;
  std::vector<double> cur = tr.u.back(), nxt;
  double t = tr.grid.times.back();
  if (pred(cur)) return {t, true};
  long step = 0;
  while (t < t_max) {
    double h = std::min(dt, t_max - t);
    detail::robust_step(f, cur, h, dx, nxt, opt, t);
    if (pred(nxt)) {
      double lo = 0, hi = h;
      std::vector<double> trial, best = nxt;
      for (int it = 0; it < 60 && hi - lo > 1e-13 * (1 + t); ++it) {
        double mid = 0.5 * (lo + hi);
        detail::robust_step(f, cur, mid, dx, trial, opt, t);
        if (pred(trial)) {
          hi = mid;
          best = trial;
        } else {
          lo = mid;
        }
      }
      t += hi;
      tr.grid.times.push_back(t);
      tr.u.push_back(best);
      return {t, true};
    }
    cur.swap(nxt);
    t += h;
    ++step;
    if (step % opt.stride == 0) {
      tr.grid.times.push_back(t);
      tr.u.push_back(cur);
    }
  }
  if (tr.grid.times.back() != t) {
    tr.grid.times.push_back(t);
    tr.u.push_back(cur);
  }
  return {t, false};
}

// integrate until the statistic reaches level
inline HitResult solve_until(const FluxModel& f, Trajectory& tr, Statistic st, double level,
                             double t_max, const SolveOptions& opt = {}) {
  const double dx = tr.grid.dx();
  return solve_until_event(
      f, tr,
      [&](const std::vector<double>& u) {
        double v = statistic(u, dx, st);
        return st == Statistic::max_ux ? v <= level : v >= level;
      },
      t_max, opt);
}

// rows of tr with ta <= t <= tb
inline Trajectory slice(const Trajectory& tr, double ta, double tb) {
  Trajectory s;
  s.grid = tr.grid;
  s.grid.times.clear();
  s.flux_id = tr.flux_id;
  for (int n = 0; n < tr.nt(); ++n)
    if (tr.t(n) >= ta && tr.t(n) <= tb) {
      s.grid.times.push_back(tr.t(n));
      s.u.push_back(tr.u[n]);
    }
  if (s.u.empty()) throw DomainError(cat("no rows in [", ta, ", ", tb, "]"));
  s.initial = s.u.front();
  return s;
}

// linear interpolation between the bracketing snapshots
inline double first_hitting_time(const Trajectory& tr, Statistic st, double level) {
  const double dx = tr.grid.dx();
  double prev = statistic(tr.u[0], dx, st);
  auto hit = [&](double v) { return st == Statistic::max_ux ? v <= level : v >= level; };
  if (hit(prev)) return tr.t(0);
  double closest = prev, closest_t = tr.t(0);
  for (int n = 1; n < tr.nt(); ++n) {
    double v = statistic(tr.u[n], dx, st);
    if (hit(v)) {
      double a = tr.t(n - 1), b = tr.t(n);
      return a + (b - a) * (level - prev) / (v - prev);
    }
    if (std::abs(v - level) < std::abs(closest - level)) {
      closest = v;
      closest_t = tr.t(n);
    }
    prev = v;
  }
  throw NotReachedError(cat("level ", level, " not reached by t = ", tr.grid.times.back(),
                            "; closest ", closest),
                        closest, closest_t);
}

struct DecayBound {
  double kappa, lambda, m;
  double theta, theta_tilde;
  double gamma;
};

inline DecayBound gamma_bound(const FluxModel& f, double u0_grad_sup, double kappa, double lambda,
                              double m, double L) {
  if (!(kappa > 0 && kappa < 1 && lambda > 0 && m > 1))
    throw DomainError("gamma_bound needs kappa in (0,1), lambda > 0, m > 1");
  const double R = u0_grad_sup * m / (m - 1);
  const double h = 1e-4;
  DecayBound d{kappa, lambda, m, std::numeric_limits<double>::infinity(), 0, 0};
  const int n = std::max(2, static_cast<int>(std::ceil(2 * R / h)));
  for (int k = 0; k <= n; ++k) {
    double s = -R + 2 * R * k / n;
    d.theta = std::min(d.theta, f.d(s));
    d.theta_tilde = std::max(d.theta_tilde, std::abs(f(s + h) - 2 * f(s) + f(s - h)) / (h * h));
  }
  // second differences of an affine flux are pure rounding
  if (d.theta_tilde < 1e-6) d.theta_tilde = 0;
  double e = std::exp(-lambda * L);
  double big = std::max(u0_grad_sup * d.theta_tilde / ((1 - kappa) * d.theta) + 1, m);
  d.gamma = kappa * d.theta * lambda * lambda * e / (big - e);
  return d;
}

// ||u - mean||_inf + ||u_x||_inf
inline double w1inf_deviation(const std::vector<double>& u, double dx, double ubar) {
  double a = 0, b = 0;
  for (double v : u) a = std::max(a, std::abs(v - ubar));
  for (double p : gradients(u, dx)) b = std::max(b, std::abs(p));
  return a + b;
}

struct DecayFit {
  double rate;
  double residual;
  int used;
};

inline DecayFit decay_rate_estimate(const Trajectory& tr, double noise_floor = 1e-10) {
  const double dx = tr.grid.dx();
  const double ubar = mean(tr.initial, dx);
  std::vector<double> ts, ls;
  for (int n = 0; n < tr.nt(); ++n) {
    double v = w1inf_deviation(tr.u[n], dx, ubar);
    if (v > noise_floor * (1 + std::abs(ubar))) {
      ts.push_back(tr.t(n));
      ls.push_back(std::log(v));
    }
  }
  if (ts.size() < 10)
    throw EstimateError(cat("only ", ts.size(), " snapshots above the noise floor"));
  auto fit = fit_line(ts, ls);
  double res = 0;
  for (std::size_t k = 0; k < ts.size(); ++k)
    res += sq(ls[k] - fit.intercept - fit.slope * ts[k]);
  return {-fit.slope, std::sqrt(res / ts.size()), static_cast<int>(ts.size())};
}

// nodal u_x: mean of adjacent cell gradients, zero on the boundary
inline std::vector<double> nodal_gradient(const std::vector<double>& u, double dx) {
  auto p = gradients(u, dx);
  std::vector<double> g(u.size(), 0.0);
  for (std::size_t i = 1; i + 1 < u.size(); ++i) g[i] = 0.5 * (p[i - 1] + p[i]);
  return g;
}

inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr, int every = 1) {
  os << "t,x,u,ux\n";
  os.precision(12);
  const double dx = tr.grid.dx();
  for (int n = 0; n < tr.nt(); n += every) {
    auto g = nodal_gradient(tr.u[n], dx);
    for (int i = 0; i <= tr.grid.nx; ++i)
      os << tr.t(n) << ',' << tr.grid.x(i) << ',' << tr.u[n][i] << ',' << g[i] << '\n';
  }
}

}  // namespace fbd
