#pragma once

#include "fbd/field.hpp"

namespace fbd {

// auxiliary pair ------------------------------------------------------------

// (u, v) from a solver trajectory: v is the x-primitive of u, b = sup|u_t| + 1.
inline SubsolutionField build_auxiliary(const Trajectory& tr, const FluxModel& flux) {
  if (!tr.flux_id.empty() && tr.flux_id != flux.id)
    throw PreconditionError(cat("trajectory was solved with flux '", tr.flux_id, "', not '", flux.id, "'"));
  if (tr.nt() < 2) throw PreconditionError("trajectory needs at least two time rows");
  SubsolutionField w = field_from_rows(tr.grid.L, tr.grid.times, tr.u);
  double ut = 0;
  for (int n = 0; n + 1 < w.nt(); ++n)
    for (int i = 0; i < w.nx; ++i) ut = std::max(ut, std::abs(w.jac(i, n).ut));
  w.b = ut + 1;
  return w;
}

inline SubsolutionField build_auxiliary(const Trajectory& tr, const ModifiedFlux& flux) {
  return build_auxiliary(tr, flux.as_model());
}

// Q sets --------------------------------------------------------------------

struct RegionSet {
  std::vector<unsigned char> cells;     // lo < u_x < hi
  std::vector<unsigned char> level_lo;  // cells straddling u_x = lo
  std::vector<unsigned char> level_hi;
  long count = 0;
  double measure = 0;
  double t_inf = nan_v, t_sup = nan_v;
  double x_min = nan_v, x_max = nan_v;
  double boundary_distance = nan_v;  // to the lateral boundary of the domain
  bool bounded = true;               // does not reach the last time row
  bool empty() const { return count == 0; }
};

inline RegionSet detect_Q_sets(const SubsolutionField& w, double lo, double hi) {
  RegionSet R;
  const int N = w.ncells(), nx = w.nx, nr = w.nt() - 1;
  R.cells.assign(N, 0);
  R.level_lo.assign(N, 0);
  R.level_hi.assign(N, 0);
  std::vector<double> ux(N);
  for (int n = 0; n < nr; ++n)
    for (int i = 0; i < nx; ++i) ux[w.cell(i, n)] = w.jac(i, n).ux;
  double tmin = INFINITY, tmax = -INFINITY, xmin = INFINITY, xmax = -INFINITY;
  for (int n = 0; n < nr; ++n)
    for (int i = 0; i < nx; ++i) {
      long c = w.cell(i, n);
      double p = ux[c];
      if (p > lo && p < hi) {
        R.cells[c] = 1;
        ++R.count;
        R.measure += w.area(n);
        tmin = std::min(tmin, w.t[n]);
        tmax = std::max(tmax, w.t[n + 1]);
        xmin = std::min(xmin, i * w.dx());
        xmax = std::max(xmax, (i + 1) * w.dx());
        if (n == nr - 1) R.bounded = false;
      }
      double a = p, b = p;
      const int di[4] = {-1, 1, 0, 0}, dn[4] = {0, 0, -1, 1};
      for (int k = 0; k < 4; ++k) {
        int ii = i + di[k], nn = n + dn[k];
        if (ii < 0 || ii >= nx || nn < 0 || nn >= nr) continue;
        a = std::min(a, ux[w.cell(ii, nn)]);
        b = std::max(b, ux[w.cell(ii, nn)]);
      }
      if (a <= lo && lo <= b) R.level_lo[c] = 1;
      if (a <= hi && hi <= b) R.level_hi[c] = 1;
    }
  if (R.count) {
    R.t_inf = tmin;
    R.t_sup = tmax;
    R.x_min = xmin;
    R.x_max = xmax;
    R.boundary_distance = std::min(xmin, w.L - xmax);
  }
  return R;
}

inline RegionSet detect_Q_sets(const Trajectory& tr, double lo, double hi) {
  return detect_Q_sets(field_from_rows(tr.grid.L, tr.grid.times, tr.u), lo, hi);
}

// gauge ---------------------------------------------------------------------

struct GaugeResult {
  double gamma = nan_v;
  double measure = 0;
  long cells = 0;
  long clamped = 0;              // marginal cells pulled back into [0,1]
  std::vector<double> per_cell;  // cell average of Z, NaN off the region
};

// Mean over the region of the position of (u_x, v_t) across the band.  Cells off
// the closed band by more than `tol` make w fail to be a subsolution.
inline GaugeResult gauge(const SubsolutionField& w, const Band& band, bool reference = false,
                         double tol = 1e-9) {
  GaugeResult g;
  g.per_cell.assign(w.ncells(), nan_v);
  std::vector<long> bad;
  double acc = 0;
  for (int n = 0; n + 1 < w.nt(); ++n)
    for (int i = 0; i < w.nx; ++i) {
      long c = w.cell(i, n);
      if (!w.region[c]) continue;
      CellJacobian j = w.jac(i, n, reference);
      double slack = tol * (1 + std::abs(j.ux) + std::abs(j.vt));
      if (j.vt < band.r1() - slack || j.vt > band.r2() + slack) {
        bad.push_back(c);
        continue;
      }
      double r = std::clamp(j.vt, band.r1(), band.r2());
      double z = 0;
      const CellPatch* p = reference ? nullptr : w.patch(c);
      if (p) {
        // affine in u_x: phases average back to the base point during the ramps
        double zp = band.gauge(j.ux + p->lam_plus, r), zm = band.gauge(j.ux - p->lam_minus, r);
        double frac = 2 * p->ramp / w.dt(n);
        z = (1 - frac) * (p->theta_plus() * zp + p->theta_minus() * zm) + frac * band.gauge(j.ux, r);
      } else {
        z = band.gauge(j.ux, r);
      }
      if (z < -slack || z > 1 + slack) {
        bad.push_back(c);
        continue;
      }
      if (z <= 0 || z >= 1 || r != j.vt) ++g.clamped;
      z = std::clamp(z, 0.0, 1.0);
      g.per_cell[c] = z;
      acc += z * w.area(n);
      g.measure += w.area(n);
      ++g.cells;
    }
  if (!bad.empty())
    throw NotSubsolutionError(cat(bad.size(), " region cells lie outside the band"), bad);
  if (g.measure > 0) g.gamma = acc / g.measure;
  return g;
}

// distance to the inclusion -------------------------------------------------

struct DistanceResult {
  double integral = 0;
  double measure = 0;
  double max_cell = 0;           // largest cell average
  std::vector<double> per_cell;  // cell average, NaN off the region
};

// distance from (ux, ut, vx - u, vt) to K_b(u)
inline double matrix_distance(const Band& band, double ux, double ut, double vx_minus_u, double vt,
                              double b) {
  return std::sqrt(sq(band.dist_K(ux, vt)) + sq(std::max(0.0, std::abs(ut) - b)) + sq(vx_minus_u));
}

// Integral over the region.  Ramp stretches of patched cells are bounded through
// the Lipschitz property unless `exact_ramps` asks for quadrature.
inline DistanceResult distance_to_inclusion(const SubsolutionField& w, const Band& band,
                                            bool exact_ramps = false) {
  DistanceResult d;
  d.per_cell.assign(w.ncells(), nan_v);
  const double h = w.dx();
  for (int n = 0; n + 1 < w.nt(); ++n)
    for (int i = 0; i < w.nx; ++i) {
      long c = w.cell(i, n);
      if (!w.region[c]) continue;
      CellJacobian j = w.jac(i, n);
      const double A = w.area(n), k = w.dt(n);
      double cell = 0;
      const CellPatch* p = w.patch(c);
      if (!p) {
        cell = matrix_distance(band, j.ux, j.ut, j.vx - j.u, j.vt, w.b) * A;
      } else {
        const double off[2] = {p->lam_plus, -p->lam_minus};
        const double th[2] = {p->theta_plus(), p->theta_minus()};
        const double rho = p->ramp;
        const double phit = p->amp(h) * p->chi_d_sup(), psit = p->psi_sup(h) * p->chi_d_sup();
        double plateau = 0;
        double dph[2];
        for (int s = 0; s < 2; ++s) {
          dph[s] = matrix_distance(band, j.ux + off[s], j.ut, j.vx - j.u, j.vt, w.b);
          plateau += th[s] * dph[s];
        }
        cell = plateau * h * (k - 2 * rho);
        if (exact_ramps) {
          for (int q = 0; q < 4; ++q) {
            double chi = smootherstep(0.5 * (1 + gl4_nodes()[q]));
            for (int s = 0; s < 2; ++s)
              cell += 2 * h * rho * 0.5 * gl4_weights()[q] * th[s] *
                      matrix_distance(band, j.ux + chi * off[s], j.ut, j.vx - j.u, j.vt, w.b);
          }
        } else {
          double ramp = 0;
          for (int s = 0; s < 2; ++s) ramp += th[s] * (dph[s] + 0.5 * std::abs(off[s]));
          ramp += psit + std::max(0.0, std::abs(j.ut) + phit - w.b);
          cell += 2 * h * rho * ramp;
        }
      }
      d.per_cell[c] = cell / A;
      d.max_cell = std::max(d.max_cell, cell / A);
      d.integral += cell;
      d.measure += A;
    }
  return d;
}

// standalone oscillation ----------------------------------------------------

struct Rect {
  double x0 = 0, x1 = 1, t0 = 0, t1 = 1;
  double width() const { return x1 - x0; }
  double height() const { return t1 - t0; }
  double measure() const { return width() * height(); }
};

struct OscillationOptions {
  int nx = 0;                // 0 picks the coarsest admissible grid
  long long max_nodes = 20'000'000;
};

// phi(x,t) = chi(t) S(x) on node grids, separable, with psi the exact x-primitive of
// the piecewise linear phi.  Slopes of S are -lam1 and lam2 on integer cell runs.
struct OscillationPatch {
  Rect rect;
  double lam1 = 0, lam2 = 0, epsilon = 0, ramp = 0;
  int nx = 0, nt = 0, period_cells = 0;
  std::vector<double> S, Psi, chi, chi_d;  // S, Psi on x nodes; chi on t nodes

  double dx() const { return rect.width() / nx; }
  double dt() const { return rect.height() / nt; }
  double x(int i) const { return rect.x0 + i * dx(); }
  double t(int n) const { return rect.t0 + n * dt(); }
  double phi(int i, int n) const { return chi[n] * S[i]; }
  double psi(int i, int n) const { return chi[n] * Psi[i]; }
  double phi_x(int i, int n) const { return chi[n] * (S[i + 1] - S[i]) / dx(); }

  struct Measured {
    double frac_minus = 0, frac_plus = 0;  // fractions of the rectangle
    double sup_phi = 0, sup_psi = 0, sup_phi_t = 0, sup_psi_t = 0;
    double max_row_integral = 0;  // |int phi dx| over rows
    double max_psi_x_gap = 0;     // cell slope of psi against the cell mean of phi
    double psi_end = 0;           // psi at the right edge
    double slope_lo = 0, slope_hi = 0;
    double two_slope_mass = 0;    // share of cells carrying exactly one of the slopes
  };
  Measured measure() const;
};

inline OscillationPatch::Measured OscillationPatch::measure() const {
  Measured m;
  const double h = dx(), k = dt();
  double minus_x = 0, plus_x = 0;
  m.slope_lo = INFINITY;
  m.slope_hi = -INFINITY;
  for (int i = 0; i < nx; ++i) {
    double sl = (S[i + 1] - S[i]) / h;
    m.slope_lo = std::min(m.slope_lo, sl);
    m.slope_hi = std::max(m.slope_hi, sl);
    if (std::abs(sl + lam1) <= 1e-9 * lam1) minus_x += h;
    if (std::abs(sl - lam2) <= 1e-9 * lam2) plus_x += h;
    m.max_psi_x_gap = std::max(m.max_psi_x_gap, std::abs((Psi[i + 1] - Psi[i]) / h - 0.5 * (S[i] + S[i + 1])));
  }
  double full_t = 0;
  for (int n = 0; n < nt; ++n)
    if (chi[n] == 1 && chi[n + 1] == 1) full_t += k;
  m.frac_minus = minus_x * full_t / rect.measure();
  m.frac_plus = plus_x * full_t / rect.measure();
  m.two_slope_mass = m.frac_minus + m.frac_plus;
  double sS = 0, sP = 0;
  for (int i = 0; i <= nx; ++i) {
    sS = std::max(sS, std::abs(S[i]));
    sP = std::max(sP, std::abs(Psi[i]));
  }
  double cmax = 0, cdmax = 0;
  for (int n = 0; n <= nt; ++n) {
    cmax = std::max(cmax, std::abs(chi[n]));
    cdmax = std::max(cdmax, std::abs(chi_d[n]));
  }
  m.sup_phi = sS * cmax;
  m.sup_psi = sP * cmax;
  m.sup_phi_t = sS * cdmax;
  m.sup_psi_t = sP * cdmax;
  for (int n = 0; n <= nt; ++n) {
    double row = 0;
    for (int i = 0; i < nx; ++i) row += 0.5 * h * (phi(i, n) + phi(i + 1, n));
    m.max_row_integral = std::max(m.max_row_integral, std::abs(row));
  }
  m.psi_end = std::abs(Psi[nx]);
  return m;
}

inline OscillationPatch generate_oscillation(const Rect& rect, double lam1, double lam2, double eps,
                                             const OscillationOptions& opt = {}) {
  if (!(lam1 > 0 && lam2 > 0 && eps > 0)) throw DomainError("oscillation needs positive slopes and epsilon");
  if (!(rect.width() > 0 && rect.height() > 0)) throw DomainError("empty rectangle");
  const double th_minus = lam2 / (lam1 + lam2), th_plus = lam1 / (lam1 + lam2);
  const double X = rect.width(), T = rect.height();

  // smallest period whose integer runs reproduce the fractions to eps/4
  int q = 0, p = 0, adj = 0;
  double a = 0;
  for (p = 1; p < 100000; ++p) {
    q = static_cast<int>(std::floor(p * lam2 / lam1));
    if (q < 1) continue;
    a = q * lam1 - p * lam2;  // in (-lam1, 0]
    adj = std::abs(a) <= 1e-12 * lam1 ? 0 : 2;
    double m = 2.0 * q + 2.0 * p + adj;
    if (std::abs(2 * q / m - th_minus) <= eps / 4 && std::abs(2 * p / m - th_plus) <= eps / 4) break;
  }
  const int m = 2 * q + 2 * p + adj;
  const double ramp = 0.2 * eps * T;
  // S dips to -(q lam1 + |a|) dx; its sup times the ramp slope must stay below eps
  const double depth = q * lam1 + std::abs(a);
  const double amp_budget = 0.5 * std::min(eps, eps * ramp / 1.875);
  const double dx_max = amp_budget / depth;
  long long cells_needed = static_cast<long long>(std::ceil(X / dx_max / m)) * m;
  int nt = static_cast<int>(std::ceil(T / (ramp / 16)));
  if (opt.nx > 0 && opt.nx < cells_needed)
    throw ResolutionError(cat("epsilon ", eps, " needs at least ", cells_needed + 1, " x nodes, grid has ", opt.nx + 1),
                          cells_needed + 1);
  long long nx = opt.nx > 0 ? ((opt.nx + m - 1) / m) * m : cells_needed;
  if ((nx + 1) + (nt + 1) > opt.max_nodes)
    throw ResolutionError(cat("epsilon ", eps, " needs ", nx + 1, " x nodes"), nx + 1);

  OscillationPatch P;
  P.rect = rect;
  P.lam1 = lam1;
  P.lam2 = lam2;
  P.epsilon = eps;
  P.ramp = ramp;
  P.nx = static_cast<int>(nx);
  P.nt = nt;
  P.period_cells = m;
  std::vector<double> slopes;
  slopes.insert(slopes.end(), q, -lam1);
  if (adj) slopes.push_back(a);
  slopes.insert(slopes.end(), 2 * p, lam2);
  if (adj) slopes.push_back(a);
  slopes.insert(slopes.end(), q, -lam1);
  const double h = X / nx;
  P.S.assign(nx + 1, 0.0);
  P.Psi.assign(nx + 1, 0.0);
  for (long long i = 0; i < nx; ++i) {
    // restart every period so rounding cannot accumulate
    P.S[i + 1] = (i + 1) % m == 0 ? 0.0 : P.S[i] + slopes[i % m] * h;
    P.Psi[i + 1] = P.Psi[i] + 0.5 * h * (P.S[i] + P.S[i + 1]);
  }
  P.chi.resize(nt + 1);
  P.chi_d.resize(nt + 1);
  for (int n = 0; n <= nt; ++n) {
    double tau = T * n / nt;
    P.chi[n] = smootherstep(tau / ramp) * smootherstep((T - tau) / ramp);
    P.chi_d[n] = (smootherstep_d(tau / ramp) * smootherstep((T - tau) / ramp) -
                  smootherstep(tau / ramp) * smootherstep_d((T - tau) / ramp)) / ramp;
  }
  return P;
}

// density step --------------------------------------------------------------

struct DensityOptions {
  long k_start = 6;
  long k_max = 1L << 30;
  double index_safety = 1.01;
  double exclusion_share = 0.5;  // of the delta/k budget spent on cells kept out of G
};

struct StepReport {
  bool short_circuit = false;
  double delta = 0, epsilon = 0, eta = 0;
  std::uint64_t seed = 0;
  double measure = 0;
  double dist_before = 0, dist_after = 0;
  double gamma_ref = nan_v, gamma_before = nan_v, gamma_after = nan_v;
  long k = 0;
  long l = 0;
  double kappa = 0, tau = 0;
  double d0 = 0, d1 = 0, lip = 0, diam = 0;
  double d_prime = 0, d_second = 0, b_prime = 0;
  double beta_plus = 0, beta_minus = 0;
  double eps_i = 0;
  long n_region = 0, n_G = 0, n_excluded = 0, n_I1_plus = 0, n_I1_minus = 0, n_I2 = 0;
  double sup_w_change = 0;  // |w_eta - w|
  double sup_u_drift = 0;   // |u_eta - u*|
  double sup_ut_drift = 0;  // |(u_eta)_t - u*_t|
  double strict_margin = 0; // least band clearance of any micro phase in the region
  double ut_margin = 0;     // b - sup|(u_eta)_t|
  // the six goal clauses, in order: closeness to w, to u*, to u*_t, gauge drift,
  // strictness, distance budget
  std::array<bool, 6> clause{};
  bool ok() const { return std::all_of(clause.begin(), clause.end(), [](bool b) { return b; }); }
};

struct DensityResult {
  SubsolutionField w;
  StepReport report;
};

namespace detail {

inline double sup_u_gap(const SubsolutionField& w) {
  double m = 0;
  for (std::size_t k = 0; k < w.u.size(); ++k) m = std::max(m, std::abs(w.u[k] - w.u_ref[k]));
  return m;
}

inline double sup_ut_gap(const SubsolutionField& w) {
  double m = 0;
  for (int n = 0; n + 1 < w.nt(); ++n)
    for (int i = 0; i < w.nx; ++i) m = std::max(m, std::abs(w.jac(i, n).ut - w.jac(i, n, true).ut));
  return m;
}

// least clearance from the band boundary and largest |u_t| over all region micro phases
inline std::pair<double, double> strictness(const SubsolutionField& w, const Band& band) {
  double clear = INFINITY, ut = 0;
  const double h = w.dx();
  for (int n = 0; n + 1 < w.nt(); ++n)
    for (int i = 0; i < w.nx; ++i) {
      long c = w.cell(i, n);
      if (!w.region[c]) continue;
      CellJacobian j = w.jac(i, n);
      const CellPatch* p = w.patch(c);
      auto gap = [&](double s, double r) { return band.inside(s, r) ? band.dist_boundary(s, r) : -band.dist_boundary(s, r); };
      if (!p) {
        clear = std::min(clear, gap(j.ux, j.vt));
        ut = std::max(ut, std::abs(j.ut));
      } else {
        // v_t moves by at most the psi_t bound on the ramps
        double psit = p->psi_sup(h) * p->chi_d_sup();
        clear = std::min({clear, gap(j.ux + p->lam_plus, j.vt) - psit, gap(j.ux - p->lam_minus, j.vt) - psit,
                          gap(j.ux, j.vt) - psit});
        ut = std::max(ut, std::abs(j.ut) + p->amp(h) * p->chi_d_sup());
      }
    }
  return {clear, ut};
}

}  // namespace detail

inline void measure_clauses(const SubsolutionField& before, const SubsolutionField& after, const Band& band,
                            StepReport& R) {
  R.dist_after = distance_to_inclusion(after, band).integral;
  R.gamma_after = gauge(after, band).gamma;
  const double h = after.dx();
  double amp = 0, phit = 0;
  for (std::size_t c = 0; c < after.patch_of.size(); ++c) {
    const CellPatch* p = after.patch(static_cast<long>(c));
    if (!p || before.patch(static_cast<long>(c))) continue;
    amp = std::max({amp, p->amp(h), p->psi_sup(h)});
    phit = std::max(phit, p->amp(h) * p->chi_d_sup());
  }
  double u0 = 0;
  for (std::size_t k = 0; k < after.u.size(); ++k) u0 = std::max(u0, std::abs(after.u[k] - before.u[k]) + std::abs(after.v[k] - before.v[k]));
  R.sup_w_change = u0 + amp;
  R.sup_u_drift = detail::sup_u_gap(after) + amp;
  R.sup_ut_drift = detail::sup_ut_gap(after) + phit;
  auto [clear, ut] = detail::strictness(after, band);
  R.strict_margin = clear;
  R.ut_margin = after.b - ut;
  R.clause[0] = R.sup_w_change < R.eta;
  R.clause[1] = R.sup_u_drift < 0.5 * R.epsilon;
  R.clause[2] = R.sup_ut_drift < 0.5 * R.epsilon;
  R.clause[3] = std::abs(R.gamma_after - R.gamma_ref) < 0.5 * R.epsilon;
  R.clause[4] = R.strict_margin > 0 && R.ut_margin > 0;
  R.clause[5] = R.dist_after <= R.delta * R.measure;
}

// One pass of the laminate construction on the region of w.  The region must be a
// strict subsolution; patches are laid on the region cells that sit farther than
// delta/k from both branch graphs.
inline DensityResult density_step(const SubsolutionField& w, const Band& band, double delta, double epsilon,
                                  double eta, std::uint64_t seed = 1, const DensityOptions& opt = {}) {
  if (!(delta > 0 && epsilon > 0 && eta > 0)) throw DomainError("delta, epsilon and eta must be positive");
  StepReport R;
  R.delta = delta;
  R.epsilon = epsilon;
  R.eta = eta;
  R.seed = seed;
  R.measure = w.region_measure();
  for (auto f : w.region) R.n_region += f;
  R.gamma_ref = gauge(w, band, true).gamma;
  R.gamma_before = gauge(w, band).gamma;
  R.dist_before = distance_to_inclusion(w, band).integral;
  {
    auto [clear, ut] = detail::strictness(w, band);
    if (!(clear > 0) || !(ut < w.b)) {
      std::vector<long> bad;
      throw NotSubsolutionError(cat("input is not a strict subsolution (clearance ", clear, ", sup|u_t| ", ut,
                                    ", b ", w.b, ")"),
                                bad);
    }
  }
  if (R.dist_before <= delta * R.measure) {
    R.short_circuit = true;
    measure_clauses(w, w, band, R);
    return {w, R};
  }
  if (!w.patches.empty())
    throw StepFailure("nesting", "input already carries laminates and misses the budget; start from the base field");

  const BranchPair& bp = band.pair();
  R.d0 = bp.separation;
  R.d1 = bp.spread;
  R.lip = bp.lip;
  R.diam = band.diameter();
  R.l = static_cast<long>(std::floor(34 * R.d1 / sq(R.d0))) + 1;
  R.d_second = 0.5 * (0.5 * epsilon - std::abs(R.gamma_before - R.gamma_ref));
  if (!(R.d_second > 0)) throw StepFailure("gauge-share", "input gauge already drifted by epsilon/2");
  R.kappa = R.d_second / (R.l * R.lip);
  const double su = detail::sup_u_gap(w), sut = detail::sup_ut_gap(w);

  // sup |u_t| over the region and the b margin
  double ut_max = 0;
  for (int n = 0; n + 1 < w.nt(); ++n)
    for (int i = 0; i < w.nx; ++i)
      if (w.region[w.cell(i, n)]) ut_max = std::max(ut_max, std::abs(w.jac(i, n).ut));
  R.b_prime = w.b - ut_max;

  // least k meeting the three k conditions; each is monotone in k, so double to
  // bracket and bisect
  std::string failing;
  auto admissible = [&](long k) {
    double dk = delta / k;
    if (!(dk <= R.kappa)) {
      failing = "k-continuity";
      return false;
    }
    if (!(1.25 * dk <= R.d_second / R.l)) {
      failing = "k-gauge";
      return false;
    }
    double bpl = band.beta_plus(delta / (k - 1)), bmi = band.beta_minus(delta / (k - 1));
    for (int q = 0; q <= 200; ++q) {
      double r = band.r1() + (band.r2() - band.r1()) * q / 200;
      if (!(band.gm(r) + bmi < band.gp(r) - bpl)) {
        failing = "k-bands";
        return false;
      }
    }
    return true;
  };
  long lo = opt.k_start - 1, hi = opt.k_start;
  while (!admissible(hi)) {
    if (2 * hi > opt.k_max) throw StepFailure(failing, cat("no k up to ", opt.k_max, " meets it at this resolution"));
    lo = hi;
    hi *= 2;
  }
  while (hi - lo > 1) {
    long mid = lo + (hi - lo) / 2;
    (admissible(mid) ? hi : lo) = mid;
  }
  R.k = hi;
  R.beta_plus = band.beta_plus(delta / (R.k - 1));
  R.beta_minus = band.beta_minus(delta / (R.k - 1));
  R.tau = delta / R.k;

  // classify region cells
  struct Cell {
    long c;
    int i, n;
    double clear, dist;
    int kind;  // 0 I2, 1 I1+, 2 I1-
  };
  std::vector<Cell> cells;
  const double tol = R.tau * opt.index_safety;
  for (int n = 0; n + 1 < w.nt(); ++n)
    for (int i = 0; i < w.nx; ++i) {
      long c = w.cell(i, n);
      if (!w.region[c]) continue;
      CellJacobian j = w.jac(i, n);
      double dp = band.dist_plus(j.ux, j.vt), dm = band.dist_minus(j.ux, j.vt);
      Cell cc{c, i, n, band.dist_boundary(j.ux, j.vt), std::min(dp, dm) * w.area(n), 0};
      if (dp <= tol) cc.kind = 1;
      else if (dm <= tol) cc.kind = 2;
      cells.push_back(cc);
    }

  // G: drop the cells closest to the band boundary while their distance mass stays
  // inside a share of the delta/k budget
  std::vector<std::size_t> order(cells.size());
  for (std::size_t q = 0; q < order.size(); ++q) order[q] = q;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cells[a].clear < cells[b].clear; });
  std::vector<unsigned char> inG(cells.size(), 1);
  double budget = opt.exclusion_share * R.tau * R.measure, spent = 0;
  for (std::size_t q : order) {
    if (spent + cells[q].dist > budget) break;
    spent += cells[q].dist;
    inG[q] = 0;
    ++R.n_excluded;
  }
  R.d_prime = INFINITY;
  for (std::size_t q = 0; q < cells.size(); ++q) {
    if (!inG[q]) continue;
    ++R.n_G;
    R.d_prime = std::min(R.d_prime, cells[q].clear);
    if (cells[q].kind == 1) ++R.n_I1_plus;
    else if (cells[q].kind == 2) ++R.n_I1_minus;
    else ++R.n_I2;
  }
  if (R.n_G == 0) throw StepFailure("cover", "no cell left in G");

  const double N = static_cast<double>(R.n_G), Qm = R.measure;
  struct Term {
    const char* name;
    double value;
  } terms[] = {
      {"eta", eta},
      {"closeness-u", 0.5 * epsilon - su},
      {"closeness-ut", 0.5 * epsilon - sut},
      {"b-margin", R.b_prime / 4},
      {"distance-share", delta / (4.0 * R.k)},
      {"boundary-gap", R.d_prime / 4},
      {"continuity", R.kappa / 2},
      {"gauge-share", R.d_second * Qm / (14 * N)},
      {"ramp-share", delta * Qm / (2 * N * R.k * R.diam)},
  };
  double emin = INFINITY;
  for (const auto& t : terms) {
    if (!(t.value > 0)) throw StepFailure(t.name, cat("budget is ", t.value));
    emin = std::min(emin, t.value);
  }
  R.eps_i = 0.5 * emin;

  SubsolutionField out = w;
  out.ensure_patch_storage();
  Rng rng(seed);
  const double h = w.dx();
  for (std::size_t q = 0; q < cells.size(); ++q) {
    if (!inG[q] || cells[q].kind != 0) continue;
    const Cell& cc = cells[q];
    CellJacobian j = w.jac(cc.i, cc.n);
    double sp = band.offset_plus(j.vt, R.tau), sm = band.offset_minus(j.vt, R.tau);
    if (!(sp > j.ux) || !(sm < j.ux))
      throw StepFailure("offset", cat("no point at distance ", R.tau, " beside the cell state (", j.ux, ", ", j.vt, ")"));
    CellPatch p;
    p.lam_plus = sp - j.ux;
    p.lam_minus = j.ux - sm;
    p.ramp = std::min(0.25 * w.dt(cc.n), 0.25 * R.eps_i / h);
    double amp = 0.5 * std::min(R.eps_i, R.eps_i * p.ramp / 1.875);
    p.periods = std::ceil(p.mu() * h / (2 * amp));
    p.flip = rng.coin();
    out.patch_of[cc.c] = static_cast<int>(out.patches.size());
    out.patches.push_back(p);
  }
  measure_clauses(w, out, band, R);
  return {std::move(out), R};
}

}  // namespace fbd
