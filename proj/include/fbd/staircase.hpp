#pragma once

#include <map>
#include <optional>

#include "fbd/verify.hpp"

namespace fbd {

enum class Scheme { hollig_smoothing, pm_smoothing, pm_blowup, pm_hierarchy, nf_allocation };

inline std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::hollig_smoothing: return "hollig_smoothing";
    case Scheme::pm_smoothing: return "pm_smoothing";
    case Scheme::pm_blowup: return "pm_blowup";
    case Scheme::pm_hierarchy: return "pm_hierarchy";
    case Scheme::nf_allocation: return "nf_allocation";
  }
  return "?";
}

inline Scheme scheme_from_string(const std::string& s) {
  for (Scheme k : {Scheme::hollig_smoothing, Scheme::pm_smoothing, Scheme::pm_blowup, Scheme::pm_hierarchy,
                   Scheme::nf_allocation})
    if (to_string(k) == s) return k;
  throw ConfigError(cat("unknown scheme '", s, "'"));
}

struct StaircaseConfig {
  Scheme scheme = Scheme::pm_blowup;
  int J = 4;
  double L = 1;
  int nx = 128;
  double dt = 0;  // 0: dx
  int stride = 4;
  // smoothing levels; NaN picks the defaults
  double r1 = nan_v, r2 = nan_v, r1p = nan_v, r2p = nan_v;
  // blow-up schedule overrides, r_0..r_J
  std::vector<double> r, rp;
  double nf_r0 = nan_v, nf_core = 0.1;
  int K_d = 4;
  double eta = 0.1, epsilon = 0.5;
  double zero_tol = nan_v;  // NaN: 1e-6 max(|m0|, M0)
  std::uint64_t seed = 1;
  double t_budget = 400;
  double tail = 1;
  bool density = true;

  SolveOptions solve_options() const {
    SolveOptions o;
    o.dt = dt;
    o.stride = stride;
    return o;
  }
};

// density ----------------------------------------------------------------------

struct DensityOutcome {
  SubsolutionField w;                // laminated field, or the base one
  std::vector<StepReport> reports;   // one per delta_k that ran
  std::string failure;               // constraint of the step that stopped the schedule
  long n_threshold = 0, n_region = 0, n_defect = 0, n_patched = 0;
  double region_measure = 0;
  double dist_base = 0, dist_final = 0;
  double gamma_base = nan_v, gamma_final = nan_v;
};

// Region = cells of the threshold set whose state lies strictly inside the band;
// threshold cells outside it are counted as defects.  The schedule delta_k =
// (D/|Q|)/k, k = 1..K_d, is applied to the base field each time; the last one wins.
inline DensityOutcome apply_density(const SubsolutionField& base, const Band& band, double lo, double hi,
                                    double epsilon, const StaircaseConfig& cfg, std::uint64_t seed) {
  DensityOutcome out;
  SubsolutionField w = base;
  auto q = detect_Q_sets(w, lo, hi);
  w.region.assign(w.ncells(), 0);
  for (int n = 0; n + 1 < w.nt(); ++n)
    for (int i = 0; i < w.nx; ++i) {
      long c = w.cell(i, n);
      if (!q.cells[c]) continue;
      ++out.n_threshold;
      CellJacobian j = w.jac(i, n);
      if (band.inside(j.ux, j.vt) && band.dist_boundary(j.ux, j.vt) > 1e-12) {
        w.region[c] = 1;
        ++out.n_region;
      } else {
        ++out.n_defect;
      }
    }
  out.region_measure = w.region_measure();
  out.w = w;
  if (out.n_region == 0) return out;
  out.dist_base = out.dist_final = distance_to_inclusion(w, band).integral;
  out.gamma_base = out.gamma_final = gauge(w, band).gamma;
  if (!cfg.density) return out;
  const double scale = out.dist_base / out.region_measure;
  for (int k = 1; k <= cfg.K_d; ++k) {
    try {
      auto res = density_step(w, band, scale / k, epsilon, cfg.eta, seed + 7919u * k);
      out.reports.push_back(res.report);
      out.w = std::move(res.w);
      out.dist_final = res.report.dist_after;
      out.gamma_final = res.report.gamma_after;
    } catch (const StepFailure& e) {
      out.failure = e.constraint;
      break;
    } catch (const NotSubsolutionError&) {
      out.failure = "not-strict";
      break;
    }
  }
  out.n_patched = static_cast<long>(out.w.patches.size());
  return out;
}

// union of two outcomes on disjoint regions of the same base field
inline SubsolutionField merge_laminates(const SubsolutionField& a, const SubsolutionField& b) {
  SubsolutionField out = a;
  for (std::size_t c = 0; c < b.region.size(); ++c) out.region[c] = out.region[c] || b.region[c];
  if (b.patches.empty()) return out;
  out.ensure_patch_storage();
  for (std::size_t c = 0; c < b.patch_of.size(); ++c) {
    const CellPatch* p = b.patch(static_cast<long>(c));
    if (!p || out.patch_of[c] >= 0) continue;
    out.patch_of[c] = static_cast<int>(out.patches.size());
    out.patches.push_back(*p);
  }
  return out;
}

inline double patch_amplitude(const SubsolutionField& w) {
  double m = 0;
  for (const auto& p : w.patches) m = std::max(m, p.amp(w.dx()));
  return m;
}

// largest |u_x| on the field: node gradients of every row and plus phases of laminates
inline double gradient_sup(const SubsolutionField& w) {
  double m = 0;
  const double h = w.dx();
  for (int n = 0; n < w.nt(); ++n)
    for (int i = 0; i < w.nx; ++i) m = std::max(m, std::abs(w.u[w.node(i + 1, n)] - w.u[w.node(i, n)]) / h);
  for (int n = 0; n + 1 < w.nt(); ++n)
    for (int i = 0; i < w.nx; ++i)
      if (const CellPatch* p = w.patch(w.cell(i, n))) {
        double ux = w.jac(i, n).ux;
        m = std::max({m, std::abs(ux + p->lam_plus), std::abs(ux - p->lam_minus)});
      }
  return m;
}

// reports ----------------------------------------------------------------------

struct StepRecord {
  int j = 0;
  double t_j = 0, t_next = 0;
  std::string flux_id;
  double r = nan_v, rp = nan_v, reach = nan_v;
  double gamma = nan_v, gamma_base = nan_v;
  double e = nan_v, d = nan_v;
  double energy_avg = nan_v;
  double blowup_bound = nan_v, ux_sup = nan_v;
  double stability_bound = nan_v, stability = nan_v;
  // allocation sandwich and energy chain
  double d0 = nan_v, d1 = nan_v, d0t = nan_v, d1t = nan_v, lower = nan_v, upper = nan_v;
  double energy_lo = nan_v;
  double concentration_bound = nan_v, concentration = nan_v;
  double epsilon = nan_v;
  double region_measure = 0;
  long n_threshold = 0, n_region = 0, n_defect = 0, n_patched = 0;
  double dist_base = nan_v, dist_final = nan_v;
  std::string density_failure;
  std::vector<StepReport> density;
  bool mirrored = false;

  bool gauge_ok() const { return gamma <= 1.5 * e; }
  bool energy_ok() const { return energy_avg <= d; }
  bool stability_ok() const { return stability <= stability_bound; }
  bool blowup_applies() const { return gamma < 0.5; }
  bool blowup_ok() const { return !blowup_applies() || ux_sup >= blowup_bound; }
};

struct SmoothingSummary {
  bool classical = false;
  double t_exit = nan_v;                 // plateaus left behind
  RegionSet q1, q2;                      // on the base field
  double outside_gap = 0;                // sup |u - u*| off the region
  double final_distance = nan_v, final_budget = nan_v;
  double plus_share = nan_v;             // measure of plus phases over the region
  EnvelopeReport envelopes;
  std::optional<DecayFit> decay;
  std::string decay_note;
};

struct StaircaseReport {
  Scheme scheme = Scheme::pm_blowup;
  std::string flux_id;
  std::uint64_t seed = 1;
  std::vector<StepRecord> steps;
  std::string scenario;   // hierarchy outcomes, e.g. "(2,1,2)"
  bool terminated = false;
  std::string handoff;    // case1, case2 or empty
  std::vector<std::string> notices;
  Composite composite;
  Trajectory base;        // u* glued over all steps
  double m0 = nan_v, M0 = nan_v, zero_tol = nan_v;
  // allocation
  double lambda0 = nan_v, target = nan_v;
  SmoothingSummary smoothing;
};

namespace detail {

inline void append_rows(Trajectory& all, const Trajectory& piece) {
  if (all.u.empty()) {
    all = piece;
    return;
  }
  for (int n = 0; n < piece.nt(); ++n) {
    if (piece.t(n) <= all.grid.times.back()) continue;
    all.grid.times.push_back(piece.t(n));
    all.u.push_back(piece.u[n]);
  }
}

inline Grid grid_at(const StaircaseConfig& cfg, double t0) {
  Grid g{cfg.L, cfg.nx, {t0}};
  return g;
}

// r' in (r, r_prev): the level whose outer branch point sits `gap` inside, else the midpoint
inline double prime_level(double r, double r_prev, const std::function<double(double)>& outer_point,
                          const std::function<double(double)>& sigma, double gap, double branch_edge,
                          bool plus_side) {
  double s;
  try {
    s = outer_point(r) + (plus_side ? -gap : gap);
  } catch (const DomainError&) {
    return 0.5 * (r + r_prev);  // branch point beyond the flux domain
  }
  bool beyond = plus_side ? s > branch_edge : s < branch_edge;
  if (beyond) {
    double v = sigma(s);
    double lo = std::min(r, r_prev), hi = std::max(r, r_prev);
    if (v > lo && v < hi) return v;
  }
  return 0.5 * (r + r_prev);
}

inline double zero_tolerance(const StaircaseConfig& cfg, double m0, double M0) {
  return std::isnan(cfg.zero_tol) ? 1e-6 * std::max(std::abs(m0), M0) : cfg.zero_tol;
}

inline SubsolutionField mirror_field(SubsolutionField w) {
  for (auto* a : {&w.u, &w.v, &w.u_ref, &w.v_ref})
    for (double& x : *a) x = -x;
  for (auto& p : w.patches) {
    std::swap(p.lam_plus, p.lam_minus);
    p.flip = !p.flip;
  }
  return w;
}

inline Trajectory mirror_trajectory(Trajectory tr, const std::string& id) {
  for (auto& row : tr.u)
    for (double& x : row) x = -x;
  for (double& x : tr.initial) x = -x;
  tr.flux_id = id;
  return tr;
}

}  // namespace detail

// blow-up -----------------------------------------------------------------------

struct BlowupSchedule {
  std::vector<double> r, rp;
  std::vector<std::string> notes;
};

// r_0 = 0.9 min(sigma(s2), 1, sigma(M0)), r_j = 0.9 min(r_{j-1}, 2^-j); r'_j puts the
// plus point 0.9 * 2^-j below s+_{r_j} when that level fits in (r_j, r_{j-1})
inline BlowupSchedule blowup_schedule(const FluxModel& pm, double M0, const StaircaseConfig& cfg) {
  BlowupSchedule S;
  const double top = pm(pm.lm.s2);
  const int J = cfg.J;
  if (!cfg.r.empty()) {
    if (static_cast<int>(cfg.r.size()) < J + 1) throw ConfigError(cat("r schedule needs ", J + 1, " levels"));
    S.r.assign(cfg.r.begin(), cfg.r.begin() + J + 1);
  } else {
    S.r.push_back(0.9 * std::min({top, 1.0, pm(M0)}));
    for (int j = 1; j <= J; ++j) S.r.push_back(0.9 * std::min(S.r.back(), std::ldexp(1.0, -j)));
  }
  if (!cfg.rp.empty()) {
    if (static_cast<int>(cfg.rp.size()) < J + 1) throw ConfigError(cat("r' schedule needs ", J + 1, " levels"));
    S.rp.assign(cfg.rp.begin(), cfg.rp.begin() + J + 1);
  } else {
    for (int j = 0; j <= J; ++j) {
      double prev = j == 0 ? top : S.r[j - 1];
      S.rp.push_back(detail::prime_level(
          S.r[j], prev, [&](double r) { return s_plus(pm, r); }, [&](double s) { return pm(s); },
          0.9 * std::ldexp(1.0, -j), pm.lm.s2, true));
    }
  }
  for (int j = 0; j <= J; ++j) {
    double prev = j == 0 ? top : S.r[j - 1];
    if (!(S.r[j] > 0 && S.r[j] < S.rp[j] && S.rp[j] < prev))
      throw ConfigError(cat("level ", j, " needs 0 < r_j < r'_j < r_{j-1}: got r = ", S.r[j], ", r' = ", S.rp[j]));
    if (j > 0 && !(S.r[j] < std::ldexp(1.0, -j)))
      S.notes.push_back(cat("r_", j, " = ", S.r[j], " is not below 2^-", j));
    double gap = s_plus(pm, S.r[j]) - s_plus(pm, S.rp[j]);
    if (!(gap < std::ldexp(1.0, -j)))
      S.notes.push_back(cat("level ", j, ": s+ gap ", gap, " is not below 2^-", j, " (midpoint r')"));
  }
  return S;
}

// d_j = 3 L s+_{r_j} reach / (2 (s+_{r'_j} - s-_{r'_j})) + L W(s-_{r'_j})
inline double blowup_energy_bound(const FluxModel& pm, const Potential& W, double L, double r, double rp,
                                  double reach) {
  double spp = s_plus(pm, rp), smp = s_minus(pm, rp);
  return 3 * L * s_plus(pm, r) * reach / (2 * (spp - smp)) + L * W(smp);
}

inline double blowup_gauge_bound(const FluxModel& pm, double rp, double reach) {
  return reach / (s_plus(pm, rp) - s_minus(pm, rp));
}

namespace detail {

// Case 0 = m0 < M0 from row u0 at time t0; appends steps and composite segments
inline void blowup_case1(const FluxModel& pm, const std::vector<double>& u0, double t0, const StaircaseConfig& cfg,
                         StaircaseReport& rep) {
  const double dx = cfg.L / cfg.nx;
  const double M0 = statistic(u0, dx, Statistic::max_ux);
  if (!(M0 > 0)) throw PreconditionError("blow-up needs max u0' > 0");
  auto S = blowup_schedule(pm, M0, cfg);
  for (auto& n : S.notes) rep.notices.push_back(n);
  const Potential W(pm);
  const double ubar = mean(u0, dx);
  std::vector<double> cur = u0;
  double t = t0;
  const SolveOptions opt = cfg.solve_options();
  for (int j = 0; j <= cfg.J; ++j) {
    const double r = S.r[j], rp = S.rp[j];
    const double reach = j == 0 ? M0 : s_minus(pm, S.r[j - 1]);
    FluxModel sj = modify_pm_blowup(pm, {r, rp, reach}).as_model();
    Trajectory tr = start_trajectory(sj, cur, grid_at(cfg, t));
    const double level = s_minus(pm, r);
    auto hit = solve_until(sj, tr, Statistic::max_ux, level, t + cfg.t_budget, opt);
    if (!hit.reached)
      throw NotReachedError(cat("step ", j, ": max u_x stays above ", level, " until t = ", hit.time),
                            statistic(tr.back(), dx, Statistic::max_ux), hit.time);

    StepRecord R;
    R.j = j;
    R.t_j = t;
    R.t_next = hit.time;
    R.flux_id = sj.id;
    R.r = r;
    R.rp = rp;
    R.reach = reach;
    R.e = blowup_gauge_bound(pm, rp, reach);
    R.d = blowup_energy_bound(pm, W, cfg.L, r, rp, reach);
    R.blowup_bound = s_plus(pm, rp);
    R.stability_bound = 0.5 * cfg.L * reach + std::ldexp(1.0, -(j + 1));

    SubsolutionField base = build_auxiliary(tr, sj);
    const Band band(pm, r, rp);
    // gauge budget from the unperturbed gauge
    auto first = apply_density(base, band, level, s_plus(pm, r), 1.0, StaircaseConfig{.density = false}, 0);
    R.gamma_base = first.gamma_base;
    double eps = std::ldexp(1.0, -j);
    if (!std::isnan(R.gamma_base)) eps = std::min(eps, R.gamma_base);
    R.epsilon = eps;
    auto D = apply_density(base, band, level, s_plus(pm, r), eps, cfg, cfg.seed + 104729u * j);
    R.gamma = std::isnan(D.gamma_final) ? 0.0 : D.gamma_final;
    R.region_measure = D.region_measure;
    R.n_threshold = D.n_threshold;
    R.n_region = D.n_region;
    R.n_defect = D.n_defect;
    R.n_patched = D.n_patched;
    R.dist_base = D.dist_base;
    R.dist_final = D.dist_final;
    R.density_failure = D.failure;
    R.density = D.reports;
    R.energy_avg = energy_average(D.w, W);
    R.ux_sup = gradient_sup(D.w);
    double dev = 0;
    for (double x : D.w.u) dev = std::max(dev, std::abs(x - ubar));
    R.stability = dev + patch_amplitude(D.w);
    rep.steps.push_back(std::move(R));
    rep.composite.segments.push_back(std::move(D.w));
    rep.composite.fluxes.push_back(sj);
    append_rows(rep.base, tr);
    cur = tr.back();
    t = hit.time;
  }
}

}  // namespace detail

// hierarchy ----------------------------------------------------------------------

struct HierarchyStep {
  int j = 0;
  double t_j = 0, t1 = nan_v, t2 = nan_v, t_next = 0;
  int a = 0;                    // 1: max side hit first, 2: min side hit first
  double m = nan_v;             // m_{a,j+1}
  double r1 = nan_v, r1p = nan_v, r2 = nan_v, r2p = nan_v;
  double left_reach = nan_v, right_reach = nan_v;
  bool tie = false;
  std::string flux_id;
};

struct HierarchyRecord {
  std::vector<HierarchyStep> steps;
  std::string scenario;
  bool terminated = false;
  std::string handoff;          // case1 (m_2 = 0) or case2 (m_1 = 0)
  Trajectory trajectory;
  std::vector<FluxModel> fluxes;
};

inline HierarchyRecord run_hierarchy(const std::vector<double>& u0, const FluxModel& pm, const StaircaseConfig& cfg,
                                     double t0 = 0) {
  const double dx = cfg.L / cfg.nx;
  const double m0 = statistic(u0, dx, Statistic::min_ux), M0 = statistic(u0, dx, Statistic::max_ux);
  const double tol = detail::zero_tolerance(cfg, m0, M0);
  if (!(m0 < -tol && M0 > tol))
    throw PreconditionError(cat("hierarchy needs m0 < 0 < M0 (m0 = ", m0, ", M0 = ", M0,
                                "); sign-definite data go to the blow-up cases"));
  const double lo_top = pm(pm.lm.s1), hi_top = pm(pm.lm.s2);
  HierarchyRecord H;
  std::vector<double> cur = u0;
  double t = t0;
  double r1 = nan_v, r2 = nan_v, r1_prev = lo_top, r2_prev = hi_top;
  double left_reach = m0, right_reach = M0;
  int a_prev = 0;
  double m_prev = nan_v;
  const SolveOptions opt = cfg.solve_options();
  for (int j = 0; j < std::max(1, cfg.J); ++j) {
    const double two = std::ldexp(1.0, -j);
    if (j == 0) {
      r1 = 0.9 * std::max(pm(m0), lo_top);
      r2 = 0.9 * std::min(pm(M0), hi_top);
      r1 = std::max(r1, -0.9);
      r2 = std::min(r2, 0.9);
    } else if (a_prev == 1) {
      r1 = 0.9 * std::max(r1_prev, -two);
      r2 = 0.9 * std::min(pm(m_prev), two);
    } else {
      r1 = 0.9 * std::max(pm(m_prev), -two);
      r2 = 0.9 * std::min(r2_prev, two);
    }
    double r1p = detail::prime_level(
        r1, r1_prev, [&](double r) { return s_minus(pm, r); }, [&](double s) { return pm(s); }, 0.9 * two,
        pm.lm.s1, false);
    double r2p = detail::prime_level(
        r2, r2_prev, [&](double r) { return s_plus(pm, r); }, [&](double s) { return pm(s); }, 0.9 * two,
        pm.lm.s2, true);
    FluxModel sj = modify_pm_hierarchy(pm, {r1, r1p, r2, r2p, left_reach, right_reach}).as_model();
    Trajectory tr = start_trajectory(sj, cur, detail::grid_at(cfg, t));
    const double lv1 = s_plus(pm, r1), lv2 = s_minus(pm, r2);
    auto min_ok = [&](const std::vector<double>& u) { return statistic(u, dx, Statistic::min_ux) >= lv1; };
    auto max_ok = [&](const std::vector<double>& u) { return statistic(u, dx, Statistic::max_ux) <= lv2; };
    auto first = solve_until_event(
        sj, tr, [&](const std::vector<double>& u) { return min_ok(u) || max_ok(u); }, t + cfg.t_budget, opt);
    if (!first.reached)
      throw NotReachedError(cat("hierarchy step ", j, ": neither side left its plateau by t = ", first.time),
                            statistic(tr.back(), dx, Statistic::max_ux), first.time);
    HierarchyStep S;
    S.j = j;
    S.t_j = t;
    S.r1 = r1;
    S.r1p = r1p;
    S.r2 = r2;
    S.r2p = r2p;
    S.left_reach = left_reach;
    S.right_reach = right_reach;
    S.flux_id = sj.id;
    bool hit1 = min_ok(tr.back()), hit2 = max_ok(tr.back());
    if (hit1 && hit2) {
      S.t1 = S.t2 = first.time;
      S.tie = true;
      // both sides on the same row: the larger excursion decides
      double mn = statistic(tr.back(), dx, Statistic::min_ux), mx = statistic(tr.back(), dx, Statistic::max_ux);
      S.a = mx >= std::abs(mn) ? 1 : 2;
    } else {
      auto second = solve_until_event(
          sj, tr, [&](const std::vector<double>& u) { return hit1 ? max_ok(u) : min_ok(u); }, t + cfg.t_budget, opt);
      if (!second.reached)
        throw NotReachedError(cat("hierarchy step ", j, ": second side pending at t = ", second.time),
                              statistic(tr.back(), dx, hit1 ? Statistic::max_ux : Statistic::min_ux),
                              second.time);
      if (hit1) {
        S.t1 = first.time;
        S.t2 = second.time;
      } else {
        S.t2 = first.time;
        S.t1 = second.time;
      }
      S.a = S.t2 <= S.t1 ? 1 : 2;
    }
    S.t_next = tr.grid.times.back();
    S.m = S.a == 1 ? statistic(tr.back(), dx, Statistic::max_ux) : statistic(tr.back(), dx, Statistic::min_ux);
    H.scenario += (H.scenario.empty() ? "(" : ",") + std::to_string(S.a);
    detail::append_rows(H.trajectory, tr);
    H.fluxes.push_back(sj);
    H.steps.push_back(S);
    cur = tr.back();
    t = S.t_next;
    if (std::abs(S.m) <= tol) {
      H.terminated = true;
      H.handoff = S.a == 1 ? "case2" : "case1";
      break;
    }
    left_reach = lv1;
    right_reach = lv2;
    r1_prev = r1;
    r2_prev = r2;
    a_prev = S.a;
    m_prev = S.m;
  }
  H.scenario += ")";
  return H;
}

// Case dispatch: 0 = m0 < M0 runs the staircase, m0 < M0 = 0 runs it mirrored, and
// m0 < 0 < M0 runs the hierarchy first and hands off when it stops.
inline StaircaseReport run_blowup(const std::vector<double>& u0, const FluxModel& pm, const StaircaseConfig& cfg) {
  if (pm.family != Family::perona_malik) throw PreconditionError("blow-up needs a Perona-Malik type flux");
  const double dx = cfg.L / cfg.nx;
  StaircaseReport rep;
  rep.scheme = cfg.scheme == Scheme::pm_hierarchy ? Scheme::pm_hierarchy : Scheme::pm_blowup;
  rep.flux_id = pm.id;
  rep.seed = cfg.seed;
  rep.m0 = statistic(u0, dx, Statistic::min_ux);
  rep.M0 = statistic(u0, dx, Statistic::max_ux);
  if (rep.M0 - rep.m0 == 0) throw PreconditionError("initial datum is constant; blow-up needs u0 nonconstant");
  rep.zero_tol = detail::zero_tolerance(cfg, rep.m0, rep.M0);

  auto run_case2 = [&](const std::vector<double>& row, double t0) {
    FluxModel pr = classified(reflected(pm));
    std::vector<double> neg(row.size());
    for (std::size_t i = 0; i < row.size(); ++i) neg[i] = -row[i];
    StaircaseReport sub;
    sub.base = Trajectory{};
    detail::blowup_case1(pr, neg, t0, cfg, sub);
    for (auto& s : sub.steps) {
      s.mirrored = true;
      rep.steps.push_back(s);
    }
    for (auto& n : sub.notices) rep.notices.push_back(n);
    for (std::size_t k = 0; k < sub.composite.segments.size(); ++k) {
      rep.composite.segments.push_back(detail::mirror_field(sub.composite.segments[k]));
      rep.composite.fluxes.push_back(classified(reflected(sub.composite.fluxes[k])));
    }
    detail::append_rows(rep.base, detail::mirror_trajectory(sub.base, pm.id));
  };

  if (std::abs(rep.m0) <= rep.zero_tol) {
    rep.handoff = "case1";
    detail::blowup_case1(pm, u0, 0.0, cfg, rep);
  } else if (std::abs(rep.M0) <= rep.zero_tol) {
    rep.handoff = "case2";
    rep.notices.push_back("m0 < M0 = 0: staircase run on -u0 with the reflected flux");
    run_case2(u0, 0.0);
  } else {
    auto H = run_hierarchy(u0, pm, cfg);
    rep.scenario = H.scenario;
    rep.terminated = H.terminated;
    rep.handoff = H.handoff;
    detail::append_rows(rep.base, H.trajectory);
    // hierarchy steps enter the composite unperturbed, one segment per flux
    for (std::size_t k = 0; k < H.steps.size(); ++k) {
      const auto& h = H.steps[k];
      rep.notices.push_back(cat("hierarchy step ", h.j, " [", h.t_j, ", ", h.t_next, "] a = ", h.a, " m = ", h.m,
                                h.tie ? " (tie)" : ""));
      auto piece = slice(H.trajectory, H.steps[k].t_j, H.steps[k].t_next);
      rep.composite.segments.push_back(field_from_rows(cfg.L, piece.grid.times, piece.u));
      rep.composite.fluxes.push_back(H.fluxes[k]);
    }
    if (!H.terminated) {
      rep.notices.push_back(cat("hierarchy did not stop within ", cfg.J, " steps: scenario ", H.scenario));
    } else if (H.handoff == "case1") {
      detail::blowup_case1(pm, H.trajectory.back(), H.trajectory.grid.times.back(), cfg, rep);
    } else {
      run_case2(H.trajectory.back(), H.trajectory.grid.times.back());
    }
  }
  rep.base.flux_id = pm.id;
  rep.base.initial = u0;
  return rep;
}

// smoothing -------------------------------------------------------------------------

namespace detail {

inline void finish_smoothing(StaircaseReport& rep, const Trajectory& tr) {
  rep.base = tr;
  rep.smoothing.envelopes = envelope_check(tr);
  try {
    rep.smoothing.decay = decay_rate_estimate(tr);
  } catch (const EstimateError& e) {
    rep.smoothing.decay_note = e.what();
  }
}

inline double outside_gap(const SubsolutionField& w, const SubsolutionField& base) {
  double m = 0;
  for (int n = 0; n + 1 < w.nt(); ++n)
    for (int i = 0; i < w.nx; ++i) {
      if (w.patch(w.cell(i, n))) continue;
      for (double y : {0.25, 0.5, 0.75}) {
        double x = (i + y) * w.dx(), tt = w.t[n] + 0.5 * w.dt(n);
        m = std::max(m, std::abs(w.sample(x, tt).first - base.sample(x, tt).first));
      }
    }
  return m;
}

// measure of the plus phases over the region, per unit region measure
inline double plus_share(const SubsolutionField& w) {
  double plus = 0, tot = 0;
  for (int n = 0; n + 1 < w.nt(); ++n)
    for (int i = 0; i < w.nx; ++i) {
      long c = w.cell(i, n);
      if (!w.region[c]) continue;
      tot += w.area(n);
      if (const CellPatch* p = w.patch(c)) plus += w.area(n) * p->theta_plus();
    }
  return tot > 0 ? plus / tot : nan_v;
}

}  // namespace detail

inline StaircaseReport run_smoothing(const std::vector<double>& u0, const FluxModel& flux, const StaircaseConfig& cfg) {
  const double dx = cfg.L / cfg.nx;
  StaircaseReport rep;
  rep.scheme = cfg.scheme;
  rep.flux_id = flux.id;
  rep.seed = cfg.seed;
  rep.m0 = statistic(u0, dx, Statistic::min_ux);
  rep.M0 = statistic(u0, dx, Statistic::max_ux);
  const SolveOptions opt = cfg.solve_options();
  if (rep.M0 - rep.m0 == 0) {
    rep.notices.push_back("degenerate run: constant data, every Q set is empty");
    rep.smoothing.classical = true;
    auto tr = solve(flux, u0, detail::grid_at(cfg, 0), cfg.tail, opt);
    detail::finish_smoothing(rep, tr);
    rep.composite = composite_of(tr, flux);
    return rep;
  }

  if (cfg.scheme == Scheme::hollig_smoothing) {
    if (flux.family != Family::hollig) throw PreconditionError("hollig_smoothing needs a Hollig type flux");
    if (!(rep.M0 > flux.lm.sbar1))
      throw PreconditionError(cat("hollig_smoothing needs M0 > sbar1 (M0 = ", rep.M0, ", sbar1 = ", flux.lm.sbar1, ")"));
    const double r1 = std::isnan(cfg.r1) ? 0.6 : cfg.r1, r2 = std::isnan(cfg.r2) ? 0.9 : cfg.r2;
    auto mf = modify_hollig(flux, {r1, r2});
    FluxModel st = mf.as_model();
    const double a = s_minus(flux, r1), b = s_plus(flux, r2);
    if (!(a < rep.M0)) throw PreconditionError(cat("hollig_smoothing needs s-_{r1} < M0 (", a, " vs ", rep.M0, ")"));
    if (!(rep.m0 > s_minus(flux, 0.0) || rep.m0 >= flux.lo))
      throw PreconditionError("initial slopes leave the flux domain");
    Trajectory tr = start_trajectory(st, u0, detail::grid_at(cfg, 0));
    auto hit = solve_until(st, tr, Statistic::max_ux, a, cfg.t_budget, opt);
    if (!hit.reached)
      throw NotReachedError(cat("max u_x stays above s-_{r1} = ", a), statistic(tr.back(), dx, Statistic::max_ux),
                            hit.time);
    rep.smoothing.t_exit = hit.time;
    advance(st, tr, hit.time + cfg.tail, opt);
    SubsolutionField base = build_auxiliary(tr, st);
    const Band band(flux, r1, r2);
    rep.smoothing.q1 = detect_Q_sets(base, a, b);
    rep.smoothing.q2 = detect_Q_sets(base, b, INFINITY);
    if (rep.smoothing.q1.empty()) rep.notices.push_back("degenerate run: Q1 is empty");

    StepRecord R;
    R.t_j = 0;
    R.t_next = tr.grid.times.back();
    R.flux_id = st.id;
    R.r = r1;
    R.rp = r2;
    auto D = apply_density(base, band, a, b, cfg.epsilon, cfg, cfg.seed);
    R.gamma_base = D.gamma_base;
    R.gamma = D.gamma_final;
    R.epsilon = cfg.epsilon;
    R.region_measure = D.region_measure;
    R.n_threshold = D.n_threshold;
    R.n_region = D.n_region;
    R.n_defect = D.n_defect;
    R.n_patched = D.n_patched;
    R.dist_base = D.dist_base;
    R.dist_final = D.dist_final;
    R.density_failure = D.failure;
    R.density = D.reports;
    R.energy_avg = energy_average(D.w, Potential(flux));
    R.ux_sup = gradient_sup(D.w);
    if (!D.reports.empty()) {
      rep.smoothing.final_distance = D.reports.back().dist_after;
      rep.smoothing.final_budget = D.reports.back().delta * D.reports.back().measure;
    }
    rep.smoothing.outside_gap = detail::outside_gap(D.w, base);
    rep.smoothing.plus_share = detail::plus_share(D.w);
    rep.steps.push_back(R);
    rep.composite.segments.push_back(std::move(D.w));
    rep.composite.fluxes.push_back(st);
    detail::finish_smoothing(rep, tr);
    return rep;
  }

  // Perona-Malik
  if (flux.family != Family::perona_malik) throw PreconditionError("pm_smoothing needs a Perona-Malik type flux");
  const double s1 = flux.lm.s1, s2 = flux.lm.s2;
  if (rep.m0 >= s1 && rep.M0 <= s2) {
    rep.smoothing.classical = true;
    rep.notices.push_back("slopes stay in [s1, s2]: classical solve, no Q sets");
    auto tr = solve(flux, u0, detail::grid_at(cfg, 0), cfg.tail, opt);
    detail::finish_smoothing(rep, tr);
    rep.composite = composite_of(tr, flux);
    return rep;
  }
  const bool left = rep.m0 < 0, right = rep.M0 > 0;
  PlateauSpec ps;
  double r1 = nan_v, r1p = nan_v, r2 = nan_v, r2p = nan_v;
  if (right) {
    r2 = std::isnan(cfg.r2) ? 0.9 * flux(rep.M0) : cfg.r2;
    r2p = std::isnan(cfg.r2p) ? 0.5 * (r2 + flux(s2)) : cfg.r2p;
    ps.right_pin = s_minus(flux, r2);
    ps.right_reach = rep.M0;
    ps.r2 = r2;
    ps.r2p = r2p;
    if (!(s_minus(flux, r2) < rep.M0 && rep.M0 < s_plus(flux, r2) && r2 < r2p && r2p < flux(s2)))
      throw PreconditionError(cat("pm_smoothing needs s-_{r2} < M0 < s+_{r2} and r2 < r2' < sigma(s2)"));
  } else {
    ps.right_pin = 0.5 * s2;
  }
  if (left) {
    r1 = std::isnan(cfg.r1) ? 0.9 * flux(rep.m0) : cfg.r1;
    r1p = std::isnan(cfg.r1p) ? 0.5 * (flux(s1) + r1) : cfg.r1p;
    ps.left_pin = s_plus(flux, r1);
    ps.left_reach = rep.m0;
    ps.r1 = r1;
    ps.r1p = r1p;
    if (!(s_minus(flux, r1) < rep.m0 && rep.m0 < s_plus(flux, r1) && flux(s1) < r1p && r1p < r1))
      throw PreconditionError(cat("pm_smoothing needs s-_{r1} < m0 < s+_{r1} and sigma(s1) < r1' < r1"));
  } else {
    ps.pin_floor = 0.5 * s1;
    ps.left_pin = ps.right_pin;
  }
  FluxModel st = plateau_flux(flux, ps, "pm_smoothing").as_model();
  Trajectory tr = start_trajectory(st, u0, detail::grid_at(cfg, 0));
  const double lv1 = left ? s_plus(flux, r1) : -INFINITY, lv2 = right ? s_minus(flux, r2) : INFINITY;
  auto hit = solve_until_event(
      st, tr,
      [&](const std::vector<double>& u) {
        return statistic(u, dx, Statistic::min_ux) >= lv1 && statistic(u, dx, Statistic::max_ux) <= lv2;
      },
      cfg.t_budget, opt);
  if (!hit.reached)
    throw NotReachedError("slopes did not leave the plateaus", statistic(tr.back(), dx, Statistic::max_ux), hit.time);
  rep.smoothing.t_exit = hit.time;
  advance(st, tr, hit.time + cfg.tail, opt);
  SubsolutionField base = build_auxiliary(tr, st);

  StepRecord R;
  R.t_next = tr.grid.times.back();
  R.flux_id = st.id;
  R.r = r1;
  R.rp = r2;
  R.epsilon = cfg.epsilon;
  SubsolutionField merged = base;
  merged.region.assign(base.ncells(), 0);
  double dist = 0, budget = 0, largest = 0;
  bool have = false;
  auto absorb = [&](const DensityOutcome& D) {
    merged = merge_laminates(merged, D.w);
    R.region_measure += D.region_measure;
    R.n_threshold += D.n_threshold;
    R.n_region += D.n_region;
    R.n_defect += D.n_defect;
    R.n_patched += D.n_patched;
    if (D.n_region > 0) {
      R.dist_base = (std::isnan(R.dist_base) ? 0 : R.dist_base) + D.dist_base;
      R.dist_final = (std::isnan(R.dist_final) ? 0 : R.dist_final) + D.dist_final;
      // gauge of the larger region
      if (std::isnan(R.gamma) || D.region_measure > largest) {
        largest = D.region_measure;
        R.gamma = D.gamma_final;
        R.gamma_base = D.gamma_base;
      }
    }
    if (!D.failure.empty()) R.density_failure += (R.density_failure.empty() ? "" : ",") + D.failure;
    for (auto& s : D.reports) R.density.push_back(s);
    if (!D.reports.empty()) {
      dist += D.reports.back().dist_after;
      budget += D.reports.back().delta * D.reports.back().measure;
      have = true;
    }
  };
  if (left) {
    const Band band(flux, r1p, r1);
    rep.smoothing.q1 = detect_Q_sets(base, s_minus(flux, r1), s_plus(flux, r1));
    absorb(apply_density(base, band, s_minus(flux, r1), s_plus(flux, r1), cfg.epsilon, cfg, cfg.seed));
  }
  if (right) {
    const Band band(flux, r2, r2p);
    auto q = detect_Q_sets(base, s_minus(flux, r2), s_plus(flux, r2));
    (left ? rep.smoothing.q2 : rep.smoothing.q1) = q;
    absorb(apply_density(base, band, s_minus(flux, r2), s_plus(flux, r2), cfg.epsilon, cfg, cfg.seed + 1));
  }
  if (rep.smoothing.q1.empty() && rep.smoothing.q2.empty()) rep.notices.push_back("degenerate run: Q sets are empty");
  if (have) {
    rep.smoothing.final_distance = dist;
    rep.smoothing.final_budget = budget;
  }
  R.energy_avg = energy_average(merged, Potential(flux));
  R.ux_sup = gradient_sup(merged);
  rep.smoothing.outside_gap = detail::outside_gap(merged, base);
  rep.smoothing.plus_share = detail::plus_share(merged);
  rep.steps.push_back(R);
  rep.composite.segments.push_back(std::move(merged));
  rep.composite.fluxes.push_back(st);
  detail::finish_smoothing(rep, tr);
  return rep;
}

// allocation -------------------------------------------------------------------------

// inverse of an increasing flux, bracket grown from [a, b]
inline double inverse_on(const FluxModel& f, double level, double a, double b) {
  double w = 1e-6 * (b - a);
  while (f(a) > level) a -= (w *= 2);
  while (f(b) < level) b += (w *= 2);
  return bisect([&](double s) { return f(s) - level; }, a, b);
}

struct Sandwich {
  double d0, d1, d0t, d1t;
  double lower() const { return d0t / d1; }
  double upper() const { return d1t / d0; }
};

// d0, d1: extremes of g+ - g-; d~0, d~1: extremes of g~ - g- over [-r, r]
inline Sandwich allocation_sandwich(const FluxModel& nf, const FluxModel& st, double r, double a, double b,
                                    int samples = 400) {
  Sandwich S{INFINITY, 0, INFINITY, 0};
  for (int k = 0; k <= samples; ++k) {
    double lv = -r + 2 * r * k / samples;
    double gp = s_plus(nf, lv), gm = s_minus(nf, lv), gt = inverse_on(st, lv, a, b);
    S.d0 = std::min(S.d0, gp - gm);
    S.d1 = std::max(S.d1, gp - gm);
    S.d0t = std::min(S.d0t, gt - gm);
    S.d1t = std::max(S.d1t, gt - gm);
  }
  return S;
}

inline StaircaseReport run_allocation(const std::vector<double>& u0, const FluxModel& nf, const StaircaseConfig& cfg) {
  if (nf.family != Family::non_fourier) throw PreconditionError("nf_allocation needs a non-Fourier type flux");
  const double dx = cfg.L / cfg.nx;
  StaircaseReport rep;
  rep.scheme = Scheme::nf_allocation;
  rep.flux_id = nf.id;
  rep.seed = cfg.seed;
  rep.m0 = statistic(u0, dx, Statistic::min_ux);
  rep.M0 = statistic(u0, dx, Statistic::max_ux);
  const double s0m = nf.lm.s0m, s0p = nf.lm.s0p;
  const Potential W(nf);
  rep.lambda0 = -s0m / (s0p - s0m);
  rep.target = cfg.L * (rep.lambda0 * W(s0p) + (1 - rep.lambda0) * W(s0m));

  const double bound = std::min(nf(nf.lm.s1), -nf(nf.lm.s2));
  const double r0 = std::isnan(cfg.nf_r0) ? 0.9 * bound : cfg.nf_r0;
  std::vector<double> r;
  if (!cfg.r.empty()) {
    if (static_cast<int>(cfg.r.size()) < cfg.J + 2) throw ConfigError(cat("r schedule needs ", cfg.J + 2, " levels"));
    r.assign(cfg.r.begin(), cfg.r.begin() + cfg.J + 2);
    for (std::size_t k = 1; k < r.size(); ++k)
      if (!(r[k] < r[k - 1] && r[k] > 0)) throw ConfigError("allocation levels must decrease strictly and stay positive");
  } else {
    for (int j = 0; j <= cfg.J + 1; ++j) r.push_back(r0 * std::ldexp(1.0, -j));
  }
  auto mf = modify_non_fourier(nf, {r[0], cfg.nf_core});
  FluxModel st = mf.as_model();
  const double A = s_minus(nf, -r[0]), B = s_plus(nf, r[0]);

  const SolveOptions opt = cfg.solve_options();
  Trajectory tr = start_trajectory(st, u0, detail::grid_at(cfg, 0));
  std::vector<double> t{0.0};
  for (int j = 1; j <= cfg.J + 1; ++j) {
    const double lo = inverse_on(st, -r[j], A, B), hi = inverse_on(st, r[j], A, B);
    auto window = [&](const std::vector<double>& u) {
      return statistic(u, dx, Statistic::min_ux) > lo && statistic(u, dx, Statistic::max_ux) < hi;
    };
    const double t_min = std::max<double>(j, t.back());
    advance(st, tr, t_min, opt);
    if (window(tr.back())) {
      const double step = opt.dt > 0 ? opt.dt : dx;
      advance(st, tr, tr.grid.times.back() + step, opt);
    } else {
      auto hit = solve_until_event(st, tr, window, t_min + cfg.t_budget, opt);
      if (!hit.reached)
        throw NotReachedError(cat("window for level ", j, " not reached by t = ", hit.time),
                              statistic(tr.back(), dx, Statistic::max_ux), hit.time);
    }
    t.push_back(tr.grid.times.back());
  }
  rep.base = tr;

  for (int j = 0; j <= cfg.J; ++j) {
    Trajectory piece = slice(tr, t[j], t[j + 1]);
    SubsolutionField base = build_auxiliary(piece, st);
    const Band band(nf, -r[j], r[j]);
    double lo, hi;
    if (j == 0) {
      lo = A;
      hi = B;
    } else {
      lo = inverse_on(st, -r[j], A, B);
      hi = inverse_on(st, r[j], A, B);
    }
    StepRecord R;
    R.j = j;
    R.t_j = t[j];
    R.t_next = t[j + 1];
    R.flux_id = st.id;
    R.r = r[j];
    R.rp = -r[j];
    auto probe = apply_density(base, band, lo, hi, 1.0, StaircaseConfig{.density = false}, 0);
    R.gamma_base = probe.gamma_base;
    double eps = j == 0 ? 1.0 : std::min(std::ldexp(1.0, -j), R.gamma_base / j);
    R.epsilon = eps;
    auto D = apply_density(base, band, lo, hi, eps, cfg, cfg.seed + 104729u * j);
    R.gamma = D.gamma_final;
    R.region_measure = D.region_measure;
    R.n_threshold = D.n_threshold;
    R.n_region = D.n_region;
    R.n_defect = D.n_defect;
    R.n_patched = D.n_patched;
    R.dist_base = D.dist_base;
    R.dist_final = D.dist_final;
    R.density_failure = D.failure;
    R.density = D.reports;
    R.energy_avg = energy_average(D.w, W);
    auto S = allocation_sandwich(nf, st, r[j], A, B);
    R.d0 = S.d0;
    R.d1 = S.d1;
    R.d0t = S.d0t;
    R.d1t = S.d1t;
    R.lower = S.lower();
    R.upper = S.upper();
    R.e = S.upper();
    if (j >= 1) {
      double glo = (1 - 0.5 / j) * S.lower(), ghi = (1 + 0.5 / j) * S.upper();
      double wp = std::max(W(s_plus(nf, r[j])), W(s_plus(nf, -r[j])));
      double wm = std::max(W(s_minus(nf, r[j])), W(s_minus(nf, -r[j])));
      R.energy_lo = cfg.L * (glo * W(s0p) + std::max(0.0, 1 - ghi) * W(s0m));
      R.d = cfg.L * (ghi * wp + std::max(0.0, 1 - glo) * wm);
    }
    R.concentration_bound = std::max({std::abs(s_plus(nf, r[j]) - s0p), std::abs(s_plus(nf, -r[j]) - s0p),
                                      std::abs(s_minus(nf, r[j]) - s0m), std::abs(s_minus(nf, -r[j]) - s0m)});
    R.concentration = concentration_check(D.w, s0m, s0p).worst;
    R.ux_sup = gradient_sup(D.w);
    rep.steps.push_back(std::move(R));
    rep.composite.segments.push_back(std::move(D.w));
    rep.composite.fluxes.push_back(st);
  }
  return rep;
}

// output -------------------------------------------------------------------------------

// j, t_j, gamma, e_j, d_j, energy_avg, blowup_bound, stability_bound, then scheme columns
inline void write_steps_csv(std::ostream& os, const StaircaseReport& rep, const std::string& header) {
  os.precision(12);
  if (!header.empty()) os << header << "\n";
  os << "j,t_j,gamma,e_j,d_j,energy_avg,blowup_bound,stability_bound,t_next,ux_sup,stability,gamma_base,"
        "region_measure,dist_base,dist_final,n_patched,r,rp";
  if (rep.scheme == Scheme::nf_allocation) os << ",d0,d1,d0t,d1t,lower,upper,energy_lo,concentration_bound,concentration";
  os << "\n";
  for (const auto& s : rep.steps) {
    // j = 0 of the blow-up staircase uses reach = M0 and is left out of the table
    if (rep.scheme != Scheme::hollig_smoothing && rep.scheme != Scheme::pm_smoothing && s.j == 0) continue;
    os << s.j << "," << s.t_j << "," << s.gamma << "," << s.e << "," << s.d << "," << s.energy_avg << ","
       << s.blowup_bound << "," << s.stability_bound << "," << s.t_next << "," << s.ux_sup << "," << s.stability
       << "," << s.gamma_base << "," << s.region_measure << "," << s.dist_base << "," << s.dist_final << ","
       << s.n_patched << "," << s.r << "," << s.rp;
    if (rep.scheme == Scheme::nf_allocation)
      os << "," << s.d0 << "," << s.d1 << "," << s.d0t << "," << s.d1t << "," << s.lower << "," << s.upper << ","
         << s.energy_lo << "," << s.concentration_bound << "," << s.concentration;
    os << "\n";
  }
}

inline void write_report_text(std::ostream& os, const StaircaseReport& rep, const std::string& header) {
  os.precision(8);
  if (!header.empty()) os << header << "\n";
  os << "scheme " << to_string(rep.scheme) << "\nflux " << rep.flux_id << "\nseed " << rep.seed << "\n";
  os << "m0 " << rep.m0 << "\nM0 " << rep.M0 << "\n";
  if (!rep.scenario.empty())
    os << "scenario " << rep.scenario << (rep.terminated ? " terminated" : " open") << "\n";
  if (!rep.handoff.empty()) os << "case " << rep.handoff << "\n";
  if (rep.scheme == Scheme::nf_allocation) os << "lambda0 " << rep.lambda0 << "\ntarget " << rep.target << "\n";
  for (const auto& n : rep.notices) os << "notice: " << n << "\n";
  if (rep.scheme == Scheme::hollig_smoothing || rep.scheme == Scheme::pm_smoothing) {
    const auto& S = rep.smoothing;
    os << "classical " << (S.classical ? "yes" : "no") << "\n";
    if (!std::isnan(S.t_exit)) os << "plateau exit time " << S.t_exit << "\n";
    os << "Q1 measure " << S.q1.measure << " bounded " << (S.q1.bounded ? "yes" : "no") << " t_sup " << S.q1.t_sup
       << "\n";
    os << "Q2 measure " << S.q2.measure << " t_sup " << S.q2.t_sup << "\n";
    os << "sup |u - u*| off the laminates " << S.outside_gap << "\n";
    if (!std::isnan(S.final_distance))
      os << "final distance " << S.final_distance << " budget " << S.final_budget << "\n";
    if (!std::isnan(S.plus_share)) os << "plus phase share " << S.plus_share << "\n";
    os << "envelopes " << (S.envelopes.pass ? "pass" : "FAIL") << " worst " << S.envelopes.worst
       << (S.envelopes.curve.empty() ? "" : " (" + S.envelopes.curve + ")") << "\n";
    if (S.decay) os << "decay rate " << S.decay->rate << " fit residual " << S.decay->residual << "\n";
    else os << "decay rate n/a: " << S.decay_note << "\n";
  }
  for (const auto& s : rep.steps) {
    os << "step " << s.j << (s.mirrored ? " (mirrored)" : "") << " [" << s.t_j << ", " << s.t_next << "] flux "
       << s.flux_id << "\n";
    os << "  r " << s.r << " r' " << s.rp << " eps " << s.epsilon << "\n";
    os << "  region " << s.n_region << " cells, measure " << s.region_measure << ", defects " << s.n_defect
       << ", laminated " << s.n_patched << "\n";
    os << "  distance " << s.dist_base << " -> " << s.dist_final
       << (s.density_failure.empty() ? "" : " (schedule stopped: " + s.density_failure + ")") << "\n";
    os << "  gauge " << s.gamma << " (base " << s.gamma_base << ")";
    if (!std::isnan(s.e)) os << " bound " << s.e;
    os << "\n  energy average " << s.energy_avg;
    if (!std::isnan(s.d)) os << " bound " << s.d;
    os << "\n";
    if (rep.scheme == Scheme::pm_blowup || rep.scheme == Scheme::pm_hierarchy) {
      os << "  sup|u_x| " << s.ux_sup << " witness bound " << s.blowup_bound
         << (s.blowup_applies() ? (s.blowup_ok() ? " met" : " MISSED") : " (gauge >= 1/2, not checked)") << "\n";
      os << "  stability " << s.stability << " bound " << s.stability_bound << "\n";
    }
    if (rep.scheme == Scheme::nf_allocation) {
      os << "  sandwich [" << s.lower << ", " << s.upper << "]\n";
      os << "  concentration " << s.concentration << " bound " << s.concentration_bound << "\n";
    }
  }
}

}  // namespace fbd
