#include <catch_amalgamated.hpp>

#include <chrono>

#include "fbd/inclusion.hpp"

using namespace fbd;
using Catch::Approx;

namespace {

using Fn = std::function<double(double, double)>;

// field with prescribed u and v on an nx x nt grid of [0,L] x [0,T]; every cell in the region
SubsolutionField make_field(int nx, int nt, double T, const Fn& u, const Fn& v, double L = 1.0) {
  SubsolutionField w;
  w.L = L;
  w.nx = nx;
  for (int n = 0; n <= nt; ++n) w.t.push_back(T * n / nt);
  for (int n = 0; n <= nt; ++n)
    for (int i = 0; i <= nx; ++i) {
      w.u.push_back(u(L * i / nx, w.t[n]));
      w.v.push_back(v(L * i / nx, w.t[n]));
    }
  w.u_ref = w.u;
  w.v_ref = w.v;
  w.region.assign(w.ncells(), 1);
  return w;
}

const Band& hollig_band() {
  static const Band b(classified(hollig_pl_flux()), 0.6, 0.9);
  return b;
}

// brute force over a tabulated level grid, both branches and the clamp on c
double brute_distance(const Band& band, const CellJacobian& j, double b) {
  double best = INFINITY;
  const int n = 20000;
  for (int k = 0; k <= n; ++k) {
    double r = band.r1() + (band.r2() - band.r1()) * k / n;
    for (double s : {band.gp(r), band.gm(r)}) {
      double c = std::clamp(j.ut, -b, b);
      best = std::min(best, sq(j.ux - s) + sq(j.ut - c) + sq(j.vx - j.u) + sq(j.vt - r));
    }
  }
  return std::sqrt(best);
}

// wide band: minus branch g(r) = r, plus branch g(r) = r + 20
SubsolutionField wide_fixture(const Band& band) {
  const double c = 0.95, s0 = 10.75;
  auto w = make_field(
      48, 24, 0.5, [=](double x, double t) { return s0 * x + c * t; },
      [=](double x, double t) { return 0.5 * s0 * x * x + c * t * x; });
  w.b = c + 1;
  for (int n = 0; n + 1 < w.nt(); ++n)
    for (int i = 0; i < w.nx; ++i) {
      auto j = w.jac(i, n);
      w.region[w.cell(i, n)] = band.inside(j.ux, j.vt) && band.dist_boundary(j.ux, j.vt) > 1e-3;
    }
  return w;
}

}  // namespace

TEST_CASE("band geometry") {
  const Band& hb = hollig_band();
  // plus graph is the line s = r + 1.5
  CHECK(hb.dist_plus(0.75 + 1.5 - 0.3, 0.75) == Approx(0.3 / std::sqrt(2.0)).margin(1e-9));
  CHECK(hb.dist_minus(0.75 + 0.3, 0.75) == Approx(0.3 / std::sqrt(2.0)).margin(1e-9));
  CHECK(hb.dist_boundary(1.5, 0.75) == Approx(0.15).margin(1e-9));
  CHECK(hb.diameter() == Approx(std::hypot(1.8, 0.3)).margin(1e-9));
  CHECK(hb.gauge(1.5, 0.75) == Approx(0.5));

  Band pb(classified(perona_malik_flux()), 0.1, 0.15);
  Rng rng(5);
  for (int k = 0; k < 40; ++k) {
    double r = 0.09 + 0.07 * rng.uniform(), s = 12 * rng.uniform();
    double bf = INFINITY;
    for (int q = 0; q <= 50000; ++q) {
      double rr = 0.1 + 0.05 * q / 50000;
      bf = std::min(bf, std::hypot(s - pb.gp(rr), r - rr));
    }
    CHECK(pb.dist_plus(s, r) == Approx(bf).margin(1e-6));
  }
  for (double r : {0.6, 0.61, 0.75, 0.899, 0.9}) {
    double tau = 1e-3;
    double sp = hb.offset_plus(r, tau), sm = hb.offset_minus(r, tau);
    CHECK(hb.dist_plus(sp, r) == Approx(tau).epsilon(1e-6));
    CHECK(hb.dist_minus(sm, r) == Approx(tau).epsilon(1e-6));
    CHECK(sp < hb.gp(r));
    CHECK(sm > hb.gm(r));
  }
  for (double r : {0.1, 0.12, 0.15}) {
    double sp = pb.offset_plus(r, 1e-4);
    CHECK(pb.dist_plus(sp, r) == Approx(1e-4).epsilon(1e-6));
  }
  // f is increasing and inverse recovers the level
  double beta = hb.beta_plus(0.01);
  CHECK(hb.f_plus(beta) == Approx(0.01).epsilon(1e-8));
  CHECK(beta == Approx(0.01 * std::sqrt(2.0)).epsilon(1e-6));
}

TEST_CASE("gauge examples") {
  const Band& hb = hollig_band();
  const double r = 0.75;
  auto on_plus = make_field(32, 8, 1, [&](double x, double) { return hb.gp(r) * x; },
                            [&](double, double t) { return r * t; });
  CHECK(gauge(on_plus, hb).gamma == Approx(1).margin(1e-12));
  auto mid = make_field(32, 8, 1, [&](double x, double) { return 0.5 * (hb.gp(r) + hb.gm(r)) * x; },
                        [&](double, double t) { return r * t; });
  CHECK(gauge(mid, hb).gamma == Approx(0.5).margin(1e-12));
  auto halves = make_field(
      32, 8, 1,
      [&](double x, double) { return x <= 0.5 ? hb.gm(r) * x : hb.gm(r) * 0.5 + hb.gp(r) * (x - 0.5); },
      [&](double, double t) { return r * t; });
  auto g = gauge(halves, hb);
  CHECK(g.gamma == Approx(0.5).margin(1e-12));
  for (double z : g.per_cell) CHECK((z == Approx(0).margin(1e-12) || z == Approx(1).margin(1e-12)));

  auto outside = make_field(32, 8, 1, [&](double x, double) { return (hb.gp(r) + 1) * x; },
                            [&](double, double t) { return r * t; });
  try {
    gauge(outside, hb);
    FAIL("expected not-a-subsolution");
  } catch (const NotSubsolutionError& e) {
    CHECK(e.cells.size() == 32 * 8);
  }
  // strict subsolutions have a gauge strictly inside (0,1)
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    double a = 0.01 + 0.98 * rng.uniform(), rr = 0.61 + 0.28 * rng.uniform();
    auto w = make_field(16, 4, 1, [&](double x, double) { return (hb.gm(rr) + a * 1.5) * x; },
                        [&](double, double t) { return rr * t; });
    double gm = gauge(w, hb).gamma;
    CHECK(gm > 0);
    CHECK(gm < 1);
    CHECK(gm == Approx(a).margin(1e-9));
  }
}

TEST_CASE("distance to the inclusion") {
  const Band& hb = hollig_band();
  const double r0 = 0.75;
  auto exact = make_field(
      64, 16, 1, [&](double x, double) { return r0 * x; },
      [&](double x, double t) { return 0.5 * r0 * x * x + r0 * t; });
  auto d0 = distance_to_inclusion(exact, hb);
  CHECK(d0.integral == Approx(0).margin(1e-12));

  auto shifted = make_field(
      64, 16, 1, [&](double x, double) { return (r0 + 0.3) * x; },
      [&](double x, double t) { return 0.5 * (r0 + 0.3) * x * x + r0 * t; });
  auto d1 = distance_to_inclusion(shifted, hb);
  for (double v : d1.per_cell) {
    CHECK(v <= 0.3);
    CHECK(v == Approx(0.3 / std::sqrt(2.0)).margin(1e-9));
  }

  // |u_t| = 1 over b = 0 with the diagonal on the minus line
  const double c = 0.6;
  auto fast = make_field(
      64, 16, 1, [&](double x, double t) { return t + 0.5 * x * x + c * x; },
      [&](double x, double t) { return t * x + x * x * x / 6 + 0.5 * c * x * x + c * t; });
  fast.b = 0;
  for (int n = 0; n + 1 < fast.nt(); ++n)
    for (int i = 0; i < fast.nx; ++i) {
      auto j = fast.jac(i, n);
      fast.region[fast.cell(i, n)] = j.vt > 0.6 && j.vt < 0.9;
    }
  auto d2 = distance_to_inclusion(fast, hb);
  for (std::size_t k = 0; k < d2.per_cell.size(); ++k)
    if (fast.region[k]) CHECK(d2.per_cell[k] == Approx(1).margin(1e-4));

  // brute force on random cells of a generic field
  auto generic = make_field(
      40, 10, 1, [](double x, double t) { return 1.7 * x * x - 0.4 * t * x + std::sin(3 * x * t); },
      [](double x, double t) { return 0.9 * x * t + std::cos(2 * x) * t * t; });
  generic.b = 0.3;
  Rng rng(21);
  for (int k = 0; k < 10; ++k) {
    int i = static_cast<int>(rng.uniform() * 40), n = static_cast<int>(rng.uniform() * 10);
    auto j = generic.jac(i, n);
    double mine = matrix_distance(hb, j.ux, j.ut, j.vx - j.u, j.vt, generic.b);
    CHECK(mine == Approx(brute_distance(hb, j, generic.b)).margin(1e-6));
  }
}

TEST_CASE("standalone oscillation") {
  auto t0 = std::chrono::steady_clock::now();
  auto P = generate_oscillation(Rect{}, 1.0, 2.0, 0.05);
  auto m = P.measure();
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(secs < 2);
  CHECK(std::abs(m.frac_minus - 2.0 / 3) < 0.05);
  CHECK(std::abs(m.frac_plus - 1.0 / 3) < 0.05);
  CHECK(m.max_psi_x_gap <= 1e-12);
  CHECK(m.max_row_integral <= 1e-12);
  CHECK(m.psi_end <= 1e-12);
  CHECK(m.sup_phi < 0.05);
  CHECK(m.sup_psi < 0.05);
  CHECK(m.sup_phi_t < 0.05);
  CHECK(m.sup_psi_t < 0.05);
  CHECK(m.slope_lo >= -1 - 1e-12);
  CHECK(m.slope_hi <= 2 + 1e-12);
  CHECK(m.two_slope_mass >= 1 - 2 * 0.05);

  // irrational ratio needs adjusting cells
  auto Q = generate_oscillation(Rect{0, 2, 0, 0.5}, 1.0, std::sqrt(2.0), 0.1);
  auto mq = Q.measure();
  CHECK(std::abs(mq.frac_minus - std::sqrt(2.0) / (1 + std::sqrt(2.0))) < 0.1);
  CHECK(mq.max_row_integral <= 1e-12);
  CHECK(mq.sup_phi_t < 0.1);

  try {
    OscillationOptions o;
    o.nx = 100;
    generate_oscillation(Rect{}, 1.0, 2.0, 0.05, o);
    FAIL("expected a resolution error");
  } catch (const ResolutionError& e) {
    CHECK(e.nodes_needed > 101);
  }
}

TEST_CASE("cell laminates") {
  CellPatch p;
  p.lam_plus = 2;
  p.lam_minus = 1;
  p.periods = 7;
  p.ramp = 0.01;
  const double dx = 0.1;
  CHECK(p.theta_plus() == Approx(1.0 / 3));
  for (bool flip : {false, true}) {
    p.flip = flip;
    // zero at period ends, zero mean, extreme value equal to the amplitude
    double mean = 0, top = 0, plus = 0;
    const int n = 70000;
    for (int k = 0; k < n; ++k) {
      auto [sl, val] = p.at((k + 0.5) * dx / n, dx);
      mean += val / n;
      top = std::max(top, std::abs(val));
      if (sl > 0) plus += 1.0 / n;
    }
    CHECK(std::abs(mean) < 1e-9);
    CHECK(top == Approx(p.amp(dx)).epsilon(1e-3));
    CHECK(plus == Approx(1.0 / 3).margin(1e-3));
    CHECK(std::abs(p.at(0.0, dx).second) < 1e-15);
  }
  CHECK(p.chi(0.5 * 0.05, 0.05) == 1);
  CHECK(p.chi(0, 0.05) == 0);
}

TEST_CASE("density step on a wide band") {
  const Band band(classified(hollig_pl_flux(20.5)), 0.6, 0.9);
  CHECK(band.pair().separation == Approx(20).margin(1e-9));
  auto w = wide_fixture(band);
  REQUIRE(w.region_measure() > 0.1);

  const double eps = 2.0, eta = 0.1, width = 20;
  auto res = density_step(w, band, 0.1 * width, eps, eta, 7);
  const auto& R = res.report;
  CHECK_FALSE(R.short_circuit);
  CHECK(R.clause[0]);
  CHECK(R.clause[1]);
  CHECK(R.clause[2]);
  CHECK(R.clause[3]);
  CHECK(R.clause[4]);
  CHECK(R.clause[5]);
  CHECK(R.dist_before > R.dist_after);
  CHECK(R.k >= 6);
  CHECK(R.n_I2 > 0);
  // gauge recomputed from scratch
  CHECK(std::abs(gauge(res.w, band).gamma - gauge(w, band, true).gamma) < eps / 2);
  CHECK(distance_to_inclusion(res.w, band).integral <= 0.1 * width * w.region_measure());
  // quadrature on ramps stays below the Lipschitz bound
  CHECK(distance_to_inclusion(res.w, band, true).integral <= R.dist_after * (1 + 1e-12));

  // already good enough: unchanged
  auto again = density_step(res.w, band, 0.1 * width, eps, eta, 7);
  CHECK(again.report.short_circuit);
  CHECK(again.w.patches.size() == res.w.patches.size());

  // delta_k = 1/k from the base field
  double prev = INFINITY;
  for (int k = 1; k <= 5; ++k) {
    auto s = density_step(w, band, 1.0 / k, eps, eta, 7);
    CHECK(s.report.ok());
    CHECK(s.report.dist_after <= w.region_measure() / k);
    CHECK(s.report.dist_after < prev);
    prev = s.report.dist_after;
  }

  DensityOptions tight;
  tight.k_max = 6;
  try {
    density_step(w, band, 0.5, 0.01, eta, 7, tight);
    FAIL("expected a step failure");
  } catch (const StepFailure& e) {
    CHECK_FALSE(e.constraint.empty());
  }
}

TEST_CASE("seeds change the laminate order only") {
  const Band band(classified(hollig_pl_flux(20.5)), 0.6, 0.9);
  auto w = wide_fixture(band);
  auto a = density_step(w, band, 0.5, 2.0, 0.1, 1), b = density_step(w, band, 0.5, 2.0, 0.1, 2);
  REQUIRE(a.w.patches.size() == b.w.patches.size());
  long flips = 0;
  for (std::size_t k = 0; k < a.w.patches.size(); ++k) {
    CHECK(a.w.patches[k].lam_plus == b.w.patches[k].lam_plus);
    flips += a.w.patches[k].flip != b.w.patches[k].flip;
  }
  CHECK(flips > 0);
  CHECK(a.report.dist_after == Approx(b.report.dist_after).epsilon(1e-12));
}

TEST_CASE("auxiliary pair") {
  auto heat = [](int nx) {
    Grid g{1.0, nx, {}};
    SolveOptions o;
    o.dt = g.dx() * g.dx();
    o.stride = 16;
    std::vector<double> u0(nx + 1);
    for (int i = 0; i <= nx; ++i) u0[i] = std::cos(M_PI * g.x(i));
    return solve(linear_flux(), u0, g, 0.05, o);
  };
  auto tr = heat(128);
  auto w = build_auxiliary(tr, linear_flux());
  double err = 0;
  for (int n = 0; n + 1 < w.nt(); ++n)
    for (int i = 0; i < w.nx; ++i) {
      double x = (i + 0.5) * w.dx(), t = 0.5 * (w.t[n] + w.t[n + 1]);
      err = std::max(err, std::abs(w.jac(i, n).vt + M_PI * std::exp(-M_PI * M_PI * t) * std::sin(M_PI * x)));
    }
  CHECK(err < 2e-3);
  double ut = 0;
  for (int n = 0; n + 1 < w.nt(); ++n)
    for (int i = 0; i < w.nx; ++i) ut = std::max(ut, std::abs(w.jac(i, n).ut));
  CHECK(w.b == Approx(ut + 1));

  // v_x - u at nodes: second order
  std::vector<double> gaps;
  for (int nx : {64, 128, 256}) {
    auto ww = build_auxiliary(heat(nx), linear_flux());
    double m = 0;
    for (int n = 0; n < ww.nt(); ++n)
      for (int i = 1; i < ww.nx; ++i)
        m = std::max(m, std::abs((ww.v[ww.node(i + 1, n)] - ww.v[ww.node(i - 1, n)]) / (2 * ww.dx()) -
                                 ww.u[ww.node(i, n)]));
    gaps.push_back(m);
  }
  CHECK(gaps[0] / gaps[1] == Approx(4).epsilon(0.1));
  CHECK(gaps[1] / gaps[2] == Approx(4).epsilon(0.1));

  Grid g{1.0, 32, {}};
  auto flat = solve(linear_flux(), std::vector<double>(33, 2.5), g, 0.1);
  auto wf = build_auxiliary(flat, linear_flux());
  for (int n = 0; n < wf.nt(); ++n)
    for (int i = 0; i <= 32; ++i) CHECK(wf.v[wf.node(i, n)] == Approx(2.5 * g.x(i)).margin(1e-13));

  CHECK_THROWS_AS(build_auxiliary(flat, cubic_flux()), PreconditionError);
}

TEST_CASE("Q sets") {
  auto ho = classified(hollig_pl_flux());
  auto sm = modify_hollig(ho, {0.6, 0.9}).as_model();
  Grid g{1.0, 64, {}};
  SolveOptions o;
  o.dt = 1e-3;
  auto u0 = [&](double amp) {
    std::vector<double> u(65);
    for (int i = 0; i <= 64; ++i) u[i] = -amp / M_PI * std::cos(M_PI * g.x(i));
    return u;
  };
  auto tr = solve(sm, u0(1.8), g, 1.0, o);
  auto q1 = detect_Q_sets(tr, s_minus(ho, 0.6), s_plus(ho, 0.9));
  auto q2 = detect_Q_sets(tr, s_minus(ho, 0.9), s_plus(ho, 0.6));
  CHECK_FALSE(q1.empty());
  CHECK_FALSE(q2.empty());
  CHECK(q1.bounded);
  CHECK(q2.t_sup < q1.t_sup);
  CHECK(q1.boundary_distance > 0);
  CHECK(q1.t_inf == 0);

  // F cells straddle the level
  auto w = field_from_rows(tr.grid.L, tr.grid.times, tr.u);
  for (int n = 0; n + 1 < w.nt(); ++n)
    for (int i = 0; i < w.nx; ++i)
      if (q1.level_lo[w.cell(i, n)]) {
        double p = w.jac(i, n).ux, spread = 0;
        if (i > 0) spread = std::max(spread, std::abs(w.jac(i - 1, n).ux - p));
        if (i + 1 < w.nx) spread = std::max(spread, std::abs(w.jac(i + 1, n).ux - p));
        if (n > 0) spread = std::max(spread, std::abs(w.jac(i, n - 1).ux - p));
        if (n + 2 < w.nt()) spread = std::max(spread, std::abs(w.jac(i, n + 1).ux - p));
        CHECK(std::abs(p - 0.6) <= spread);
      }

  auto small = solve(sm, u0(0.3), g, 0.5, o);
  CHECK(detect_Q_sets(small, 0.6, 2.4).empty());
}
