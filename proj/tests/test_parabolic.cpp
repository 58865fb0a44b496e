#include <catch_amalgamated.hpp>

#include "fbd/parabolic.hpp"

using namespace fbd;
using Catch::Approx;

namespace {

std::vector<double> cosine(int nx, double L, double amp, int mode = 1, double offset = 0) {
  std::vector<double> u(nx + 1);
  for (int i = 0; i <= nx; ++i) u[i] = offset + amp * std::cos(mode * M_PI * i * L / nx / L);
  return u;
}

double heat_error(int nx, double t) {
  Grid g{1.0, nx, {}};
  SolveOptions o;
  o.dt = g.dx() * g.dx();
  o.stride = 1 << 30;
  auto tr = solve(linear_flux(), cosine(nx, 1, 1), g, t, o);
  double err = 0;
  for (int i = 0; i <= nx; ++i)
    err = std::max(err, std::abs(tr.back()[i] - std::exp(-M_PI * M_PI * t) * std::cos(M_PI * g.x(i))));
  return err;
}

}  // namespace

TEST_CASE("heat equation against the separated solution") {
  CHECK(heat_error(256, 0.1) <= 5e-3);
  double ratio = heat_error(32, 0.1) / heat_error(64, 0.1);
  CHECK(ratio >= 3.5);
  CHECK(ratio <= 4.5);
  CHECK(std::exp(-M_PI * M_PI * 0.1) == Approx(0.37271).margin(1e-5));
}

TEST_CASE("constant data is stationary and mass is conserved") {
  Grid g{1.0, 32, {}};
  auto pm = classified(perona_malik_flux());
  auto sm = modify_pm_smoothing(pm, {-0.3, -0.4, 0.3, 0.4, -1.5, 1.5}).as_model();
  auto tr = solve(sm, std::vector<double>(33, 3.0), g, 0.5);
  for (const auto& row : tr.u)
    for (double v : row) CHECK(v == 3.0);

  auto heat = solve(linear_flux(), cosine(64, 1, 1), Grid{1.0, 64, {}}, 0.3);
  for (const auto& row : heat.u) CHECK(std::abs(mass(row, 1.0 / 64)) < 1e-14);
}

TEST_CASE("envelopes are non-expanding for random data") {
  auto pm = classified(perona_malik_flux());
  auto sm = modify_pm_smoothing(pm, {-0.3, -0.4, 0.3, 0.4, -2.0, 2.0}).as_model();
  Rng rng(11);
  for (int trial = 0; trial < 6; ++trial) {
    const int nx = 48;
    std::vector<double> u0(nx + 1, 0.0);
    for (int k = 1; k <= 4; ++k) {
      double a = (rng.uniform() - 0.5) * 0.6 / k;
      for (int i = 0; i <= nx; ++i) u0[i] += a * std::cos(k * M_PI * i / nx);
    }
    Grid g{1.0, nx, {}};
    auto tr = solve(sm, u0, g, 1.0);
    double m0 = mass(u0, g.dx());
    for (int n = 1; n < tr.nt(); ++n) {
      const auto &a = tr.u[n - 1], &b = tr.u[n];
      CHECK(*std::max_element(b.begin(), b.end()) <= *std::max_element(a.begin(), a.end()) + 1e-9);
      CHECK(*std::min_element(b.begin(), b.end()) >= *std::min_element(a.begin(), a.end()) - 1e-9);
      CHECK(statistic(b, g.dx(), Statistic::max_ux) <= statistic(a, g.dx(), Statistic::max_ux) + 1e-9);
      CHECK(statistic(b, g.dx(), Statistic::min_ux) >= statistic(a, g.dx(), Statistic::min_ux) - 1e-9);
      CHECK(std::abs(mass(b, g.dx()) - m0) < 1e-13);
    }
  }
}

TEST_CASE("decay bound formula") {
  auto d = gamma_bound(linear_flux(), 1.0, 0.5, 1.0, 2.0, 1.0);
  double e = std::exp(-1.0);
  CHECK(d.theta == Approx(1).margin(1e-12));
  CHECK(d.theta_tilde == 0);
  CHECK(d.gamma == Approx(0.5 * e / (2 - e)).margin(1e-12));
  CHECK(d.gamma == Approx(0.11270).margin(1e-5));
  double prev = 0;
  for (double c : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    FluxModel f;
    f.f = [c](double s) { return c * s; };
    f.df = [c](double) { return c; };
    double gmm = gamma_bound(f, 1.0, 0.5, 1.0, 2.0, 1.0).gamma;
    CHECK(gmm > prev);
    prev = gmm;
  }
}

TEST_CASE("decay rate fit") {
  Grid g{1.0, 128, {}};
  SolveOptions o;
  o.dt = 1e-4;
  o.stride = 20;
  auto tr = solve(linear_flux(), cosine(128, 1, 1), g, 0.5, o);
  auto fit = decay_rate_estimate(tr);
  CHECK(fit.rate == Approx(M_PI * M_PI).epsilon(0.05));
  CHECK(fit.rate >= gamma_bound(linear_flux(), M_PI, 0.5, 1, 2, 1).gamma);
  auto flat = solve(linear_flux(), std::vector<double>(129, 1.0), g, 0.1);
  CHECK_THROWS_AS(decay_rate_estimate(flat), EstimateError);
}

TEST_CASE("hitting times") {
  Grid g{1.0, 256, {}};
  SolveOptions o;
  o.dt = g.dx() * g.dx();
  o.stride = 4;
  auto tr = solve(linear_flux(), cosine(256, 1, -1), g, 0.12, o);
  double p0 = statistic(tr.u[0], g.dx(), Statistic::max_ux);
  CHECK(first_hitting_time(tr, Statistic::max_ux, M_PI / 2) == Approx(std::log(2.0) / (M_PI * M_PI)).margin(2e-4));
  CHECK(std::log(2.0) / (M_PI * M_PI) == Approx(0.07023).margin(1e-5));
  CHECK(first_hitting_time(tr, Statistic::max_ux, p0) == 0);
  try {
    first_hitting_time(tr, Statistic::max_ux, -0.1);
    FAIL("expected not-reached");
  } catch (const NotReachedError& e) {
    CHECK(e.closest >= 0);
  }

  // event landing puts the last snapshot on the level
  Trajectory ev = start_trajectory(linear_flux(), cosine(64, 1, -1), Grid{1.0, 64, {}});
  auto hit = solve_until(linear_flux(), ev, Statistic::max_ux, 1.0, 1.0);
  CHECK(hit.reached);
  CHECK(statistic(ev.back(), 1.0 / 64, Statistic::max_ux) <= 1.0);
  CHECK(statistic(ev.back(), 1.0 / 64, Statistic::max_ux) == Approx(1.0).margin(1e-9));
  CHECK(ev.grid.times.back() == Approx(hit.time));
}

TEST_CASE("solver rejects a non-monotone flux") {
  Grid g{1.0, 32, {}};
  CHECK_THROWS_AS(solve(classified(perona_malik_flux()), cosine(32, 1, 1), g, 0.1), PreconditionError);
  CHECK_THROWS_AS(solve(linear_flux(), cosine(8, 1, 1), Grid{1.0, 8, {}}, 0.1), DomainError);
}
