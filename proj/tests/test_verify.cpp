#include <catch_amalgamated.hpp>

#include "fbd/verify.hpp"

using namespace fbd;
using Catch::Approx;

namespace {

// e^{-pi^2 t} cos(pi x) sampled on nodes, rows every dt = dx / 2 up to tau
Trajectory heat_exact(int nx, double tau) {
  Trajectory tr;
  tr.grid = Grid{1.0, nx, {}};
  tr.flux_id = "linear";
  const double h = 1.0 / nx;
  const int nt = static_cast<int>(std::lround(2 * tau / h));
  for (int n = 0; n <= nt; ++n) {
    double t = tau * n / nt;
    std::vector<double> row(nx + 1);
    for (int i = 0; i <= nx; ++i) row[i] = std::exp(-M_PI * M_PI * t) * std::cos(M_PI * i * h);
    tr.grid.times.push_back(t);
    tr.u.push_back(row);
  }
  tr.initial = tr.u.front();
  return tr;
}

double cos1_residual(int nx) {
  auto tr = heat_exact(nx, 0.1);
  auto c = composite_of(tr, linear_flux());
  TestFunctionFamily fam;
  fam.L = 1;
  fam.tau = 0.1;
  fam.modes = {{1, 0}};
  return weak_residual(c, linear_flux(), fam).max_abs;
}

Trajectory stationary(int nx, double slope, double offset = 0) {
  Trajectory tr;
  tr.grid = Grid{1.0, nx, {0.0, 0.5, 1.0, 2.0}};
  std::vector<double> row(nx + 1);
  for (int i = 0; i <= nx; ++i) row[i] = offset + slope * i / nx;
  tr.u.assign(4, row);
  tr.initial = row;
  return tr;
}

}  // namespace

TEST_CASE("weak residual of the exact heat solution") {
  double r128 = cos1_residual(128), r256 = cos1_residual(256), r512 = cos1_residual(512);
  CHECK(r256 <= 1e-3);
  CHECK(r128 / r256 == Approx(4).margin(0.8));
  double order = std::log2(r256 / r512);
  CHECK(order >= 1.8);
}

TEST_CASE("default family has enough members and is smooth at the ends") {
  auto fam = TestFunctionFamily::standard(1.0, 2.0);
  CHECK(fam.modes.size() == 15);
  for (const auto& k : fam.modes) {
    CHECK(std::abs(fam.zeta_x(k, 0.0, 1.0)) < 1e-14);
    CHECK(std::abs(fam.zeta_x(k, 1.0, 1.0)) < 1e-12);
  }
}

TEST_CASE("constant test function measures the mass drift") {
  Grid g{1.0, 64, {}};
  auto tr = solve(linear_flux(), [] {
    std::vector<double> u(65);
    for (int i = 0; i <= 64; ++i) u[i] = std::cos(M_PI * i / 64.0) + 0.3 * std::cos(3 * M_PI * i / 64.0);
    return u;
  }(), g, 0.2);
  auto c = composite_of(tr, linear_flux());
  TestFunctionFamily fam;
  fam.L = 1;
  fam.tau = 0.2;
  fam.modes = {{0, 0}};
  auto R = weak_residual(c, linear_flux(), fam);
  const double dx = g.dx();
  CHECK(std::abs(R.total[0]) < 1e-14);

  // break conservation on purpose: the identity still reports the drift to round-off
  for (auto& v : tr.u.back()) v += 0.01;
  auto c2 = composite_of(tr, linear_flux());
  auto R2 = weak_residual(c2, linear_flux(), fam);
  double drift = mass(tr.u.back(), dx) - mass(tr.u.front(), dx);
  CHECK(R2.total[0] == Approx(drift).margin(1e-14));
  CHECK(R2.patch[0] == 0.0);
}

TEST_CASE("residual of a discrete solve stays small on the whole family") {
  Grid g{1.0, 128, {}};
  std::vector<double> u0(129);
  for (int i = 0; i <= 128; ++i) u0[i] = 0.25 * std::cos(M_PI * i / 128.0);
  auto pm = classified(perona_malik_flux());
  auto tr = solve(pm, u0, g, 0.2);
  auto R = weak_residual(tr, pm);
  CHECK(R.modes.size() == 15);
  CHECK(R.max_abs < 5e-3);
  CHECK(R.max_patch == 0.0);
  CHECK(R.tau == Approx(0.2));
}

TEST_CASE("envelope check") {
  Grid g{1.0, 64, {}};
  std::vector<double> u0(65);
  for (int i = 0; i <= 64; ++i) u0[i] = std::cos(M_PI * i / 64.0);
  auto tr = solve(linear_flux(), u0, g, 0.3);
  auto E = envelope_check(tr);
  CHECK(E.pass);
  CHECK(E.worst <= 1e-9);
  CHECK(E.curve.empty());

  auto flat = solve(linear_flux(), std::vector<double>(65, 0.0), g, 0.1);
  auto F = envelope_check(flat);
  CHECK(F.pass);
  CHECK(F.worst == 0.0);

  // corrupt one snapshot
  auto bad = tr;
  const int n = bad.nt() / 2;
  bad.u[n][10] += 0.5;
  auto B = envelope_check(bad);
  CHECK_FALSE(B.pass);
  CHECK(B.row == n);
  CHECK(B.time == bad.t(n));
  CHECK(B.worst > 0.1);
  CHECK_FALSE(B.curve.empty());
}

TEST_CASE("energy averages of stationary fields") {
  auto pm = classified(perona_malik_flux());
  Potential Wpm(pm);
  CHECK(energy_average(stationary(64, 0.0, 2.0), Wpm, 0.0, 2.0) == Approx(0.0).margin(1e-12));
  CHECK(energy_average(stationary(64, 0.5), Wpm, 0.0, 2.0) == Approx(0.5 * std::log(1.25)).margin(1e-6));
  CHECK(energy_average(stationary(64, 0.5), Wpm, 0.3, 1.7) == Approx(0.11157).margin(1e-5));

  auto cubic = classified(cubic_flux());
  Potential Wc(cubic);
  CHECK(energy_average(stationary(64, 1.0), Wc, 0.0, 1.0) == Approx(0.0).margin(1e-9));

  CHECK_THROWS_AS(energy_average(stationary(64, 0.5), Wpm, 0.0, 3.0), DomainError);
  CHECK_THROWS_AS(energy_average(stationary(64, 0.5), Wpm, -0.1, 1.0), DomainError);
}

TEST_CASE("energy average ignores constant shifts") {
  auto pm = classified(perona_malik_flux());
  Potential W(pm);
  Grid g{1.0, 64, {}};
  std::vector<double> u0(65);
  for (int i = 0; i <= 64; ++i) u0[i] = 0.3 * std::cos(M_PI * i / 64.0);
  auto tr = solve(pm, u0, g, 0.5);
  auto shifted = tr;
  for (auto& row : shifted.u)
    for (double& v : row) v += 7.25;
  double a = energy_average(tr, W, 0.05, 0.45), b = energy_average(shifted, W, 0.05, 0.45);
  CHECK(a == Approx(b).epsilon(1e-12));
  CHECK(a > 0);
}

TEST_CASE("field energy average matches the trajectory one without laminates") {
  auto pm = classified(perona_malik_flux());
  Potential W(pm);
  auto tr = stationary(32, 0.5);
  auto w = field_from_rows(1.0, tr.grid.times, tr.u);
  CHECK(energy_average(w, W) == Approx(0.5 * std::log(1.25)).margin(1e-6));
}

TEST_CASE("concentration per snapshot") {
  auto tr = stationary(32, 0.7);
  for (double d : concentration_check(tr, -0.7, 0.7)) CHECK(d == Approx(0.0).margin(1e-12));
  for (double d : concentration_check(tr, -1.0, 1.0)) CHECK(d == Approx(0.3).margin(1e-12));

  // laminated cells: both phases are measured, unlaminated cells only by measure
  auto w = field_from_rows(1.0, tr.grid.times, tr.u);
  w.ensure_patch_storage();
  CellPatch p;
  p.lam_plus = 0.3;
  p.lam_minus = 1.0;
  p.periods = 4;
  p.ramp = 0.05;
  w.patches.push_back(p);
  for (int i = 0; i < 16; ++i) w.patch_of[w.cell(i, 0)] = 0;
  auto C = concentration_check(w, -0.3, 1.0);
  REQUIRE(C.sup.size() == 3);
  CHECK(C.sup[0] == Approx(0.0).margin(1e-12));
  CHECK(std::isnan(C.sup[1]));
  CHECK(C.unpatched_measure == Approx(1.0 * 2.0 - 0.5 * 0.5));
}
