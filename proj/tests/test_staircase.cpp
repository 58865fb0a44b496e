#include <catch_amalgamated.hpp>

#include <sstream>

#include "fbd/staircase.hpp"

using namespace fbd;
using Catch::Approx;

namespace {

// u0 = sum A_k cos(k pi x) on nx+1 nodes of [0, 1]
std::vector<double> cosines(int nx, std::vector<std::pair<int, double>> terms) {
  std::vector<double> u(nx + 1, 0.0);
  for (int i = 0; i <= nx; ++i)
    for (auto [k, a] : terms) u[i] += a * std::cos(k * M_PI * i / nx);
  return u;
}

StaircaseConfig small(Scheme s, int nx = 64) {
  StaircaseConfig c;
  c.scheme = s;
  c.nx = nx;
  return c;
}

const FluxModel& pm() {
  static const FluxModel m = classified(perona_malik_flux());
  return m;
}

// PM branch points in closed form
double sp(double r) { return (1 + std::sqrt(1 - 4 * r * r)) / (2 * r); }
double sm(double r) { return (1 - std::sqrt(1 - 4 * r * r)) / (2 * r); }

}  // namespace

TEST_CASE("blow-up schedule") {
  auto cfg = small(Scheme::pm_blowup);
  auto S = blowup_schedule(pm(), 1.0, cfg);
  REQUIRE(S.r.size() == 5);
  const double expect[5] = {0.45, 0.405, 0.225, 0.1125, 0.05625};
  for (int j = 0; j < 5; ++j) CHECK(S.r[j] == Approx(expect[j]).epsilon(1e-12));
  for (int j = 0; j < 5; ++j) {
    double prev = j == 0 ? 0.5 : S.r[j - 1];
    CHECK(S.r[j] < S.rp[j]);
    CHECK(S.rp[j] < prev);
  }
  // the gap rule holds wherever it was used
  for (int j = 2; j < 5; ++j) CHECK(sp(S.r[j]) - sp(S.rp[j]) < std::ldexp(1.0, -j));
  CHECK(S.rp[0] == Approx(0.475));
  // witness bounds at least double per step from j = 1
  for (int j = 2; j < 5; ++j) CHECK(sp(S.rp[j]) >= 2 * sp(S.rp[j - 1]));

  StaircaseConfig bad = cfg;
  bad.r = {0.4, 0.3, 0.2, 0.1, 0.05};
  bad.rp = {0.45, 0.5, 0.25, 0.15, 0.06};
  CHECK_THROWS_AS(blowup_schedule(pm(), 1.0, bad), ConfigError);
}

TEST_CASE("blow-up energy bound against the quadratic roots") {
  Potential W(pm());
  CHECK(sp(0.1) == Approx(9.89898).margin(1e-5));
  CHECK(sm(0.2) == Approx(0.20871).margin(1e-5));
  CHECK(sp(0.15) == Approx(6.51313).margin(1e-5));
  CHECK(sm(0.15) == Approx(0.15354).margin(1e-5));
  double oracle = 3 * sp(0.1) * sm(0.2) / (2 * (sp(0.15) - sm(0.15))) + 0.5 * std::log(1 + sm(0.15) * sm(0.15));
  double d1 = blowup_energy_bound(pm(), W, 1.0, 0.1, 0.15, s_minus(pm(), 0.2));
  CHECK(d1 == Approx(oracle).margin(1e-8));
  CHECK(d1 == Approx(0.499).margin(0.01));
  CHECK(blowup_gauge_bound(pm(), 0.15, sm(0.2)) == Approx(sm(0.2) / (sp(0.15) - sm(0.15))).margin(1e-10));
}

TEST_CASE("blow-up staircase from a monotone datum") {
  auto cfg = small(Scheme::pm_blowup);
  auto u0 = cosines(64, {{1, -1 / M_PI}});
  auto rep = run_blowup(u0, pm(), cfg);
  CHECK(rep.handoff == "case1");
  REQUIRE(rep.steps.size() == 5);
  for (std::size_t k = 1; k < rep.steps.size(); ++k) {
    const auto& s = rep.steps[k];
    CHECK(s.t_j > rep.steps[k - 1].t_j);
    CHECK(s.t_j == rep.steps[k - 1].t_next);
    CHECK(s.e < rep.steps[k - 1].e);
    CHECK(s.blowup_bound > rep.steps[k - 1].blowup_bound);
  }
  for (const auto& s : rep.steps) {
    CHECK(s.gauge_ok());
    CHECK(s.energy_ok());
    CHECK(s.stability_ok());
    CHECK(s.blowup_ok());
    CHECK(s.n_region > 0);
    CHECK(s.dist_final < s.dist_base);
  }
  CHECK(rep.composite.segments.size() == 5);
  // glued at the hitting rows: mass is that of u0
  const double dx = 1.0 / 64;
  for (const auto& row : rep.base.u) CHECK(mass(row, dx) == Approx(mass(u0, dx)).margin(1e-12));

  std::ostringstream csv;
  write_steps_csv(csv, rep, "# test");
  std::string line;
  std::istringstream in(csv.str());
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 2 + 4);
}

TEST_CASE("blow-up dispatch") {
  auto cfg = small(Scheme::pm_blowup);
  CHECK_THROWS_AS(run_blowup(std::vector<double>(65, 1.0), pm(), cfg), PreconditionError);

  // decreasing datum runs mirrored
  auto down = cosines(64, {{1, 1 / M_PI}});
  auto up = cosines(64, {{1, -1 / M_PI}});
  auto a = run_blowup(down, pm(), cfg), b = run_blowup(up, pm(), cfg);
  CHECK(a.handoff == "case2");
  REQUIRE(a.steps.size() == b.steps.size());
  CHECK(a.steps[0].mirrored);
  for (std::size_t k = 0; k < a.steps.size(); ++k) CHECK(a.steps[k].t_next == Approx(b.steps[k].t_next).epsilon(1e-12));
  REQUIRE(a.base.nt() == b.base.nt());
  for (int i = 0; i <= 64; ++i) CHECK(a.base.back()[i] == Approx(-b.base.back()[i]).margin(1e-12));
  const auto& wa = a.composite.segments[1];
  const auto& wb = b.composite.segments[1];
  REQUIRE(wa.patches.size() == wb.patches.size());
  if (!wa.patches.empty()) {
    CHECK(wa.patches[0].lam_plus == wb.patches[0].lam_minus);
    CHECK(wa.patches[0].flip != wb.patches[0].flip);
  }
}

TEST_CASE("hierarchy") {
  auto cfg = small(Scheme::pm_hierarchy);
  // small negative lobe near x = 0
  auto u0 = cosines(64, {{1, -1 / M_PI}, {2, 0.55 / (2 * M_PI)}});
  auto H = run_hierarchy(u0, pm(), cfg);
  CHECK(H.terminated);
  CHECK(H.handoff == "case1");
  REQUIRE_FALSE(H.steps.empty());
  CHECK(H.steps.back().a == 2);
  CHECK(H.scenario.front() == '(');
  for (const auto& s : H.steps) {
    CHECK(s.t_next == Approx(std::max(s.t1, s.t2)));
    CHECK(s.r1 < 0);
    CHECK(s.r2 > 0);
    CHECK(s.r1p < s.r1);
    CHECK(s.r2p > s.r2);
  }

  // even about the midpoint: both sides leave at the same time
  auto sym = cosines(64, {{2, 1.5 / (2 * M_PI)}});
  auto S = run_hierarchy(sym, pm(), cfg);
  CHECK(S.steps[0].t1 == Approx(S.steps[0].t2).margin(1e-9));

  CHECK_THROWS_AS(run_hierarchy(cosines(64, {{1, -1 / M_PI}}), pm(), cfg), PreconditionError);

  auto rep = run_blowup(u0, pm(), cfg);
  CHECK(rep.scenario == H.scenario);
  CHECK(rep.handoff == "case1");
  CHECK(rep.steps.size() == 5);
  CHECK(rep.steps.front().t_j == Approx(H.steps.back().t_next));
}

TEST_CASE("allocation on the cubic") {
  auto cfg = small(Scheme::nf_allocation);
  cfg.J = 3;
  auto nf = classified(cubic_flux());
  auto u0 = cosines(64, {{1, -0.8 / M_PI}});
  auto rep = run_allocation(u0, nf, cfg);
  CHECK(rep.lambda0 == Approx(0.5));
  CHECK(rep.target == Approx(0.0).margin(1e-9));
  REQUIRE(rep.steps.size() == 4);
  for (std::size_t j = 1; j < rep.steps.size(); ++j) {
    const auto& s = rep.steps[j];
    CHECK(s.t_j > static_cast<double>(j));
    CHECK(s.t_j > rep.steps[j - 1].t_j);
    CHECK(s.lower <= s.gamma_base);
    CHECK(s.gamma_base <= s.upper);
    CHECK(s.energy_avg <= s.d);
    CHECK(s.concentration <= s.concentration_bound);
    CHECK(s.n_defect == 0);
    if (j > 1) {
      CHECK(s.concentration_bound < rep.steps[j - 1].concentration_bound);
      CHECK(s.energy_avg < rep.steps[j - 1].energy_avg);
      CHECK(s.upper - s.lower < rep.steps[j - 1].upper - rep.steps[j - 1].lower);
    }
  }
  CHECK_THROWS_AS(run_allocation(u0, pm(), cfg), PreconditionError);
}

TEST_CASE("Hollig smoothing") {
  auto cfg = small(Scheme::hollig_smoothing);
  auto ho = classified(hollig_pl_flux());
  auto u0 = cosines(64, {{1, -1.8 / M_PI}});
  auto rep = run_smoothing(u0, ho, cfg);
  const auto& S = rep.smoothing;
  CHECK_FALSE(S.classical);
  CHECK_FALSE(S.q1.empty());
  CHECK(S.q1.bounded);
  CHECK(S.outside_gap == 0.0);
  CHECK(S.final_distance <= S.final_budget);
  CHECK(S.envelopes.pass);
  REQUIRE(S.decay.has_value());
  CHECK(S.decay->rate > 0);
  CHECK(rep.steps.at(0).n_patched > 0);

  // another seed only reorders the laminates
  auto cfg2 = cfg;
  cfg2.seed = 2;
  auto rep2 = run_smoothing(u0, ho, cfg2);
  REQUIRE(rep.base.nt() == rep2.base.nt());
  const auto& a = rep.composite.segments[0];
  const auto& b = rep2.composite.segments[0];
  CHECK(a.u == b.u);
  long differ = 0;
  for (std::size_t k = 0; k < a.patches.size(); ++k) differ += a.patches[k].flip != b.patches[k].flip;
  CHECK(differ > 0);

  CHECK_THROWS_AS(run_smoothing(cosines(64, {{1, -0.4 / M_PI}}), ho, cfg), PreconditionError);
  auto flat = run_smoothing(std::vector<double>(65, 0.3), ho, cfg);
  CHECK(flat.smoothing.classical);
  CHECK(flat.smoothing.q1.empty());
  CHECK_FALSE(flat.notices.empty());
  for (const auto& row : flat.base.u)
    for (double v : row) CHECK(v == 0.3);
}

TEST_CASE("Perona-Malik smoothing") {
  auto cfg = small(Scheme::pm_smoothing);
  auto classical = run_smoothing(cosines(64, {{1, -0.5 / M_PI}}), pm(), cfg);
  CHECK(classical.smoothing.classical);
  CHECK(classical.smoothing.envelopes.pass);
  REQUIRE(classical.smoothing.decay.has_value());
  CHECK(classical.smoothing.decay->rate > 0);

  auto u0 = cosines(64, {{1, -1.5 / M_PI}, {2, 3.0 / (2 * M_PI)}});
  auto rep = run_smoothing(u0, pm(), cfg);
  CHECK(rep.m0 < pm().lm.s1);
  CHECK(rep.M0 > pm().lm.s2);
  CHECK_FALSE(rep.smoothing.classical);
  CHECK_FALSE(rep.smoothing.q1.empty());
  CHECK_FALSE(rep.smoothing.q2.empty());
  CHECK(rep.smoothing.outside_gap == 0.0);
  CHECK(rep.smoothing.envelopes.pass);
  CHECK(rep.steps[0].n_patched > 0);
}
