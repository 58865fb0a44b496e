#include <catch_amalgamated.hpp>

#include "fbd/flux.hpp"

using namespace fbd;
using Catch::Approx;

namespace {

// roots of r s^2 - s + r = 0, the two preimages of r under s/(1+s^2)
std::pair<double, double> pm_roots(double r) {
  double d = std::sqrt(1 - 4 * r * r);
  return {(1 - d) / (2 * r), (1 + d) / (2 * r)};
}

}  // namespace

TEST_CASE("classification of the closed forms") {
  auto pm = classify_flux(perona_malik_flux());
  CHECK(pm.family == Family::perona_malik);
  CHECK(pm.lm.s1 == Approx(-1).margin(1e-10));
  CHECK(pm.lm.s2 == Approx(1).margin(1e-10));
  CHECK(perona_malik_flux()(pm.lm.s2) == Approx(0.5).margin(1e-12));

  auto cu = classify_flux(cubic_flux());
  CHECK(cu.family == Family::non_fourier);
  REQUIRE(cu.zeros.size() == 3);
  CHECK(cu.lm.s0m == Approx(-1).margin(1e-10));
  CHECK(cu.lm.s0p == Approx(1).margin(1e-10));
  CHECK(cu.lm.s1 == Approx(-1 / std::sqrt(3.0)).margin(1e-10));
  CHECK(cu.lm.s2 == Approx(1 / std::sqrt(3.0)).margin(1e-10));

  CHECK(classify_flux(linear_flux()).family == Family::strictly_parabolic);

  auto ho = classify_flux(hollig_pl_flux());
  CHECK(ho.family == Family::hollig);
  CHECK(ho.lm.s1 == Approx(1).margin(1e-10));
  CHECK(ho.lm.s2 == Approx(2).margin(1e-10));
  CHECK(ho.lm.sbar1 == Approx(0.5).margin(1e-10));
  CHECK(ho.lm.sbar2 == Approx(2.5).margin(1e-10));
}

TEST_CASE("classification rejects broken hypotheses") {
  // hollig shape whose local minimum dips below zero
  auto bad = knot_flux({-1, 0, 1, 2, 3, 50}, {-1, 0, 1, -0.2, 0.5, 48});
  bad.lo = -1;
  try {
    classify_flux(bad);
    FAIL("expected a hypothesis error");
  } catch (const HypothesisError& e) {
    CHECK(e.clause == "hollig(c)");
  }
  FluxModel wavy;
  wavy.f = [](double s) { return s + 2 * std::sin(s); };
  wavy.df = [](double s) { return 1 + 2 * std::cos(s); };
  CHECK_THROWS_AS(classify_flux(wavy), HypothesisError);
}

TEST_CASE("branch points") {
  auto pm = classified(perona_malik_flux());
  CHECK(s_minus(pm, 0.4) == Approx(0.5).margin(1e-10));
  CHECK(s_plus(pm, 0.4) == Approx(2.0).margin(1e-10));
  CHECK(s_minus(pm, 0.1) == Approx(0.1010205).margin(1e-6));
  CHECK(s_plus(pm, 0.1) == Approx(9.8989795).margin(1e-6));
  CHECK_THROWS_AS(s_plus(pm, 0.6), DomainError);
  CHECK_THROWS_AS(s_minus(pm, 0.0), DomainError);

  auto ho = classified(hollig_pl_flux());
  CHECK(s_minus(ho, 0.75) == Approx(0.75).margin(1e-11));
  CHECK(s_plus(ho, 0.75) == Approx(2.25).margin(1e-11));

  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    double r = 0.02 + 0.47 * rng.uniform();
    auto [lo, hi] = pm_roots(r);
    double sp = s_plus(pm, r), sm = s_minus(pm, r);
    CHECK(std::abs(pm(sp) - r) < 1e-10);
    CHECK(std::abs(pm(sm) - r) < 1e-10);
    CHECK(sp == Approx(hi).epsilon(1e-10));
    CHECK(sm == Approx(lo).epsilon(1e-10));
    CHECK(sp > 1);
    CHECK(sm < 1);
  }
  auto cu = classified(cubic_flux());
  for (int i = 0; i < 100; ++i) {
    double r = -0.38 + 0.76 * rng.uniform();
    CHECK(std::abs(cu(s_plus(cu, r)) - r) < 1e-10);
    CHECK(std::abs(cu(s_minus(cu, r)) - r) < 1e-10);
  }
}

TEST_CASE("branch pairs") {
  auto pm = classified(perona_malik_flux());
  auto bp = build_branch_pair(pm, 0.1, 0.15);
  CHECK(bp.g_plus(0.1) == Approx(pm_roots(0.1).second).epsilon(1e-12));
  CHECK(bp.g_minus(0.15) == Approx(pm_roots(0.15).first).epsilon(1e-12));
  CHECK(bp.g_plus(0.1) == Approx(9.89898).margin(1e-5));
  CHECK(bp.g_minus(0.15) == Approx(0.15351).margin(5e-5));
  for (int k = 0; k <= 1000; ++k) {
    double r = 0.1 + 0.05 * k / 1000;
    CHECK(bp.g_plus(r) - bp.g_minus(r) > 0);
    CHECK(std::abs(pm(bp.g_plus(r)) - r) < 1e-12);
  }
  auto ho = classified(hollig_pl_flux());
  auto hb = build_branch_pair(ho, 0.6, 0.9);
  for (double r : {0.6, 0.7, 0.85, 0.9}) {
    CHECK(hb.g_minus(r) == Approx(r).margin(1e-12));
    CHECK(hb.g_plus(r) == Approx(r + 1.5).margin(1e-12));
  }
  CHECK(hb.separation == Approx(1.5).margin(1e-12));
  CHECK_THROWS_AS(build_branch_pair(ho, 0.7, 0.7), DomainError);
}

TEST_CASE("potential matches antiderivatives") {
  auto Wp = potential(classified(perona_malik_flux()));
  CHECK(Wp(2.0) == Approx(0.80472).margin(1e-5));
  auto Wc = potential(classified(cubic_flux()));
  CHECK(Wc(1.0) == Approx(0).margin(1e-12));
  CHECK(Wc(-1.0) == Approx(0).margin(1e-12));
  CHECK(Wc(0.0) == Approx(0.25).margin(1e-12));
  auto Wl = potential(linear_flux());
  CHECK(Wl(0.0) == Approx(0).margin(1e-12));
  Rng rng(3);
  auto pm = perona_malik_flux();
  for (int i = 0; i < 200; ++i) {
    double a = -60 + 120 * rng.uniform(), b = -60 + 120 * rng.uniform();
    CHECK(Wp(b) - Wp(a) == Approx(0.5 * std::log((1 + b * b) / (1 + a * a))).margin(1e-10));
    double c = -3 + 6 * rng.uniform();
    CHECK(Wc(c) == Approx(std::pow(c, 4) / 4 - c * c / 2 + 0.25).margin(1e-10));
  }
  auto Wh = potential(classified(hollig_pl_flux()));
  CHECK(Wh(3.0) - Wh(0.0) == Approx(0.5 + 0.75 + 1.0).margin(1e-12));
}

TEST_CASE("energy of simple profiles") {
  auto Wp = potential(classified(perona_malik_flux()));
  auto Wc = potential(classified(cubic_flux()));
  const int n = 100;
  std::vector<double> flat(n + 1, 3.0), lin(n + 1), half(n + 1);
  for (int i = 0; i <= n; ++i) {
    lin[i] = i / double(n);
    half[i] = 0.5 * i / double(n);
  }
  CHECK(energy(flat, 1.0 / n, Wp) == Approx(0).margin(1e-14));
  CHECK(energy(lin, 1.0 / n, Wc) == Approx(0).margin(1e-10));
  CHECK(energy(half, 1.0 / n, Wp) == Approx(0.5 * std::log(1.25)).margin(1e-10));
  CHECK(energy(half, 1.0 / n, Wp) == Approx(0.11157).margin(1e-5));
}

TEST_CASE("modified fluxes") {
  auto ho = classified(hollig_pl_flux());
  auto mh = modify_hollig(ho, {0.6, 0.9});
  CHECK_FALSE(mh.check(10000).has_value());
  for (double s : {-3.0, 0.0, 0.3, 0.6, 2.4, 3.0, 10.0}) CHECK(mh(s) == ho(s));
  for (int i = 1; i < 10000; ++i) {
    double s = 0.6 + 1.8 * i / 10000;
    CHECK(mh.d(s) > 0);
  }

  auto cu = classified(cubic_flux());
  auto mn = modify_non_fourier(cu, {0.2});
  CHECK_FALSE(mn.check().has_value());
  CHECK(mn(0.0) == Approx(0).margin(1e-14));
  double b = s_plus(cu, 0.2);
  for (int i = 0; i < 1000; ++i) {
    double s = 1 + (b - 1) * i / 1000.0;
    CHECK(mn(s) > cu(s));
  }

  auto pm = classified(perona_malik_flux());
  auto mb = modify_pm_blowup(pm, {0.1, 0.15, s_minus(pm, 0.2)});
  CHECK_FALSE(mb.check().has_value());
  double pin = s_minus(pm, 0.1);
  CHECK(pin == Approx(0.10102).margin(1e-5));
  for (int i = 0; i <= 100; ++i) {
    double s = pin * i / 100;
    CHECK(mb(s) == pm(s));
  }
  for (int i = 1; i <= 1000; ++i) {
    double s = pin + (s_minus(pm, 0.2) - pin) * i / 1000;
    CHECK(mb(s) < std::min(pm(s), 0.15));
  }

  auto ms = modify_pm_smoothing(pm, {-0.3, -0.4, 0.3, 0.4, -1.5, 1.5});
  CHECK_FALSE(ms.check().has_value());
  CHECK(ms(0.2) == pm(0.2));
  CHECK(ms(1.4) < 0.4);
  CHECK(ms(-1.4) > -0.4);

  // tabulated slope positive on every interval of the window
  auto sm = ms.as_model();
  for (int i = 0; i < 20000; ++i) {
    double s0 = -50 + 100.0 * i / 20000, s1 = -50 + 100.0 * (i + 1) / 20000;
    CHECK(sm(s1) > sm(s0));
  }
}
