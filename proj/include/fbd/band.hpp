#pragma once

#include "fbd/flux.hpp"

namespace fbd {

// The open band between the two inverse branches over (r1, r2) in the (s, r)
// plane, with Euclidean distances to its pieces.
class Band {
 public:
  Band() = default;
  explicit Band(BranchPair bp) : bp_(std::move(bp)) { diam_ = compute_diameter(); }
  Band(const FluxModel& m, double r1, double r2) : Band(build_branch_pair(m, r1, r2)) {}

  const BranchPair& pair() const { return bp_; }
  double r1() const { return bp_.r1; }
  double r2() const { return bp_.r2; }
  double gp(double r) const { return bp_.g_plus(r); }
  double gm(double r) const { return bp_.g_minus(r); }
  double diameter() const { return diam_; }

  bool inside(double s, double r) const {
    return r > r1() && r < r2() && s > gm(r) && s < gp(r);
  }

  // position across the band at level r, 0 on the minus branch and 1 on the plus one
  double gauge(double s, double r) const {
    double a = gm(r), b = gp(r);
    return (s - a) / (b - a);
  }

  double dist_plus(double s, double r) const { return dist_graph(bp_.g_plus, s, r); }
  double dist_minus(double s, double r) const { return dist_graph(bp_.g_minus, s, r); }
  double dist_K(double s, double r) const { return std::min(dist_plus(s, r), dist_minus(s, r)); }

  // distance to the boundary of the band: both branch graphs and the two level segments
  double dist_boundary(double s, double r) const {
    auto level = [&](double rr) {
      double a = gm(rr), b = gp(rr);
      if (s >= a && s <= b) return std::abs(r - rr);
      return std::hypot(s < a ? s - a : s - b, r - rr);
    };
    return std::min({dist_K(s, r), level(r1()), level(r2())});
  }

  // point (s', r) left of the plus graph at distance tau from it; NaN when none exists
  double offset_plus(double r, double tau) const { return offset(bp_.g_plus, r, tau, -1.0); }
  // point (s', r) right of the minus graph at distance tau from it
  double offset_minus(double r, double tau) const { return offset(bp_.g_minus, r, tau, +1.0); }

  // f+(beta): least distance to the plus graph over points beta to the left of it
  double f_plus(double beta, int samples = 200) const {
    double m = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= samples; ++k) {
      double r = r1() + (r2() - r1()) * k / samples;
      m = std::min(m, dist_plus(gp(r) - beta, r));
    }
    return m;
  }
  double f_minus(double beta, int samples = 200) const {
    double m = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= samples; ++k) {
      double r = r1() + (r2() - r1()) * k / samples;
      m = std::min(m, dist_minus(gm(r) + beta, r));
    }
    return m;
  }
  // smallest beta with f(beta) = level, by doubling then bisection
  double beta_plus(double level) const { return inverse([this](double b) { return f_plus(b); }, level); }
  double beta_minus(double level) const { return inverse([this](double b) { return f_minus(b); }, level); }

 private:
  BranchPair bp_;
  double diam_ = 0;

  double dist_graph(const BranchMap& g, double s, double r) const {
    const double a = r1(), b = r2();
    double rc = std::clamp(r, a, b);
    double ub = std::hypot(g(rc) - s, rc - r);
    double lo = std::max(a, r - ub), hi = std::min(b, r + ub);
    auto d2 = [&](double q) { return sq(g(q) - s) + sq(q - r); };
    if (!(hi > lo)) return std::sqrt(d2(rc));
    const int n = 8;
    double h = (hi - lo) / n, best = d2(lo);
    int kb = 0;
    for (int k = 1; k <= n; ++k) {
      double v = d2(lo + k * h);
      if (v < best) best = v, kb = k;
    }
    double qa = std::max(lo, lo + (kb - 1) * h), qb = std::min(hi, lo + (kb + 1) * h);
    double q = golden_min(d2, qa, qb, 48);
    return std::sqrt(std::min(best, d2(q)));
  }

  double offset(const BranchMap& g, double r, double tau, double side) const {
    // offset curve q -> (g(q), q) + tau * side * (1, -g'(q)) / |(1, g')|
    auto level = [&](double q) {
      double d = g.deriv(q);
      return q - side * tau * d / std::sqrt(1 + d * d) - r;
    };
    auto point = [&](double q) {
      double d = g.deriv(q);
      return g(q) + side * tau / std::sqrt(1 + d * d);
    };
    double la = level(r1()), lb = level(r2());
    double s;
    if (la <= 0 && lb >= 0) {
      s = point(bisect(level, r1(), r2(), 1e-15 * (1 + std::abs(r))));
    } else {
      double re = la > 0 ? r1() : r2();
      double h = sq(tau) - sq(r - re);
      if (h < 0) return nan_v;
      s = g(re) + side * std::sqrt(h);
    }
    double dg = dist_graph(g, s, r);
    if (std::abs(dg - tau) <= 1e-6 * tau) return s;
    // curvature spoilt the offset; fall back on the direct distance
    double far = g(std::clamp(r, r1(), r2()));
    auto f = [&](double lam) { return dist_graph(g, far + side * lam, r) - tau; };
    double hi = tau;
    while (f(hi) < 0 && hi < 1e6) hi *= 2;
    if (f(hi) < 0) return nan_v;
    return far + side * bisect(f, 0.0, hi, 1e-14 * (1 + hi));
  }

  static double inverse(const std::function<double(double)>& f, double level) {
    double hi = level;
    int guard = 0;
    while (f(hi) < level && guard++ < 80) hi *= 2;
    return bisect([&](double b) { return f(b) - level; }, 0.0, hi, 1e-14 * (1 + hi));
  }

  double compute_diameter() const {
    std::vector<std::pair<double, double>> pts;
    const int n = 200;
    for (int k = 0; k <= n; ++k) {
      double r = r1() + (r2() - r1()) * k / n;
      pts.emplace_back(gp(r), r);
      pts.emplace_back(gm(r), r);
    }
    double d = 0;
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (std::size_t j = i + 1; j < pts.size(); ++j)
        d = std::max(d, std::hypot(pts[i].first - pts[j].first, pts[i].second - pts[j].second));
    return d;
  }
};

}  // namespace fbd
