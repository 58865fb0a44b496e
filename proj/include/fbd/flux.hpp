#pragma once

#include <map>
#include <memory>
#include <optional>

#include "core.hpp"

namespace fbd {

enum class Family { strictly_parabolic, hollig, perona_malik, non_fourier };

inline std::string to_string(Family f) {
  switch (f) {
    case Family::hollig: return "hollig";
    case Family::perona_malik: return "perona_malik";
    case Family::non_fourier: return "non_fourier";
    default: return "strictly_parabolic";
  }
}

inline Family family_from_string(const std::string& s) {
  if (s == "hollig") return Family::hollig;
  if (s == "perona_malik") return Family::perona_malik;
  if (s == "non_fourier") return Family::non_fourier;
  if (s == "strictly_parabolic") return Family::strictly_parabolic;
  throw ConfigError("unknown flux family '" + s + "'");
}

constexpr double nan_v = std::numeric_limits<double>::quiet_NaN();

// unset entries are NaN
struct Landmarks {
  double s1 = nan_v, s2 = nan_v;
  double sbar1 = nan_v, sbar2 = nan_v;
  double s0m = nan_v, s0p = nan_v;
};

struct FluxModel {
  std::string id;
  Family family = Family::strictly_parabolic;
  std::function<double(double)> f;
  std::function<double(double)> df;
  Landmarks lm;
  double lo = -50, hi = 50;
  // kinks of a piecewise definition; quadrature panels align to them
  std::vector<double> breaks;

  double operator()(double s) const { return f(s); }
  double d(double s) const {
    if (df) return df(s);
    double h = 1e-6 * (1 + std::abs(s));
    return (f(s + h) - f(s - h)) / (2 * h);
  }
};

// closed forms ------------------------------------------------------------

inline FluxModel linear_flux() {
  FluxModel m;
  m.id = "linear";
  m.f = [](double s) { return s; };
  m.df = [](double) { return 1.0; };
  return m;
}

inline FluxModel perona_malik_flux() {
  FluxModel m;
  m.id = "perona_malik";
  m.f = [](double s) { return s / (1 + s * s); };
  m.df = [](double s) {
    double q = 1 + s * s;
    return (1 - s * s) / (q * q);
  };
  return m;
}

inline FluxModel cubic_flux() {
  FluxModel m;
  m.id = "cubic";
  m.f = [](double s) { return s * s * s - s; };
  m.df = [](double s) { return 3 * s * s - 1; };
  return m;
}

// sigma = s on (-inf,1], falls linearly to 1/2 at s2, then s-s2+1/2; s2 = 2 is the
// textbook shape 1.5-0.5s, s-1.5
inline FluxModel hollig_pl_flux(double s2 = 2.0) {
  if (!(s2 > 1)) throw DomainError("hollig_pl_flux needs s2 > 1");
  FluxModel m;
  m.id = s2 == 2.0 ? "hollig_pl" : cat("hollig_pl:", s2);
  const double fall = 0.5 / (s2 - 1);
  m.f = [=](double s) {
    if (s <= 1) return s;
    if (s <= s2) return 1 - fall * (s - 1);
    return s - s2 + 0.5;
  };
  m.df = [=](double s) {
    if (s < 1 || s > s2) return 1.0;
    return -fall;
  };
  m.breaks = {1.0, s2};
  return m;
}

// monotone cubic through a knot table, linear beyond the ends
class PchipTable {
 public:
  PchipTable() = default;
  PchipTable(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    if (n < 2 || y_.size() != n) throw ConfigError("knot table needs >= 2 matching knots");
    for (std::size_t i = 1; i < n; ++i)
      if (!(x_[i] > x_[i - 1])) throw ConfigError("knot abscissae must increase");
    std::vector<double> del(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) del[i] = (y_[i + 1] - y_[i]) / (x_[i + 1] - x_[i]);
    m_.assign(n, 0);
    m_[0] = del[0];
    m_[n - 1] = del[n - 2];
    for (std::size_t i = 1; i + 1 < n; ++i) {
      if (del[i - 1] * del[i] <= 0) continue;
      double h0 = x_[i] - x_[i - 1], h1 = x_[i + 1] - x_[i];
      double w1 = 2 * h1 + h0, w2 = h1 + 2 * h0;
      m_[i] = (w1 + w2) / (w1 / del[i - 1] + w2 / del[i]);
    }
  }
  PchipTable(std::vector<double> x, std::vector<double> y, std::vector<double> m)
      : x_(std::move(x)), y_(std::move(y)), m_(std::move(m)) {}

  double eval(double s) const { return at(s, false); }
  double deriv(double s) const { return at(s, true); }
  const std::vector<double>& x() const { return x_; }
  const std::vector<double>& y() const { return y_; }
  const std::vector<double>& m() const { return m_; }

 private:
  double at(double s, bool d) const {
    const std::size_t n = x_.size();
    if (s <= x_[0]) return d ? m_[0] : y_[0] + m_[0] * (s - x_[0]);
    if (s >= x_[n - 1]) return d ? m_[n - 1] : y_[n - 1] + m_[n - 1] * (s - x_[n - 1]);
    std::size_t k = std::upper_bound(x_.begin(), x_.end(), s) - x_.begin() - 1;
    double h = x_[k + 1] - x_[k], t = (s - x_[k]) / h;
    double t2 = t * t, t3 = t2 * t;
    if (!d) {
      return (2 * t3 - 3 * t2 + 1) * y_[k] + (t3 - 2 * t2 + t) * h * m_[k] +
             (-2 * t3 + 3 * t2) * y_[k + 1] + (t3 - t2) * h * m_[k + 1];
    }
    return ((6 * t2 - 6 * t) * y_[k] + (-6 * t2 + 6 * t) * y_[k + 1]) / h +
           (3 * t2 - 4 * t + 1) * m_[k] + (3 * t2 - 2 * t) * m_[k + 1];
  }
  std::vector<double> x_, y_, m_;
};

inline FluxModel knot_flux(std::vector<double> s, std::vector<double> v, std::string id = "knots") {
  auto t = std::make_shared<PchipTable>(std::move(s), std::move(v));
  FluxModel m;
  m.id = std::move(id);
  m.f = [t](double x) { return t->eval(x); };
  m.df = [t](double x) { return t->deriv(x); };
  m.breaks = t->x();
  return m;
}

inline FluxModel closed_form_flux(const std::string& id) {
  if (id == "linear") return linear_flux();
  if (id == "perona_malik" || id == "pm") return perona_malik_flux();
  if (id == "cubic") return cubic_flux();
  if (id == "hollig_pl") return hollig_pl_flux();
  throw ConfigError("unknown closed-form flux '" + id + "'");
}

// sigma_hat(s) = -sigma(-s); maps a decreasing profile problem onto an increasing one
inline FluxModel reflected(const FluxModel& m) {
  FluxModel r = m;
  r.id = m.id + "_reflected";
  auto f = m.f;
  r.f = [f](double s) { return -f(-s); };
  if (m.df) {
    auto df = m.df;
    r.df = [df](double s) { return df(-s); };
  }
  r.lo = -m.hi;
  r.hi = -m.lo;
  r.breaks.clear();
  for (double b : m.breaks) r.breaks.push_back(-b);
  std::sort(r.breaks.begin(), r.breaks.end());
  if (m.family == Family::perona_malik) {
    r.lm.s1 = -m.lm.s2;
    r.lm.s2 = -m.lm.s1;
  }
  return r;
}

// classification ------------------------------------------------------------

struct Classification {
  Family family;
  Landmarks lm;
  std::vector<double> zeros;
  std::vector<double> extrema;
};

namespace detail {

inline double refine_extremum(const FluxModel& m, double a, double b) {
  auto dfun = [&](double s) { return m.d(s); };
  double da = dfun(a), db = dfun(b);
  if ((da > 0) != (db > 0)) return bisect(dfun, a, b, 1e-13);
  // flat derivative at a kink: keep the bracketing knot
  return std::abs(da) < std::abs(db) ? a : b;
}

inline double refine_root(const std::function<double(double)>& f, double a, double b) {
  return bisect(f, a, b, 1e-13);
}

// sorted roots of f - level on the sample grid
inline std::vector<double> level_crossings(const FluxModel& m, double level, int n = 40000) {
  std::vector<double> out;
  auto g = [&](double s) { return m(s) - level; };
  double h = (m.hi - m.lo) / n;
  double prev = g(m.lo);
  for (int i = 1; i <= n; ++i) {
    double s = m.lo + i * h, cur = g(s);
    if (cur == 0) {
      out.push_back(s);
    } else if (prev != 0 && (cur > 0) != (prev > 0)) {
      out.push_back(refine_root(g, s - h, s));
    }
    prev = cur;
  }
  return out;
}

}  // namespace detail

inline Classification classify_flux(const FluxModel& m, int samples = 40000) {
  Classification c;
  const double h = (m.hi - m.lo) / samples;
  // extrema from sign changes of sigma' with flat spots skipped
  int prev_sign = 0;
  double prev_s = m.lo;
  for (int i = 0; i <= samples; ++i) {
    double s = m.lo + i * h;
    double d = m.d(s);
    int sg = d > 1e-14 ? 1 : (d < -1e-14 ? -1 : 0);
    if (sg == 0) continue;
    if (prev_sign != 0 && sg != prev_sign) c.extrema.push_back(detail::refine_extremum(m, prev_s, s));
    prev_sign = sg;
    prev_s = s;
  }
  c.zeros = detail::level_crossings(m, 0.0, samples);
  auto near_zero = [&](double v) { return std::abs(v) < 1e-9; };
  double f0 = m(0.0);

  if (c.extrema.empty()) {
    if (!(m.d(m.lo) > 0)) throw HypothesisError("monotone", "sigma is nowhere increasing");
    c.family = Family::strictly_parabolic;
    return c;
  }
  if (c.extrema.size() != 2)
    throw HypothesisError("extrema", cat("expected 2 local extrema, found ", c.extrema.size()));
  if (!near_zero(f0)) throw HypothesisError("sigma(0)=0", cat("sigma(0) = ", f0));

  const double e1 = c.extrema[0], e2 = c.extrema[1];
  const bool max_then_min = m.d(0.5 * (e1 + e2)) < 0;
  Landmarks& L = c.lm;
  L.s1 = e1;
  L.s2 = e2;
  if (max_then_min && e1 > 0) {
    // sigma(sbar2) = sigma(s1) > sigma(s2) > sigma(0) = 0
    if (!(m(e2) > 0)) throw HypothesisError("hollig(c)", "sigma(s2) must exceed sigma(0)=0");
    if (!(m(e1) > m(e2))) throw HypothesisError("hollig(c)", "sigma(s1) must exceed sigma(s2)");
    auto g2 = [&](double s) { return m(s) - m(e2); };
    L.sbar1 = detail::refine_root(g2, 0.0, e1);
    auto g1 = [&](double s) { return m(s) - m(e1); };
    if (!(m(m.hi) > m(e1)))
      throw HypothesisError("hollig(b)", "sigma does not recover sigma(s1) inside the window");
    L.sbar2 = detail::refine_root(g1, e2, m.hi);
    c.family = Family::hollig;
    return c;
  }
  if (max_then_min && e1 < 0 && e2 > 0) {
    if (c.zeros.size() != 3)
      throw HypothesisError("non_fourier(a)", cat("sigma must have exactly three zeros, found ",
                                                  c.zeros.size()));
    L.s0m = c.zeros[0];
    L.s0p = c.zeros[2];
    if (!near_zero(c.zeros[1])) throw HypothesisError("non_fourier(a)", "middle zero must be 0");
    if (!(L.s0m < e1 && e2 < L.s0p)) throw HypothesisError("non_fourier(b)", "zero/extremum ordering");
    // s*sigma(s) > 0 outside [s0-, s0+], < 0 inside away from 0
    if (!(m(0.5 * e1) > 0 && m(0.5 * e2) < 0 && m(L.s0p + 1e-3) > 0 && m(L.s0m - 1e-3) < 0))
      throw HypothesisError("non_fourier(b)", "sign pattern of s*sigma(s)");
    if (!(m(m.lo) < m(e2) && m(m.hi) > m(e1)))
      throw HypothesisError("non_fourier(c)", "tails do not cover the local extreme values");
    L.sbar1 = detail::refine_root([&](double s) { return m(s) - m(e2); }, m.lo, e1);
    L.sbar2 = detail::refine_root([&](double s) { return m(s) - m(e1); }, e2, m.hi);
    c.family = Family::non_fourier;
    return c;
  }
  if (!max_then_min && e1 < 0 && e2 > 0) {
    if (!(m(e2) > 0 && m(e1) < 0)) throw HypothesisError("pm(a)", "sigma(s1) < 0 < sigma(s2)");
    for (double z : c.zeros)
      if (!near_zero(z)) throw HypothesisError("pm(a)", cat("extra zero of sigma at ", z));
    // |sigma| decreasing on the sampled tails towards the window ends
    if (!(m(m.hi) > 0 && m(m.hi) < m(e2) && m(m.lo) < 0 && m(m.lo) > m(e1)))
      throw HypothesisError("pm(b)", "tails must decay towards 0 with the sign of s");
    c.family = Family::perona_malik;
    return c;
  }
  throw HypothesisError("family", cat("extremum pattern at ", e1, ", ", e2, " matches no family"));
}

// fill family and landmarks in place; explicit overrides already in m.lm win
inline FluxModel classified(FluxModel m) {
  Landmarks keep = m.lm;
  Classification c = classify_flux(m);
  m.family = c.family;
  m.lm = c.lm;
  auto take = [](double& dst, double v) {
    if (!std::isnan(v)) dst = v;
  };
  take(m.lm.s1, keep.s1);
  take(m.lm.s2, keep.s2);
  take(m.lm.sbar1, keep.sbar1);
  take(m.lm.sbar2, keep.sbar2);
  take(m.lm.s0m, keep.s0m);
  take(m.lm.s0p, keep.s0p);
  return m;
}

// branches -------------------------------------------------------------------

enum class Branch { plus, minus };

struct Segment {
  double a, b;  // s-interval, a < b
  bool increasing;
};

inline Segment branch_segment(const FluxModel& m, double r, Branch br) {
  const auto& L = m.lm;
  switch (m.family) {
    case Family::strictly_parabolic:
      return {m.lo, m.hi, true};
    case Family::hollig:
    case Family::non_fourier:
      return br == Branch::plus ? Segment{L.s2, m.hi, true} : Segment{m.lo, L.s1, true};
    case Family::perona_malik:
      if (r > 0) return br == Branch::plus ? Segment{L.s2, m.hi, false} : Segment{0.0, L.s2, true};
      if (r < 0) return br == Branch::plus ? Segment{L.s1, 0.0, true} : Segment{m.lo, L.s1, false};
      throw DomainError("r = 0 lies on no perona_malik branch");
  }
  throw DomainError("unknown family");
}

inline double branch_point(const FluxModel& m, double r, Branch br, double tol = 1e-12) {
  Segment seg = branch_segment(m, r, br);
  double fa = m(seg.a), fb = m(seg.b);
  double rlo = std::min(fa, fb), rhi = std::max(fa, fb);
  if (!(r > rlo && r < rhi))
    throw DomainError(cat("r = ", r, " outside (", rlo, ", ", rhi, ") of the ",
                          br == Branch::plus ? "plus" : "minus", " branch"));
  if ((fb > fa) != seg.increasing) throw Error("branch segment is not monotone");
  return bisect([&](double s) { return m(s) - r; }, seg.a, seg.b, tol);
}

inline double s_plus(const FluxModel& m, double r) { return branch_point(m, r, Branch::plus); }
inline double s_minus(const FluxModel& m, double r) { return branch_point(m, r, Branch::minus); }

// inverse branch tabulated on [r1,r2], Hermite interpolated then Newton polished
class BranchMap {
 public:
  BranchMap() = default;
  BranchMap(const FluxModel& m, double r1, double r2, Branch br, int n = 512)
      : model_(std::make_shared<FluxModel>(m)), r1_(r1), r2_(r2) {
    std::vector<double> r(n + 1), s(n + 1), ds(n + 1);
    seg_ = branch_segment(m, 0.5 * (r1 + r2), br);
    for (int k = 0; k <= n; ++k) {
      r[k] = r1 + (r2 - r1) * k / n;
      if (k == n) r[k] = r2;
      s[k] = branch_point(m, r[k], br);
      ds[k] = 1.0 / m.d(s[k]);
    }
    table_ = PchipTable(r, s, ds);
  }
  double operator()(double r) const {
    double s = table_.eval(r);
    double fs = model_->f(s) - r, d = model_->d(s);
    if (d != 0 && std::isfinite(d)) {
      double s2 = s - fs / d;
      if (std::abs(s2 - s) < 1e-6 * (1 + std::abs(s))) s = s2;
    }
    return s;
  }
  double deriv(double r) const { return 1.0 / model_->d((*this)(r)); }
  double r1() const { return r1_; }
  double r2() const { return r2_; }

 private:
  std::shared_ptr<FluxModel> model_;
  PchipTable table_;
  Segment seg_{};
  double r1_ = 0, r2_ = 0;
};

struct BranchPair {
  double r1 = 0, r2 = 0;
  BranchMap g_plus, g_minus;
  double separation = 0;  // d0
  double spread = 0;      // d1
  double lip = 0;         // max |g'| over both branches
};

inline BranchPair build_branch_pair(const FluxModel& m, double r1, double r2) {
  if (!(r1 < r2)) throw DomainError(cat("empty flux interval [", r1, ", ", r2, "]"));
  if (m.family == Family::perona_malik && r1 < 0 && r2 > 0)
    throw DomainError("perona_malik flux interval must not contain 0");
  BranchPair bp;
  bp.r1 = r1;
  bp.r2 = r2;
  bp.g_plus = BranchMap(m, r1, r2, Branch::plus);
  bp.g_minus = BranchMap(m, r1, r2, Branch::minus);
  bp.separation = std::numeric_limits<double>::infinity();
  bp.spread = -std::numeric_limits<double>::infinity();
  const int n = 1000;
  for (int k = 0; k <= n; ++k) {
    double r = r1 + (r2 - r1) * k / n;
    double gap = bp.g_plus(r) - bp.g_minus(r);
    bp.separation = std::min(bp.separation, gap);
    bp.spread = std::max(bp.spread, gap);
    bp.lip = std::max({bp.lip, std::abs(bp.g_plus.deriv(r)), std::abs(bp.g_minus.deriv(r))});
  }
  if (!(bp.separation > 0)) throw DomainError("branches touch or cross on the interval");
  return bp;
}

// potential -----------------------------------------------------------------

class Potential {
 public:
  Potential() = default;
  explicit Potential(const FluxModel& m, double panel = 0.01) : model_(std::make_shared<FluxModel>(m)) {
    lo_ = m.lo;
    h_ = panel;
    n_ = static_cast<int>(std::ceil((m.hi - m.lo) / h_));
    cum_.assign(n_ + 1, 0);
    for (int k = 0; k < n_; ++k) cum_[k + 1] = cum_[k] + segment(lo_ + k * h_, lo_ + (k + 1) * h_);
    // minima of W sit at zeros of sigma where sigma changes sign upwards
    double best = std::numeric_limits<double>::infinity();
    auto zs = detail::level_crossings(m, 0.0);
    zs.push_back(m.lo);
    zs.push_back(m.hi);
    for (double z : zs) best = std::min(best, raw(z));
    offset_ = best;
  }
  double operator()(double s) const { return raw(s) - offset_; }
  double offset() const { return offset_; }

 private:
  double segment(double a, double b) const {
    // split at kinks so the rule sees smooth pieces
    double s = 0, x = a;
    for (double k : model_->breaks)
      if (k > a && k < b) {
        s += integrate_gl(model_->f, x, k);
        x = k;
      }
    return s + integrate_gl(model_->f, x, b);
  }
  double raw(double s) const {
    double q = (s - lo_) / h_;
    int k = static_cast<int>(std::floor(q));
    if (k < 0) return -segment_long(s, lo_);
    if (k >= n_) return cum_[n_] + segment_long(lo_ + n_ * h_, s);
    return cum_[k] + segment(lo_ + k * h_, s);
  }
  double segment_long(double a, double b) const {
    int p = std::max(1, static_cast<int>(std::ceil(std::abs(b - a) / h_)));
    return integrate_gl(model_->f, a, b, p);
  }
  std::shared_ptr<FluxModel> model_;
  std::vector<double> cum_;
  double lo_ = 0, h_ = 0.01, offset_ = 0;
  int n_ = 0;
};

inline Potential potential(const FluxModel& m) { return Potential(m); }

inline double energy(const std::vector<double>& u, double dx, const Potential& W) {
  double e = 0;
  for (std::size_t i = 0; i + 1 < u.size(); ++i) e += W((u[i + 1] - u[i]) / dx) * dx;
  return e;
}

// modified fluxes ------------------------------------------------------------

struct Interval {
  double a, b;
};

enum class BoundKind { below_sigma, above_sigma, below_value, above_value };

struct StrictBound {
  Interval on;
  BoundKind kind;
  double value = 0;  // r' for the value bounds
  bool open_left = true, open_right = false;
};

class ModifiedFlux {
 public:
  struct Piece {
    enum Kind { pinned, hermite, linear } kind;
    double a, b;
    PchipTable cubic;                // hermite
    double x0 = 0, y0 = 0, m = 0;  // linear: y0 + m (s - x0)
  };

  FluxModel base;
  std::string scheme;
  std::vector<Interval> pinned;
  std::vector<StrictBound> bounds;
  std::vector<Piece> pieces;  // sorted, covering the real line

  double operator()(double s) const { return eval(s, false); }
  double d(double s) const { return eval(s, true); }

  FluxModel as_model() const {
    auto self = std::make_shared<ModifiedFlux>(*this);
    FluxModel m;
    m.id = base.id + "~" + scheme;
    m.family = Family::strictly_parabolic;
    m.f = [self](double s) { return (*self)(s); };
    m.df = [self](double s) { return self->d(s); };
    m.lo = base.lo;
    m.hi = base.hi;
    m.breaks = base.breaks;
    for (const auto& p : pieces) {
      m.breaks.push_back(p.a);
      if (p.kind == Piece::hermite)
        for (double x : p.cubic.x()) m.breaks.push_back(x);
    }
    std::sort(m.breaks.begin(), m.breaks.end());
    m.breaks.erase(std::remove_if(m.breaks.begin(), m.breaks.end(),
                                  [](double x) { return !std::isfinite(x); }),
                   m.breaks.end());
    return m;
  }

  // dense sampling check; returns the first violation or empty
  std::optional<std::string> check(int samples = 10000) const {
    double lo = base.lo, hi = base.hi;
    for (const auto& p : pieces) {
      if (std::isfinite(p.a)) lo = std::min(lo, p.a - 1);
      if (std::isfinite(p.b)) hi = std::max(hi, p.b + 1);
    }
    double prev = (*this)(lo);
    for (int i = 1; i <= samples; ++i) {
      double s = lo + (hi - lo) * i / samples;
      double v = (*this)(s);
      if (!(v > prev)) return cat("not increasing near s = ", s);
      if (!(d(s) > 0)) return cat("derivative not positive at s = ", s);
      prev = v;
    }
    for (const auto& iv : pinned) {
      for (int i = 0; i <= 200; ++i) {
        double s = iv.a + (iv.b - iv.a) * i / 200;
        if (std::abs((*this)(s) - base(s)) > 1e-14 * (1 + std::abs(base(s))))
          return cat("pinned equality fails at s = ", s);
      }
    }
    for (const auto& sb : bounds) {
      for (int i = 0; i <= samples; ++i) {
        double s = sb.on.a + (sb.on.b - sb.on.a) * i / samples;
        if ((i == 0 && sb.open_left) || (i == samples && sb.open_right)) continue;
        double v = (*this)(s);
        bool ok = true;
        switch (sb.kind) {
          case BoundKind::below_sigma: ok = v < base(s); break;
          case BoundKind::above_sigma: ok = v > base(s); break;
          case BoundKind::below_value: ok = v < sb.value; break;
          case BoundKind::above_value: ok = v > sb.value; break;
        }
        if (!ok) return cat("strict bound fails at s = ", s, " on [", sb.on.a, ", ", sb.on.b, "]");
      }
    }
    return std::nullopt;
  }

 private:
  double eval(double s, bool deriv) const {
    auto it = std::upper_bound(pieces.begin(), pieces.end(), s,
                               [](double x, const Piece& p) { return x < p.a; });
    const Piece& p = it == pieces.begin() ? pieces.front() : *std::prev(it);
    switch (p.kind) {
      case Piece::pinned: return deriv ? base.d(s) : base(s);
      case Piece::hermite: return deriv ? p.cubic.deriv(s) : p.cubic.eval(s);
      case Piece::linear: return deriv ? p.m : p.y0 + p.m * (s - p.x0);
    }
    return 0;
  }
};

namespace detail {

constexpr double inf = std::numeric_limits<double>::infinity();

// C1 monotone Hermite through knots with fixed end slopes; interior slopes are
// weighted harmonic means so every interval meets the Fritsch-Carlson bound
inline PchipTable hermite_path(const std::vector<double>& x, const std::vector<double>& y,
                               double m_first, double m_last) {
  const std::size_t n = x.size();
  std::vector<double> m(n);
  m[0] = m_first;
  m[n - 1] = m_last;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    double d0 = (y[i] - y[i - 1]) / (x[i] - x[i - 1]);
    double d1 = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
    m[i] = 2 * d0 * d1 / (d0 + d1);
  }
  return PchipTable(x, y, m);
}

// rising bridge leaving a pinned point (a, sigma(a)) to the right; below the
// tangent at a, then nearly flat up to (q, yq), then a linear tail
struct RightBridge {
  PchipTable cubic;
  double q, yq, tail_slope;
};

inline RightBridge right_bridge(const FluxModel& m, double a, double q, double yq, double h) {
  double ya = m(a), ma = m.d(a);
  if (!(ma > 0)) throw ConstructionError("pinned endpoint has non-positive slope", a, q);
  double xb = a + h, yb = ya + 0.5 * ma * h;
  if (!(yb < yq) || !(xb < q)) throw ConstructionError("bend overshoots the plateau", a, q);
  double plateau = (yq - yb) / (q - xb);
  std::vector<double> x{a, xb, q}, y{ya, yb, yq};
  return {hermite_path(x, y, ma, plateau), q, yq, plateau};
}

inline ModifiedFlux::Piece pinned_piece(double a, double b) {
  ModifiedFlux::Piece p{ModifiedFlux::Piece::pinned, a, b, {}, 0, 0, 0};
  return p;
}
inline ModifiedFlux::Piece cubic_piece(const PchipTable& t) {
  ModifiedFlux::Piece p{ModifiedFlux::Piece::hermite, t.x().front(), t.x().back(), t, 0, 0, 0};
  return p;
}
inline ModifiedFlux::Piece linear_piece(double a, double b, double x0, double y0, double slope) {
  ModifiedFlux::Piece p{ModifiedFlux::Piece::linear, a, b, {}, x0, y0, slope};
  return p;
}

// mirror s -> -s, sigma -> -sigma of a cubic
inline PchipTable mirror(const PchipTable& t) {
  std::vector<double> x, y, mm;
  for (std::size_t i = t.x().size(); i-- > 0;) {
    x.push_back(-t.x()[i]);
    y.push_back(-t.y()[i]);
    mm.push_back(t.m()[i]);
  }
  return PchipTable(x, y, mm);
}

template <class Build>
ModifiedFlux retry_build(Build build, double h0, double lo, double hi) {
  std::string last;
  double h = h0;
  for (int attempt = 0; attempt < 40; ++attempt, h *= 0.5) {
    try {
      ModifiedFlux mf = build(h);
      auto bad = mf.check();
      if (!bad) return mf;
      last = *bad;
    } catch (const ConstructionError& e) {
      last = e.what();
    }
  }
  throw ConstructionError("no admissible monotone interpolant: " + last, lo, hi);
}

}  // namespace detail

// two-sided plateau construction shared by the perona_malik schemes:
// sigma~ = sigma on [left_pin, right_pin],
// sigma~ < min(sigma, r2p) on (right_pin, right_reach],
// sigma~ > max(sigma, r1p) on [left_reach, left_pin).
// A side whose reach is NaN is pinned to the window end instead.
struct PlateauSpec {
  double left_pin = nan_v, left_reach = nan_v, r1 = nan_v, r1p = nan_v;
  double right_pin = nan_v, right_reach = nan_v, r2 = nan_v, r2p = nan_v;
  double pin_floor = nan_v;  // pinned side: sigma copied down to here, then linear
  double margin_factor = 1e-3;
};

inline ModifiedFlux plateau_flux(const FluxModel& m, const PlateauSpec& ps, const std::string& scheme) {
  const bool has_right = !std::isnan(ps.right_reach);
  const bool has_left = !std::isnan(ps.left_reach);
  auto build = [&](double hfrac) {
    ModifiedFlux mf;
    mf.base = m;
    mf.scheme = scheme;
    std::vector<ModifiedFlux::Piece> left, right;
    double pin_lo, pin_hi;
    if (has_right) {
      double a = ps.right_pin, q = ps.right_reach;
      double margin = ps.margin_factor * std::abs(ps.r2p - ps.r2);
      double yq = std::min(ps.r2p, m(q)) - margin;
      auto br = detail::right_bridge(m, a, q, yq, hfrac * (q - a));
      right.push_back(detail::cubic_piece(br.cubic));
      right.push_back(detail::linear_piece(q, detail::inf, q, yq, br.tail_slope));
      pin_hi = a;
      mf.bounds.push_back({{a, q}, BoundKind::below_sigma, 0, true, false});
      mf.bounds.push_back({{a, q}, BoundKind::below_value, ps.r2p, true, false});
    } else {
      pin_hi = ps.right_pin;
      right.push_back(detail::linear_piece(pin_hi, detail::inf, pin_hi, m(pin_hi), m.d(pin_hi)));
    }
    if (has_left) {
      // mirror image of a right bridge for sigma_hat(s) = -sigma(-s)
      FluxModel mr = reflected(m);
      double a = -ps.left_pin, q = -ps.left_reach;
      double margin = ps.margin_factor * std::abs(ps.r1p - ps.r1);
      double yq = std::min(-ps.r1p, mr(q)) - margin;
      auto br = detail::right_bridge(mr, a, q, yq, hfrac * (q - a));
      left.push_back(detail::linear_piece(-detail::inf, -q, -q, -yq, br.tail_slope));
      left.push_back(detail::cubic_piece(detail::mirror(br.cubic)));
      pin_lo = ps.left_pin;
      mf.bounds.push_back({{-q, ps.left_pin}, BoundKind::above_sigma, 0, false, true});
      mf.bounds.push_back({{-q, ps.left_pin}, BoundKind::above_value, ps.r1p, false, true});
    } else {
      pin_lo = std::isnan(ps.pin_floor) ? ps.left_pin : ps.pin_floor;
      left.push_back(detail::linear_piece(-detail::inf, pin_lo, pin_lo, m(pin_lo), m.d(pin_lo)));
    }
    for (auto& p : left) mf.pieces.push_back(p);
    mf.pieces.push_back(detail::pinned_piece(pin_lo, pin_hi));
    for (auto& p : right) mf.pieces.push_back(p);
    mf.pinned.push_back({pin_lo, pin_hi});
    return mf;
  };
  double lo = has_left ? ps.left_reach : ps.left_pin;
  double hi = has_right ? ps.right_reach : ps.right_pin;
  return detail::retry_build(build, 0.1, lo, hi);
}

struct HolligParams {
  double r1, r2;
};

// sigma~ = sigma off (s-_{r1}, s+_{r2}); below sigma on (s-_{r1}, s-_{r2}], above on [s+_{r1}, s+_{r2})
inline ModifiedFlux modify_hollig(const FluxModel& m, const HolligParams& p) {
  if (!(0 < p.r1 && p.r1 < p.r2 && p.r2 < m(m.lm.s1) && p.r1 > m(m.lm.s2)))
    throw DomainError("hollig scheme needs sigma(s2) < r1 < r2 < sigma(s1)");
  double a = s_minus(m, p.r1), b = s_plus(m, p.r2);
  double sm2 = s_minus(m, p.r2), sp1 = s_plus(m, p.r1);
  auto build = [&](double hfrac) {
    double h = hfrac * (b - a);
    double ma = m.d(a), mb = m.d(b);
    std::vector<double> x{a, a + h, b - h, b};
    std::vector<double> y{m(a), m(a) + 0.5 * ma * h, m(b) - 0.5 * mb * h, m(b)};
    if (!(y[1] < y[2])) throw ConstructionError("bends overlap", a, b);
    ModifiedFlux mf;
    mf.base = m;
    mf.scheme = "hollig";
    mf.pieces.push_back(detail::pinned_piece(-detail::inf, a));
    mf.pieces.push_back(detail::cubic_piece(detail::hermite_path(x, y, ma, mb)));
    mf.pieces.push_back(detail::pinned_piece(b, detail::inf));
    mf.pinned = {{m.lo, a}, {b, m.hi}};
    mf.bounds.push_back({{a, sm2}, BoundKind::below_sigma, 0, true, false});
    mf.bounds.push_back({{sp1, b}, BoundKind::above_sigma, 0, false, true});
    return mf;
  };
  return detail::retry_build(build, 0.1, a, b);
}

struct PmSmoothingParams {
  double r1, r1p, r2, r2p;  // sigma(s1) < r1p < r1 < 0 < r2 < r2p < sigma(s2)
  double m0, M0;
};

inline ModifiedFlux modify_pm_smoothing(const FluxModel& m, const PmSmoothingParams& p) {
  const double lo = m(m.lm.s1), hi = m(m.lm.s2);
  if (!(lo < p.r1p && p.r1p < p.r1 && p.r1 < 0 && 0 < p.r2 && p.r2 < p.r2p && p.r2p < hi))
    throw DomainError("pm smoothing needs sigma(s1) < r1' < r1 < 0 < r2 < r2' < sigma(s2)");
  PlateauSpec ps;
  ps.left_pin = s_plus(m, p.r1);
  ps.left_reach = p.m0;
  ps.r1 = p.r1;
  ps.r1p = p.r1p;
  ps.right_pin = s_minus(m, p.r2);
  ps.right_reach = p.M0;
  ps.r2 = p.r2;
  ps.r2p = p.r2p;
  if (!(ps.left_reach < ps.left_pin && ps.right_pin < ps.right_reach))
    throw DomainError("pm smoothing needs m0 < s+_{r1} and s-_{r2} < M0");
  return plateau_flux(m, ps, "pm_smoothing");
}

struct PmBlowupParams {
  double r, rp;   // r_j < r'_j
  double reach;   // M0 for j = 0, s-_{r_{j-1}} otherwise
};

// sigma_j = sigma on [s1/2, s-_{r_j}], below min(sigma, r'_j) on (s-_{r_j}, reach]
inline ModifiedFlux modify_pm_blowup(const FluxModel& m, const PmBlowupParams& p) {
  if (!(0 < p.r && p.r < p.rp && p.rp < m(m.lm.s2)))
    throw DomainError("pm blowup needs 0 < r_j < r'_j < sigma(s2)");
  PlateauSpec ps;
  ps.right_pin = s_minus(m, p.r);
  ps.right_reach = p.reach;
  ps.r2 = p.r;
  ps.r2p = p.rp;
  ps.left_pin = ps.right_pin;
  ps.pin_floor = 0.5 * m.lm.s1;
  if (!(ps.right_pin < ps.right_reach)) throw DomainError("pm blowup needs s-_{r_j} < reach");
  return plateau_flux(m, ps, "pm_blowup");
}

// hierarchy step: pinned on [s+_{r1}, s-_{r2}], plateaus reaching out to the previous pins
struct PmHierarchyParams {
  double r1, r1p, r2, r2p;
  double left_reach, right_reach;
};

inline ModifiedFlux modify_pm_hierarchy(const FluxModel& m, const PmHierarchyParams& p) {
  PlateauSpec ps;
  ps.left_pin = s_plus(m, p.r1);
  ps.left_reach = p.left_reach;
  ps.r1 = p.r1;
  ps.r1p = p.r1p;
  ps.right_pin = s_minus(m, p.r2);
  ps.right_reach = p.right_reach;
  ps.r2 = p.r2;
  ps.r2p = p.r2p;
  if (!(ps.left_reach < ps.left_pin && ps.right_pin < ps.right_reach))
    throw DomainError("hierarchy plateaus need reach beyond the pins");
  return plateau_flux(m, ps, "pm_hierarchy");
}

struct NonFourierParams {
  double r0;
  double core = 0.1;  // sigma~ climbs from -r0/2 to r0/2 across [-core, core]
};

inline ModifiedFlux modify_non_fourier(const FluxModel& m, const NonFourierParams& p) {
  double bound = std::min(m(m.lm.s1), -m(m.lm.s2));
  if (!(p.r0 > 0 && p.r0 < bound))
    throw DomainError(cat("non_fourier scheme needs 0 < r0 < ", bound));
  double a = s_minus(m, -p.r0), b = s_plus(m, p.r0);
  double w = p.core;
  if (!(a < -w && w < b)) throw DomainError("core wider than the modified window");
  auto build = [&](double hfrac) {
    double ha = hfrac * (-w - a), hb = hfrac * (b - w);
    double ma = m.d(a), mb = m.d(b);
    std::vector<double> x{a, a + ha, -w, 0.0, w, b - hb, b};
    std::vector<double> y{m(a), m(a) + 0.5 * ma * ha, -0.5 * p.r0, 0.0, 0.5 * p.r0,
                          m(b) - 0.5 * mb * hb, m(b)};
    for (std::size_t i = 1; i < y.size(); ++i)
      if (!(y[i] > y[i - 1])) throw ConstructionError("knot values not increasing", x[i - 1], x[i]);
    ModifiedFlux mf;
    mf.base = m;
    mf.scheme = "non_fourier";
    mf.pieces.push_back(detail::pinned_piece(-detail::inf, a));
    mf.pieces.push_back(detail::cubic_piece(detail::hermite_path(x, y, ma, mb)));
    mf.pieces.push_back(detail::pinned_piece(b, detail::inf));
    mf.pinned = {{m.lo, a}, {b, m.hi}};
    mf.bounds.push_back({{a, m.lm.s0m}, BoundKind::below_sigma, 0, true, false});
    mf.bounds.push_back({{m.lm.s0p, b}, BoundKind::above_sigma, 0, false, true});
    return mf;
  };
  return detail::retry_build(build, 0.1, a, b);
}

}  // namespace fbd
