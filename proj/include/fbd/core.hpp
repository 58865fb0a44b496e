#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fbd {

// error taxonomy ---------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// flux fails a structural requirement; clause names which one
struct HypothesisError : Error {
  std::string clause;
  HypothesisError(std::string c, const std::string& msg)
      : Error("hypothesis violated [" + c + "]: " + msg), clause(std::move(c)) {}
};

struct DomainError : Error {
  using Error::Error;
};

struct SolverError : Error {
  double t = 0;
  SolverError(const std::string& msg, double t_) : Error(msg), t(t_) {}
};

struct NotReachedError : Error {
  double closest = 0;
  double at_time = 0;
  NotReachedError(const std::string& msg, double c, double t)
      : Error(msg), closest(c), at_time(t) {}
};

struct ConstructionError : Error {
  double lo = 0, hi = 0;
  ConstructionError(const std::string& msg, double a, double b)
      : Error(msg), lo(a), hi(b) {}
};

struct ResolutionError : Error {
  long long nodes_needed = 0;
  ResolutionError(const std::string& msg, long long n) : Error(msg), nodes_needed(n) {}
};

struct StepFailure : Error {
  std::string constraint;
  StepFailure(std::string c, const std::string& msg)
      : Error("density step failed [" + c + "]: " + msg), constraint(std::move(c)) {}
};

struct NotSubsolutionError : Error {
  std::vector<long> cells;
  NotSubsolutionError(const std::string& msg, std::vector<long> c) : Error(msg), cells(std::move(c)) {}
};

struct PreconditionError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct EstimateError : Error {
  using Error::Error;
};

// small numerics ---------------------------------------------------------

inline double sq(double x) { return x * x; }

template <class... T>
std::string cat(T&&... v) {
  std::ostringstream os;
  os.precision(12);
  (os << ... << v);
  return os.str();
}

// root of f on [a,b] given a sign change; tolerance on the bracket width
inline double bisect(const std::function<double(double)>& f, double a, double b,
                     double tol = 1e-13, int max_iter = 200) {
  double fa = f(a), fb = f(b);
  if (fa == 0) return a;
  if (fb == 0) return b;
  if ((fa > 0) == (fb > 0))
    throw DomainError(cat("bisect: no sign change on [", a, ", ", b, "]"));
  for (int it = 0; it < max_iter && std::abs(b - a) > tol; ++it) {
    double m = 0.5 * (a + b);
    double fm = f(m);
    if (fm == 0) return m;
    if ((fm > 0) == (fa > 0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
    }
  }
  return 0.5 * (a + b);
}

// minimiser of a unimodal f on [a,b]
inline double golden_min(const std::function<double(double)>& f, double a, double b,
                         int iters = 80) {
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < iters && b - a > 1e-15 * (1 + std::abs(a) + std::abs(b)); ++i) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return fc < fd ? c : d;
}

// Gauss-Legendre nodes on [-1,1]
inline const std::array<double, 4>& gl4_nodes() {
  static const std::array<double, 4> x{-0.8611363115940526, -0.3399810435848563,
                                       0.3399810435848563, 0.8611363115940526};
  return x;
}
inline const std::array<double, 4>& gl4_weights() {
  static const std::array<double, 4> w{0.3478548451374538, 0.6521451548625461,
                                       0.6521451548625461, 0.3478548451374538};
  return w;
}

inline double integrate_gl(const std::function<double(double)>& f, double a, double b,
                           int panels = 1) {
  double h = (b - a) / panels, s = 0;
  for (int p = 0; p < panels; ++p) {
    double c = a + (p + 0.5) * h;
    for (int k = 0; k < 4; ++k) s += gl4_weights()[k] * f(c + 0.5 * h * gl4_nodes()[k]);
  }
  return 0.5 * h * s;
}

// solve tridiagonal system in place; a sub, b diag, c super, d rhs -> solution
inline void thomas(std::vector<double>& a, std::vector<double>& b, std::vector<double>& c,
                   std::vector<double>& d) {
  const std::size_t n = b.size();
  for (std::size_t i = 1; i < n; ++i) {
    double m = a[i] / b[i - 1];
    b[i] -= m * c[i - 1];
    d[i] -= m * d[i - 1];
  }
  d[n - 1] /= b[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) d[i] = (d[i] - c[i] * d[i + 1]) / b[i];
}

// least squares line y = a + b x
struct LineFit {
  double intercept = 0, slope = 0;
};
inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  double den = n * sxx - sx * sx;
  if (den == 0) throw DomainError("fit_line: degenerate abscissae");
  LineFit f;
  f.slope = (n * sxy - sx * sy) / den;
  f.intercept = (sy - f.slope * sx) / n;
  return f;
}

// hashing / rng ----------------------------------------------------------

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t h) {
  static const char* d = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) s[i] = d[h & 15];
  return s;
}

// splitmix64
struct Rng {
  std::uint64_t state;
  explicit Rng(std::uint64_t seed) : state(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  double uniform() { return (next() >> 11) * 0x1.0p-53; }
  bool coin() { return next() >> 63; }
};

inline double smootherstep(double x) {
  if (x <= 0) return 0;
  if (x >= 1) return 1;
  return x * x * x * (x * (6 * x - 15) + 10);
}
inline double smootherstep_d(double x) {
  if (x <= 0 || x >= 1) return 0;
  return 30 * x * x * (x - 1) * (x - 1);
}

}  // namespace fbd
