#pragma once

#include "fbd/band.hpp"
#include "fbd/parabolic.hpp"

namespace fbd {

// Laminate living in one grid cell: a periodic sawtooth S in x with slopes +lam_plus
// and -lam_minus, switched on by a smootherstep ramp of length `ramp` at both ends of
// the cell's time interval.  One period reads minus/plus/minus (plus/minus/plus when
// flipped), so S vanishes at every period boundary and has zero mean.
struct CellPatch {
  double lam_plus = 0, lam_minus = 0;
  double periods = 1;
  bool flip = false;
  double ramp = 0;

  double theta_plus() const { return lam_minus / (lam_plus + lam_minus); }
  double theta_minus() const { return lam_plus / (lam_plus + lam_minus); }
  double mu() const { return lam_plus * lam_minus / (lam_plus + lam_minus); }
  double period(double dx) const { return dx / periods; }
  double amp(double dx) const { return 0.5 * mu() * period(dx); }
  // sup of the primitive of S, reached where S crosses zero mid-period
  double psi_sup(double dx) const { return 0.25 * amp(dx) * period(dx); }
  double chi(double tau, double dt) const {
    return smootherstep(tau / ramp) * smootherstep((dt - tau) / ramp);
  }
  double chi_d(double tau, double dt) const {
    return (smootherstep_d(tau / ramp) * smootherstep((dt - tau) / ramp) -
            smootherstep(tau / ramp) * smootherstep_d((dt - tau) / ramp)) /
           ramp;
  }
  double chi_d_sup() const { return 1.875 / ramp; }

  // slope and value of S at fraction xi in [0,1) of one period of length P
  std::pair<double, double> saw(double xi, double P) const {
    double th_out = flip ? theta_plus() : theta_minus();  // measure of the outer runs
    double out_slope = flip ? lam_plus : -lam_minus, in_slope = flip ? -lam_minus : lam_plus;
    double e1 = 0.5 * th_out, e2 = 1 - 0.5 * th_out;
    if (xi < e1) return {out_slope, out_slope * xi * P};
    if (xi < e2) return {in_slope, out_slope * e1 * P + in_slope * (xi - e1) * P};
    return {out_slope, out_slope * (xi - 1) * P};
  }
  // value of S at local coordinate y in [0, dx)
  std::pair<double, double> at(double y, double dx) const {
    long double q = static_cast<long double>(y) / dx * periods;
    double xi = static_cast<double>(q - std::floor(q));
    return saw(xi, period(dx));
  }
};

// Discrete gradient of (u, v) on one cell, with the cell-centre value of u.
struct CellJacobian {
  double ux = 0, ut = 0, vx = 0, vt = 0, u = 0;
};

// Piecewise bilinear pair (u, v) on a tensor grid with optional laminate patches on
// cells.  Node arrays are row-major with one row of nx+1 values per time node.
struct SubsolutionField {
  double L = 1;
  int nx = 0;
  std::vector<double> t;
  std::vector<double> u, v;
  std::vector<double> u_ref, v_ref;
  double b = 1;
  std::vector<unsigned char> region;  // one flag per cell
  std::vector<int> patch_of;          // -1 or index into patches
  std::vector<CellPatch> patches;

  int nt() const { return static_cast<int>(t.size()); }
  int ncells() const { return nx * (nt() - 1); }
  double dx() const { return L / nx; }
  double dt(int n) const { return t[n + 1] - t[n]; }
  double area(int n) const { return dx() * dt(n); }
  long cell(int i, int n) const { return static_cast<long>(n) * nx + i; }
  std::size_t node(int i, int n) const { return static_cast<std::size_t>(n) * (nx + 1) + i; }

  CellJacobian jac(int i, int n, bool reference = false) const {
    const auto& U = reference ? u_ref : u;
    const auto& V = reference ? v_ref : v;
    std::size_t a = node(i, n), c = node(i, n + 1);
    double h = dx(), k = dt(n);
    CellJacobian j;
    j.ux = 0.5 * ((U[a + 1] - U[a]) + (U[c + 1] - U[c])) / h;
    j.vx = 0.5 * ((V[a + 1] - V[a]) + (V[c + 1] - V[c])) / h;
    j.ut = 0.5 * ((U[c] - U[a]) + (U[c + 1] - U[a + 1])) / k;
    j.vt = 0.5 * ((V[c] - V[a]) + (V[c + 1] - V[a + 1])) / k;
    j.u = 0.25 * (U[a] + U[a + 1] + U[c] + U[c + 1]);
    return j;
  }

  const CellPatch* patch(long c) const {
    if (patch_of.empty() || patch_of[c] < 0) return nullptr;
    return &patches[patch_of[c]];
  }

  double region_measure() const {
    double m = 0;
    for (int n = 0; n + 1 < nt(); ++n)
      for (int i = 0; i < nx; ++i)
        if (region[cell(i, n)]) m += area(n);
    return m;
  }

  // pointwise u and u_x at (x, time); patched cells add the laminate
  std::pair<double, double> sample(double x, double time) const {
    int i = std::clamp(static_cast<int>(std::floor(x / dx())), 0, nx - 1);
    int n = static_cast<int>(std::upper_bound(t.begin(), t.end(), time) - t.begin()) - 1;
    n = std::clamp(n, 0, nt() - 2);
    double y = x - i * dx(), tau = time - t[n];
    double ax = y / dx(), at = tau / dt(n);
    std::size_t a = node(i, n), c = node(i, n + 1);
    double uu = (1 - at) * ((1 - ax) * u[a] + ax * u[a + 1]) + at * ((1 - ax) * u[c] + ax * u[c + 1]);
    double ux = ((1 - at) * (u[a + 1] - u[a]) + at * (u[c + 1] - u[c])) / dx();
    if (const CellPatch* p = patch(cell(i, n))) {
      auto [sl, val] = p->at(y, dx());
      double ch = p->chi(tau, dt(n));
      uu += ch * val;
      ux += ch * sl;
    }
    return {uu, ux};
  }

  void ensure_patch_storage() {
    if (patch_of.empty()) patch_of.assign(ncells(), -1);
  }
};

// Micro-states of a cell: (u_x, v_t, |u_t| sup, weight) with weights summing to the
// cell area.  Plateau phases are exact; ramps use four Gauss points per end.
template <class F>
void for_each_micro(const SubsolutionField& w, int i, int n, F&& f) {
  CellJacobian j = w.jac(i, n);
  const double A = w.area(n);
  const CellPatch* p = w.patch(w.cell(i, n));
  if (!p) {
    f(j.ux, j.vt, A);
    return;
  }
  const double k = w.dt(n), rho = p->ramp;
  const double off[2] = {p->lam_plus, -p->lam_minus};
  const double th[2] = {p->theta_plus(), p->theta_minus()};
  double plateau = A * (k - 2 * rho) / k;
  for (int s = 0; s < 2; ++s) f(j.ux + off[s], j.vt, plateau * th[s]);
  for (int end = 0; end < 2; ++end)
    for (int q = 0; q < 4; ++q) {
      double tau = 0.5 * rho * (1 + gl4_nodes()[q]);
      double chi = smootherstep(tau / rho);
      double wq = A * (rho / k) * 0.5 * gl4_weights()[q];
      for (int s = 0; s < 2; ++s) f(j.ux + chi * off[s], j.vt, wq * th[s]);
    }
}

// u at a trajectory row as a SubsolutionField time row; v is the trapezoid primitive
// of u in x, so v_x = u holds cellwise and v_t integrates the discrete flux.
inline SubsolutionField field_from_rows(double L, const std::vector<double>& times,
                                        const std::vector<std::vector<double>>& rows) {
  SubsolutionField w;
  w.L = L;
  w.nx = static_cast<int>(rows.at(0).size()) - 1;
  w.t = times;
  const double h = w.dx();
  w.u.reserve(rows.size() * (w.nx + 1));
  w.v.reserve(rows.size() * (w.nx + 1));
  for (const auto& row : rows) {
    double acc = 0;
    for (int i = 0; i <= w.nx; ++i) {
      if (i > 0) acc += 0.5 * h * (row[i - 1] + row[i]);
      w.u.push_back(row[i]);
      w.v.push_back(acc);
    }
  }
  w.u_ref = w.u;
  w.v_ref = w.v;
  w.region.assign(w.ncells(), 0);
  return w;
}

}  // namespace fbd
