#pragma once

#include <filesystem>

#include "fbd/config.hpp"

namespace fbd {

// One scenario's output files, held in memory until written.  Order is the write order;
// manifest.txt comes last and lists the content hash of every other file.
struct Artifacts {
  std::vector<std::pair<std::string, std::string>> files;
  std::vector<std::string> failures;  // hard invariant failures
  StaircaseReport rep;                // empty for scheme "solve"
  Trajectory tr;
  Composite composite;
  ResidualReport residual;

  bool ok() const { return failures.empty(); }
  const std::string* file(const std::string& name) const {
    for (const auto& [n, c] : files)
      if (n == name) return &c;
    return nullptr;
  }
};

// sum of the inclusion defects the laminates leave behind
inline double patch_defect(const StaircaseReport& rep) {
  double e = 0;
  for (const auto& s : rep.steps)
    if (!std::isnan(s.dist_final)) e += s.dist_final;
  return e;
}

// C1 dx + C2 eps through two calibration runs.  A negative constant from the exact
// 2x2 solve is replaced by the single-term envelope C1 = max R/dx, C2 = 0.
struct ResidualConstants {
  double C1 = 0, C2 = 0;
  bool envelope = false;
};

inline ResidualConstants fit_residual_constants(const std::vector<std::array<double, 3>>& runs) {
  ResidualConstants c;
  if (runs.size() == 2) {
    const auto& a = runs[0];
    const auto& b = runs[1];
    double det = a[0] * b[1] - a[1] * b[0];
    if (std::abs(det) > 1e-300) {
      c.C1 = (a[2] * b[1] - a[1] * b[2]) / det;
      c.C2 = (a[0] * b[2] - a[2] * b[0]) / det;
      if (c.C1 >= 0 && c.C2 >= 0) return c;
    }
  }
  c = {};
  c.envelope = true;
  for (const auto& r : runs) c.C1 = std::max(c.C1, r[2] / r[0]);
  return c;
}

namespace detail {

inline std::string csv_field_rows(const Composite& c, const std::string& header) {
  std::ostringstream os;
  os.precision(17);
  os << header << "\nseg,n,i,t,x,u,ux,region,patched\n";
  for (std::size_t s = 0; s < c.segments.size(); ++s) {
    const auto& w = c.segments[s];
    for (int n = 0; n + 1 < w.nt(); ++n) {
      bool any = false;
      for (int i = 0; i < w.nx && !any; ++i) any = w.region.size() && w.region[w.cell(i, n)];
      // rows without region cells carry u* only; trajectory.csv already has it
      if (!any) continue;
      const double t = w.t[n] + 0.5 * w.dt(n);
      for (int i = 0; i < w.nx; ++i) {
        const double x = (i + 0.5) * w.dx();
        auto [u, ux] = w.sample(x, t);
        long cell = w.cell(i, n);
        os << s << ',' << n << ',' << i << ',' << t << ',' << x << ',' << u << ',' << ux << ','
           << int(w.region[cell]) << ',' << int(w.patch(cell) != nullptr) << '\n';
      }
    }
  }
  return os.str();
}

inline std::string plot_script(const ScenarioConfig& cfg, bool staircase) {
  std::ostringstream os;
  os << cfg.header() << "\n"
     << "import csv, sys\n"
     << "import matplotlib\n"
     << "matplotlib.use('Agg')\n"
     << "import matplotlib.pyplot as plt\n\n"
     << "def rows(path):\n"
     << "    with open(path) as f:\n"
     << "        return list(csv.DictReader(l for l in f if not l.startswith('#')))\n\n"
     << "tr = rows('trajectory.csv')\n"
     << "times = sorted({float(r['t']) for r in tr})\n"
     << "fig, ax = plt.subplots(1, 2, figsize=(10, 4))\n"
     << "for t in times[:: max(1, len(times) // 8)]:\n"
     << "    sel = [r for r in tr if float(r['t']) == t]\n"
     << "    ax[0].plot([float(r['x']) for r in sel], [float(r['u']) for r in sel], label=f't={t:.3g}')\n"
     << "    ax[1].plot([float(r['x']) for r in sel], [float(r['ux']) for r in sel])\n"
     << "ax[0].set_xlabel('x'); ax[0].set_ylabel('u'); ax[0].legend(fontsize=6)\n"
     << "ax[1].set_xlabel('x'); ax[1].set_ylabel('u_x')\n"
     << "fig.savefig('trajectory.png', dpi=120)\n";
  if (staircase)
    os << "\nst = rows('steps.csv')\n"
       << "if st:\n"
       << "    j = [int(r['j']) for r in st]\n"
       << "    fig, ax = plt.subplots(1, 2, figsize=(10, 4))\n"
       << "    ax[0].semilogy(j, [float(r['energy_avg']) for r in st], 'o-', label='energy_avg')\n"
       << "    ax[0].semilogy(j, [float(r['d_j']) for r in st], 's--', label='d_j')\n"
       << "    ax[0].legend(); ax[0].set_xlabel('j')\n"
       << "    ax[1].plot(j, [float(r['gamma']) for r in st], 'o-', label='gauge')\n"
       << "    ax[1].plot(j, [float(r['e_j']) for r in st], 's--', label='e_j')\n"
       << "    ax[1].legend(); ax[1].set_xlabel('j')\n"
       << "    fig.savefig('steps.png', dpi=120)\n";
  return os.str();
}

inline void check(std::vector<std::string>& fails, bool ok, const std::string& what) {
  if (!ok) fails.push_back(what);
}

inline void step_invariants(const StaircaseReport& rep, std::vector<std::string>& fails) {
  for (const auto& s : rep.steps) {
    const std::string at = cat("step ", s.j, ": ");
    if (rep.scheme == Scheme::pm_blowup || rep.scheme == Scheme::pm_hierarchy) {
      check(fails, s.gauge_ok(), at + "gauge above 1.5 e_j");
      check(fails, s.energy_ok(), at + "energy average above d_j");
      check(fails, s.stability_ok(), at + "stability bound exceeded");
      check(fails, s.blowup_ok(), at + "gradient witness missed");
    } else if (rep.scheme == Scheme::nf_allocation && s.j > 0) {
      check(fails, s.lower <= s.gamma_base && s.gamma_base <= s.upper, at + "gauge outside the sandwich");
      check(fails, s.energy_avg <= s.d, at + "energy average above d_j");
      check(fails, s.concentration <= s.concentration_bound, at + "concentration bound exceeded");
    }
  }
  if (rep.scheme == Scheme::hollig_smoothing || rep.scheme == Scheme::pm_smoothing) {
    const auto& S = rep.smoothing;
    check(fails, S.envelopes.pass, "envelope monotonicity (" + S.envelopes.curve + ")");
    check(fails, S.outside_gap <= 1e-9, "laminates leak outside the region");
    if (!std::isnan(S.final_distance)) check(fails, S.final_distance <= S.final_budget, "final distance over budget");
  }
}

}  // namespace detail

inline Artifacts run_scenario(const ScenarioConfig& cfg) {
  Artifacts A;
  const FluxModel flux = build_flux(cfg.flux);
  check_compatible(cfg, flux);
  const auto u0 = cfg.u0.sample(cfg.sc.L, cfg.sc.nx);
  const std::string H = cfg.header();
  const double dx = cfg.sc.L / cfg.sc.nx;

  if (cfg.is_solve()) {
    A.tr = solve(flux, u0, Grid{cfg.sc.L, cfg.sc.nx, {}}, cfg.t_end, cfg.sc.solve_options());
    A.composite = composite_of(A.tr, flux);
  } else {
    try {
      switch (cfg.sc.scheme) {
        case Scheme::hollig_smoothing:
        case Scheme::pm_smoothing: A.rep = run_smoothing(u0, flux, cfg.sc); break;
        case Scheme::pm_blowup:
        case Scheme::pm_hierarchy: A.rep = run_blowup(u0, flux, cfg.sc); break;
        case Scheme::nf_allocation: A.rep = run_allocation(u0, flux, cfg.sc); break;
      }
    } catch (const PreconditionError& e) {
      throw PreconditionError(cat(cfg.scheme, ": ", e.what()));
    }
    A.tr = A.rep.base;
    A.composite = A.rep.composite;
  }

  A.residual = weak_residual(A.composite, flux, TestFunctionFamily::standard(cfg.sc.L, A.composite.t_end()));
  A.residual.eps_patch = cfg.is_solve() ? 0.0 : patch_defect(A.rep);

  const double m0 = mass(A.tr.u.front(), dx);
  double drift = 0;
  for (const auto& row : A.tr.u) drift = std::max(drift, std::abs(mass(row, dx) - m0));
  detail::check(A.failures, drift <= 1e-10 * std::max(1.0, std::abs(m0)), cat("mass drift ", drift));
  if (cfg.is_solve()) {
    auto E = envelope_check(A.tr);
    detail::check(A.failures, E.pass, "envelope monotonicity (" + E.curve + ")");
  } else {
    detail::step_invariants(A.rep, A.failures);
  }
  double bound = nan_v;
  if (!std::isnan(cfg.C1)) {
    bound = cfg.C1 * A.residual.dx + cfg.C2 * A.residual.eps_patch;
    detail::check(A.failures, A.residual.max_abs <= bound, cat("weak residual ", A.residual.max_abs, " above ", bound));
  }

  {
    std::ostringstream os;
    os << H << "\n";
    write_trajectory_csv(os, A.tr, cfg.every);
    A.files.emplace_back("trajectory.csv", os.str());
  }
  if (!cfg.is_solve()) {
    std::ostringstream st, rt, dj;
    write_steps_csv(st, A.rep, H);
    write_report_text(rt, A.rep, H);
    A.files.emplace_back("steps.csv", st.str());
    A.files.emplace_back("report.txt", rt.str());
    dj << H << "\n";
    for (const auto& s : A.rep.steps)
      for (const auto& R : s.density) {
        json j = to_json(R);
        j["step"] = s.j;
        dj << j.dump() << "\n";
      }
    A.files.emplace_back("density.jsonl", dj.str());
    if (cfg.write_field) A.files.emplace_back("field.csv", detail::csv_field_rows(A.composite, H));
  }
  {
    std::ostringstream os;
    os.precision(12);
    os << H << "\nm,n,total,grid,patch\n";
    for (std::size_t k = 0; k < A.residual.modes.size(); ++k)
      os << A.residual.modes[k].m << ',' << A.residual.modes[k].n << ',' << A.residual.total[k] << ','
         << A.residual.grid[k] << ',' << A.residual.patch[k] << '\n';
    A.files.emplace_back("residual.csv", os.str());
  }
  {
    std::ostringstream os;
    os.precision(8);
    os << H << "\nscenario " << cfg.name << "\nscheme " << cfg.scheme << "\nflux " << flux.id << " ("
       << to_string(flux.family) << ")\nnx " << cfg.sc.nx << " dx " << dx << "\n";
    os << "weak residual max " << A.residual.max_abs << " grid part " << A.residual.max_grid << " laminate part "
       << A.residual.max_patch << " over " << A.residual.modes.size() << " test functions, tau "
       << A.residual.tau << "\n";
    os << "laminate defect " << A.residual.eps_patch << "\n";
    if (!std::isnan(bound)) os << "residual bound C1 dx + C2 eps = " << bound << "\n";
    else os << "residual bound: no constants configured; the acceptable scale is a calibration choice\n";
    os << "mass drift " << drift << "\n";
    for (const auto& f : A.failures) os << "FAIL " << f << "\n";
    os << (A.ok() ? "all invariants hold\n" : "invariant failures: " + std::to_string(A.failures.size()) + "\n");
    A.files.emplace_back("verification.txt", os.str());
  }
  A.files.emplace_back("plot.py", detail::plot_script(cfg, !cfg.is_solve()));
  {
    std::ostringstream os;
    os << H << "\nscheme " << cfg.scheme << "\n";
    for (const auto& [n, c] : A.files) os << "file " << n << " " << hex64(fnv1a(c)) << "\n";
    A.files.emplace_back("manifest.txt", os.str());
  }
  return A;
}

inline void write_artifacts(const Artifacts& A, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (const auto& [name, content] : A.files) {
    std::ofstream out(fs::path(dir) / name, std::ios::binary);
    if (!out) throw ConfigError(cat("cannot write '", (fs::path(dir) / name).string(), "'"));
    out << content;
  }
}

// Strict subsolution for the standalone density demo: u = s0 x + c t with s0 the band
// midpoint at the middle level, v = s0 x^2 / 2 + c t x, so (u_x, v_t) = (s0, c x) sweeps
// the band along x.  Region: cells strictly inside the band.
inline SubsolutionField synthetic_strict_field(const Band& band, int nx = 48, int nt = 24, double T = 0.5) {
  const double rm = 0.5 * (band.r1() + band.r2());
  const double s0 = 0.5 * (band.gp(rm) + band.gm(rm)), c = band.r2() + 0.05;
  std::vector<double> times;
  std::vector<std::vector<double>> rows;
  for (int n = 0; n <= nt; ++n) {
    times.push_back(T * n / nt);
    std::vector<double> row;
    for (int i = 0; i <= nx; ++i) row.push_back(s0 * i / nx + c * times.back());
    rows.push_back(std::move(row));
  }
  auto w = field_from_rows(1.0, times, rows);
  for (int n = 0; n <= nt; ++n)
    for (int i = 0; i <= nx; ++i) {
      double x = static_cast<double>(i) / nx;
      w.v[w.node(i, n)] = 0.5 * s0 * x * x + c * times[n] * x;
    }
  w.v_ref = w.v;
  w.b = c + 1;
  for (int n = 0; n < nt; ++n)
    for (int i = 0; i < nx; ++i) {
      auto j = w.jac(i, n);
      w.region[w.cell(i, n)] = band.inside(j.ux, j.vt) && band.dist_boundary(j.ux, j.vt) > 1e-3;
    }
  return w;
}

// verification of stored runs ---------------------------------------------------

struct StoredRun {
  std::string dir, header, scheme;
  std::map<std::string, std::string> files;
};

struct VerifyOutcome {
  std::vector<std::string> failures;
  std::vector<std::string> notes;
  bool ok() const { return failures.empty(); }
};

namespace detail {

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DomainError(cat("missing file '", p.string(), "'"));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::string> split(const std::string& s, char d) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, d)) out.push_back(cur);
  return out;
}

inline double to_num(const std::string& s, const std::string& where) {
  if (s == "nan" || s == "-nan") return nan_v;
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw DomainError(cat(where, ": not a number '", s, "'"));
  return v;
}

// comment header, column line, numeric rows
inline std::vector<std::vector<double>> parse_csv(const std::string& text, const std::string& name,
                                                  std::vector<std::string>* columns = nullptr) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::vector<double>> rows;
  bool have_cols = false;
  std::size_t width = 0;
  int ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    if (line.empty() || line[0] == '#') continue;
    auto cells = split(line, ',');
    if (!have_cols) {
      have_cols = true;
      width = cells.size();
      if (columns) *columns = cells;
      continue;
    }
    if (cells.size() != width) throw DomainError(cat(name, " line ", ln, ": expected ", width, " columns"));
    std::vector<double> r;
    for (const auto& c : cells) r.push_back(to_num(c, cat(name, " line ", ln)));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline Trajectory trajectory_from_csv(const std::string& text) {
  auto rows = parse_csv(text, "trajectory.csv");
  Trajectory tr;
  if (rows.empty()) throw DomainError("trajectory.csv: no rows");
  int nx = 0;
  while (nx + 1 < static_cast<int>(rows.size()) && rows[nx + 1][0] == rows[0][0]) ++nx;
  tr.grid = Grid{rows[nx][1], nx, {}};
  if (rows.size() % (nx + 1) != 0) throw DomainError("trajectory.csv: ragged snapshots");
  for (std::size_t k = 0; k < rows.size(); k += nx + 1) {
    tr.grid.times.push_back(rows[k][0]);
    std::vector<double> u;
    for (int i = 0; i <= nx; ++i) u.push_back(rows[k + i][2]);
    tr.u.push_back(std::move(u));
  }
  tr.initial = tr.u.front();
  return tr;
}

}  // namespace detail

inline StoredRun load_run(const std::string& dir) {
  namespace fs = std::filesystem;
  StoredRun r;
  r.dir = dir;
  std::string man = detail::slurp(fs::path(dir) / "manifest.txt");
  std::istringstream in(man);
  std::string line;
  std::getline(in, r.header);
  while (std::getline(in, line)) {
    auto w = detail::split(line, ' ');
    if (w.size() == 2 && w[0] == "scheme") r.scheme = w[1];
    if (w.size() == 3 && w[0] == "file") r.files[w[1]] = w[2];
  }
  return r;
}

// hashes, headers, then the invariants that can be recomputed from the files
inline VerifyOutcome verify_run(const std::string& dir) {
  namespace fs = std::filesystem;
  VerifyOutcome V;
  StoredRun run;
  try {
    run = load_run(dir);
  } catch (const DomainError& e) {
    V.failures.push_back(cat("integrity: ", e.what()));
    return V;
  }
  std::map<std::string, std::string> content;
  for (const auto& [name, h] : run.files) {
    try {
      content[name] = detail::slurp(fs::path(dir) / name);
    } catch (const DomainError& e) {
      V.failures.push_back(cat("integrity: ", e.what()));
      continue;
    }
    if (hex64(fnv1a(content[name])) != h) V.failures.push_back(cat("integrity: ", name, " does not match its manifest hash"));
    if (content[name].compare(0, run.header.size(), run.header) != 0)
      V.failures.push_back(cat("integrity: ", name, " header differs from the manifest"));
  }
  if (!V.ok()) return V;

  try {
    auto tr = detail::trajectory_from_csv(content.at("trajectory.csv"));
    const double dx = tr.grid.dx();
    const double m0 = mass(tr.u.front(), dx);
    double drift = 0;
    for (const auto& row : tr.u) drift = std::max(drift, std::abs(mass(row, dx) - m0));
    // the CSV keeps 12 digits
    if (drift > 1e-9 * std::max(1.0, std::abs(m0))) V.failures.push_back(cat("mass drift ", drift));
    V.notes.push_back(cat("trajectory: ", tr.nt(), " snapshots, mass drift ", drift));
    if (run.scheme == "solve" || run.scheme == "hollig_smoothing" || run.scheme == "pm_smoothing") {
      auto E = envelope_check(tr, 1e-9);
      if (!E.pass) V.failures.push_back(cat("envelope ", E.curve, " violated at t = ", E.time));
    }
    if (content.count("steps.csv")) {
      std::vector<std::string> cols;
      auto rows = detail::parse_csv(content.at("steps.csv"), "steps.csv", &cols);
      auto col = [&](const std::string& n) {
        auto it = std::find(cols.begin(), cols.end(), n);
        if (it == cols.end()) throw DomainError("steps.csv: missing column " + n);
        return static_cast<std::size_t>(it - cols.begin());
      };
      const auto ce = col("e_j"), cd = col("d_j"), ca = col("energy_avg"), cg = col("gamma");
      for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& r = rows[k];
        if (!std::isnan(r[cd]) && r[ca] > r[cd]) V.failures.push_back(cat("steps.csv row ", k, ": energy above d_j"));
        if (run.scheme == "pm_blowup" || run.scheme == "pm_hierarchy") {
          if (r[cg] > 1.5 * r[ce]) V.failures.push_back(cat("steps.csv row ", k, ": gauge above 1.5 e_j"));
          if (k > 0 && !(r[ce] < rows[k - 1][ce])) V.failures.push_back(cat("steps.csv row ", k, ": e_j not decreasing"));
        }
      }
      V.notes.push_back(cat("steps: ", rows.size(), " rows"));
    }
    if (content.count("field.csv")) detail::parse_csv(content.at("field.csv"), "field.csv");
  } catch (const DomainError& e) {
    V.failures.push_back(cat("integrity: ", e.what()));
  }
  return V;
}

// sampled fields of two runs: largest gaps off the region and inside it
struct FieldComparison {
  double outside = 0;       // max |u_a - u_b| and |ux_a - ux_b| on cells outside the region
  double inside = 0;        // max |ux_a - ux_b| on region cells
  long n_inside = 0, n_outside = 0;
};

inline FieldComparison compare_fields(const std::string& a, const std::string& b) {
  auto ra = detail::parse_csv(a, "field.csv"), rb = detail::parse_csv(b, "field.csv");
  if (ra.size() != rb.size()) throw DomainError("field.csv: the two runs sample different cells");
  FieldComparison F;
  for (std::size_t k = 0; k < ra.size(); ++k) {
    const auto& p = ra[k];
    const auto& q = rb[k];
    for (int c : {0, 1, 2})
      if (p[c] != q[c]) throw DomainError("field.csv: the two runs sample different cells");
    if (p[7] != 0 || q[7] != 0) {
      F.inside = std::max(F.inside, std::abs(p[6] - q[6]));
      ++F.n_inside;
    } else {
      F.outside = std::max({F.outside, std::abs(p[5] - q[5]), std::abs(p[6] - q[6])});
      ++F.n_outside;
    }
  }
  return F;
}

inline FieldComparison compare_fields(const Composite& a, const Composite& b) {
  if (a.segments.size() != b.segments.size()) throw DomainError("composites differ in segment count");
  FieldComparison F;
  for (std::size_t s = 0; s < a.segments.size(); ++s) {
    const auto& wa = a.segments[s];
    const auto& wb = b.segments[s];
    if (wa.nt() != wb.nt() || wa.nx != wb.nx) throw DomainError("composites sample different grids");
    for (int n = 0; n + 1 < wa.nt(); ++n)
      for (int i = 0; i < wa.nx; ++i) {
        const double x = (i + 0.5) * wa.dx(), t = wa.t[n] + 0.5 * wa.dt(n);
        auto [ua, pa] = wa.sample(x, t);
        auto [ub, pb] = wb.sample(x, t);
        long c = wa.cell(i, n);
        if (wa.region[c] || wb.region[c]) {
          F.inside = std::max(F.inside, std::abs(pa - pb));
          ++F.n_inside;
        } else {
          F.outside = std::max({F.outside, std::abs(ua - ub), std::abs(pa - pb)});
          ++F.n_outside;
        }
      }
  }
  return F;
}

}  // namespace fbd
