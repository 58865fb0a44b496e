#include <iostream>

#include "CLI11.hpp"
#include "fbd/scenario.hpp"

using namespace fbd;

namespace {

int report(const VerifyOutcome& V, const std::string& what) {
  for (const auto& n : V.notes) std::cout << "  " << n << "\n";
  for (const auto& f : V.failures) std::cout << "  FAIL " << f << "\n";
  std::cout << what << (V.ok() ? " ok" : " FAILED") << "\n";
  return V.ok() ? 0 : 1;
}

std::string header_hash(const std::string& header) {
  auto p = header.find("config_hash=");
  return p == std::string::npos ? "" : header.substr(p + 12, 16);
}

// outputs of one config under two seeds: identical files for equal seeds, otherwise
// equal off the laminated region and different inside it
void pair_checks(const std::map<std::string, std::string>& a, const std::map<std::string, std::string>& b,
                 bool same_seed, VerifyOutcome& V) {
  if (same_seed) {
    for (const auto& [name, content] : a) {
      auto it = b.find(name);
      if (it == b.end()) V.failures.push_back("determinism: " + name + " missing in the second run");
      else if (it->second != content) V.failures.push_back("determinism: " + name + " differs");
    }
    if (V.ok()) V.notes.push_back(cat("determinism: ", a.size(), " files byte-identical"));
    return;
  }
  auto fa = a.find("field.csv"), fb = b.find("field.csv");
  if (fa == a.end() || fb == b.end()) {
    V.notes.push_back("no field.csv: seed witness skipped");
    return;
  }
  try {
    auto F = compare_fields(fa->second, fb->second);
    V.notes.push_back(cat("seed witness: outside ", F.outside, " over ", F.n_outside, " cells, inside ", F.inside,
                          " over ", F.n_inside, " cells"));
    if (F.outside > 1e-9) V.failures.push_back(cat("seed witness: runs differ outside the region by ", F.outside));
    if (F.n_inside == 0) V.failures.push_back("seed witness: empty region");
    else if (F.inside < 1e-3) V.failures.push_back(cat("seed witness: runs agree inside the region (", F.inside, ")"));
  } catch (const DomainError& e) {
    V.failures.push_back(cat("seed witness: ", e.what()));
  }
}

std::map<std::string, std::string> as_map(const Artifacts& A) {
  return {A.files.begin(), A.files.end()};
}

std::map<std::string, std::string> read_dir(const std::string& dir) {
  std::map<std::string, std::string> m;
  for (const auto& [name, h] : load_run(dir).files) {
    (void)h;
    m[name] = detail::slurp(std::filesystem::path(dir) / name);
  }
  m["manifest.txt"] = detail::slurp(std::filesystem::path(dir) / "manifest.txt");
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fbdlab: staircase constructions for forward-backward diffusion"};
  app.require_subcommand(1);

  std::string config, out, against;
  std::optional<std::uint64_t> seed;
  std::optional<int> nx, steps;
  auto common = [&](CLI::App* c) {
    c->add_option("--config", config, "scenario config (JSON)");
    c->add_option("--seed", seed, "seed for the laminate phases");
    c->add_option("--nx", nx, "grid cells");
    c->add_option("--steps", steps, "staircase steps J");
  };

  auto* run = app.add_subcommand("run", "run a scenario and write its artifacts");
  common(run);
  run->add_option("--out", out, "output directory (overrides output.dir)");
  run->get_option("--config")->required();

  auto* ver = app.add_subcommand("verify", "check stored runs, or rerun a config for determinism and the seed witness");
  common(ver);
  ver->add_option("--out", out, "run directory to check");
  ver->add_option("--against", against, "second run directory of the same config");

  double lam1 = 1, lam2 = 2, eps = 0.05, T = 1, width = 1;
  auto* osc = app.add_subcommand("oscillate", "standalone two-slope oscillation on a rectangle");
  osc->add_option("--lam1", lam1, "negative slope magnitude");
  osc->add_option("--lam2", lam2, "positive slope");
  osc->add_option("--eps", eps, "sup norm budget");
  osc->add_option("--width", width, "rectangle width");
  osc->add_option("--height", T, "rectangle height");
  osc->add_option("--out", out, "directory for oscillation.csv");

  double delta = 0.1, eta = 0.1, deps = 2.0;
  int K = 5;
  auto* den = app.add_subcommand("density-step", "density steps on a synthetic strict subsolution");
  den->add_option("--seed", seed, "laminate seed");
  den->add_option("--delta", delta, "distance budget as a fraction of the branch separation");
  den->add_option("--eps", deps, "gauge tolerance");
  den->add_option("--eta", eta, "sup norm tolerance");
  den->add_option("--schedule", K, "also run delta_k = 1/k for k = 1..K (0 to skip)");
  den->add_option("--out", out, "directory for density.jsonl");

  std::string flux_name = "perona_malik";
  std::vector<double> levels;
  double s2 = 2;
  auto* br = app.add_subcommand("branch", "flux classification and branch inversion");
  br->add_option("--flux", flux_name, "closed-form flux: linear, perona_malik, cubic, hollig_pl");
  br->add_option("--s2", s2, "hollig_pl corner");
  br->add_option("--r", levels, "levels to invert");

  CLI11_PARSE(app, argc, argv);
  std::cout.precision(10);

  try {
    if (*run) {
      auto cfg = load_config(config, Overrides{seed, nx, steps, out.empty() ? std::nullopt : std::optional(out)});
      auto A = run_scenario(cfg);
      write_artifacts(A, cfg.out_dir);
      std::cout << *A.file("verification.txt");
      for (const auto& [name, c] : A.files) std::cout << "wrote " << cfg.out_dir << "/" << name << "\n";
      return A.ok() ? 0 : 1;
    }

    if (*ver) {
      if (!config.empty()) {
        auto cfg = load_config(config, Overrides{seed, nx, steps, std::nullopt});
        auto a = run_scenario(cfg), b = run_scenario(cfg);
        VerifyOutcome V;
        pair_checks(as_map(a), as_map(b), true, V);
        auto other = cfg;
        other = load_config(config, Overrides{cfg.seed + 1, nx, steps, std::nullopt});
        auto c = run_scenario(other);
        pair_checks(as_map(a), as_map(c), false, V);
        for (const auto& f : a.failures) V.failures.push_back("invariant: " + f);
        return report(V, cfg.name);
      }
      if (out.empty()) throw ConfigError("verify needs --config or --out");
      VerifyOutcome V = verify_run(out);
      if (!against.empty() && V.ok()) {
        VerifyOutcome W = verify_run(against);
        for (const auto& f : W.failures) V.failures.push_back(against + ": " + f);
        if (W.ok()) {
          auto ra = load_run(out), rb = load_run(against);
          if (header_hash(ra.header) != header_hash(rb.header))
            V.failures.push_back("the two runs come from different configs");
          else
            pair_checks(read_dir(out), read_dir(against), ra.header == rb.header, V);
        }
      }
      return report(V, out);
    }

    if (*osc) {
      auto P = generate_oscillation(Rect{0, width, 0, T}, lam1, lam2, eps);
      auto m = P.measure();
      std::cout << "grid " << P.nx << " x " << P.nt << ", period " << P.period_cells << " cells\n"
                << "fraction at -lam1 " << m.frac_minus << " (target " << lam2 / (lam1 + lam2) << ")\n"
                << "fraction at +lam2 " << m.frac_plus << " (target " << lam1 / (lam1 + lam2) << ")\n"
                << "sup |phi| " << m.sup_phi << ", sup |psi| " << m.sup_psi << ", sup |phi_t| " << m.sup_phi_t
                << ", sup |psi_t| " << m.sup_psi_t << "\n"
                << "max |row integral of phi| " << m.max_row_integral << ", max |psi_x - phi| " << m.max_psi_x_gap
                << "\n";
      if (!out.empty()) {
        std::filesystem::create_directories(out);
        std::ofstream f(std::filesystem::path(out) / "oscillation.csv");
        f.precision(12);
        f << "# fbdlab oscillate lam1=" << lam1 << " lam2=" << lam2 << " eps=" << eps << "\nx,S,Psi\n";
        for (int i = 0; i <= P.nx; ++i) f << P.x(i) << ',' << P.S[i] << ',' << P.Psi[i] << '\n';
      }
      return 0;
    }

    if (*den) {
      const Band band(classified(hollig_pl_flux(20.5)), 0.6, 0.9);
      auto w = synthetic_strict_field(band);
      const double sep = band.pair().separation;
      const std::uint64_t sd = seed.value_or(1);
      std::ostringstream js;
      js << "# fbdlab density-step seed=" << sd << "\n";
      bool ok = true;
      auto res = density_step(w, band, delta * sep, deps, eta, sd);
      json j = to_json(res.report);
      js << j.dump() << "\n";
      std::cout << "one step, delta " << delta * sep << ": distance " << res.report.dist_before << " -> "
                << res.report.dist_after << " (budget " << delta * sep * res.report.measure << "), clauses "
                << (res.report.ok() ? "all hold" : "FAIL") << "\n";
      ok &= res.report.ok();
      for (int k = 1; k <= K; ++k) {
        auto s = density_step(w, band, 1.0 / k, deps, eta, sd);
        json jk = to_json(s.report);
        jk["schedule_k"] = k;
        js << jk.dump() << "\n";
        std::cout << "delta_" << k << " = 1/" << k << ": distance " << s.report.dist_after << "\n";
        ok &= s.report.ok();
      }
      if (!out.empty()) {
        std::filesystem::create_directories(out);
        std::ofstream(std::filesystem::path(out) / "density.jsonl") << js.str();
      }
      return ok ? 0 : 1;
    }

    if (*br) {
      FluxModel m = flux_name == "hollig_pl" ? hollig_pl_flux(s2) : closed_form_flux(flux_name);
      m = classified(m);
      const auto& L = m.lm;
      std::cout << "flux " << m.id << " family " << to_string(m.family) << "\n"
                << "s1 " << L.s1 << " s2 " << L.s2 << " sbar1 " << L.sbar1 << " sbar2 " << L.sbar2 << " s0- " << L.s0m
                << " s0+ " << L.s0p << "\n";
      for (double r : levels) {
        std::cout << "r " << r;
        for (auto [name, b] : {std::pair{"s-", Branch::minus}, std::pair{"s+", Branch::plus}}) {
          try {
            double s = branch_point(m, r, b);
            std::cout << "  " << name << " " << s << " (residual " << m(s) - r << ")";
          } catch (const DomainError& e) {
            std::cout << "  " << name << " n/a";
          }
        }
        std::cout << "\n";
      }
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const PreconditionError& e) {
    std::cerr << "precondition failed: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
