#pragma once

#include <fstream>
#include <set>
#include <sstream>

#include "fbd/staircase.hpp"
#include "json.hpp"

namespace fbd {

using json = nlohmann::json;

constexpr int config_schema = 1;

struct FluxSpec {
  std::string family;
  std::string closed_form;  // empty when knots are given
  double s2 = nan_v;        // hollig_pl only
  std::vector<double> knot_s, knot_sigma;
  Landmarks overrides;
};

// u0 on [0, L]: sum of A cos(k pi x / L), or a constant
struct U0Spec {
  std::string kind = "cosine_series";
  std::vector<std::pair<int, double>> coeffs;
  double value = 0;

  std::vector<double> sample(double L, int nx) const {
    std::vector<double> u(nx + 1, kind == "constant" ? value : 0.0);
    if (kind == "cosine_series")
      for (int i = 0; i <= nx; ++i)
        for (auto [k, a] : coeffs) u[i] += a * std::cos(k * M_PI * i / nx);
    (void)L;
    return u;
  }
};

struct ScenarioConfig {
  std::string name;
  std::string scheme;  // "solve" or a staircase scheme
  FluxSpec flux;
  U0Spec u0;
  StaircaseConfig sc;
  double t_end = nan_v;  // solve only
  double C1 = nan_v, C2 = nan_v;
  std::string out_dir = "out";
  int every = 1;
  bool write_field = true;
  std::uint64_t seed = 1;
  json effective;  // the document after overrides, as parsed
  std::string hash;

  bool is_solve() const { return scheme == "solve"; }
  std::string header() const { return cat("# fbdlab config_hash=", hash, " seed=", seed); }
};

namespace detail {

// walks one JSON object, rejecting unknown keys and wrong types with the dotted path
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "document" : path_, "expected an object");
  }
  ~Fields() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(at(it.key()), "unknown field");
  }

  bool has(const std::string& k) const { return j_.contains(k); }
  const json& raw(const std::string& k) {
    seen_.insert(k);
    if (!j_.contains(k)) fail(at(k), "missing");
    return j_.at(k);
  }
  std::string at(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

  double num(const std::string& k) {
    const json& v = raw(k);
    if (!v.is_number()) fail(at(k), "expected a number");
    double d = v.get<double>();
    if (!std::isfinite(d)) fail(at(k), "must be finite");
    return d;
  }
  double num(const std::string& k, double def) { return has(k) ? num(k) : (seen_.insert(k), def); }
  long integer(const std::string& k) {
    const json& v = raw(k);
    if (!v.is_number_integer()) fail(at(k), "expected an integer");
    return v.get<long>();
  }
  long integer(const std::string& k, long def) { return has(k) ? integer(k) : def; }
  std::string str(const std::string& k) {
    const json& v = raw(k);
    if (!v.is_string()) fail(at(k), "expected a string");
    return v.get<std::string>();
  }
  std::string str(const std::string& k, const std::string& def) { return has(k) ? str(k) : def; }
  bool boolean(const std::string& k, bool def) {
    if (!has(k)) return def;
    const json& v = raw(k);
    if (!v.is_boolean()) fail(at(k), "expected true or false");
    return v.get<bool>();
  }
  std::vector<double> numbers(const std::string& k) {
    const json& v = raw(k);
    if (!v.is_array()) fail(at(k), "expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) fail(at(k), "expected an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  [[noreturn]] static void fail(const std::string& field, const std::string& msg) {
    throw ConfigError(cat("config field '", field, "': ", msg));
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline int line_of(const std::string& text, std::size_t byte) {
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + std::min(byte, text.size()), '\n'));
}

inline FluxSpec parse_flux(const json& j) {
  Fields f(j, "flux");
  FluxSpec s;
  s.family = f.str("family");
  try {
    family_from_string(s.family);
  } catch (const ConfigError& e) {
    Fields::fail("flux.family", e.what());
  }
  if (f.has("closed_form") == f.has("knots")) Fields::fail("flux", "give exactly one of closed_form or knots");
  if (f.has("closed_form")) {
    s.closed_form = f.str("closed_form");
    if (f.has("s2")) s.s2 = f.num("s2");
  } else {
    Fields k(f.raw("knots"), "flux.knots");
    s.knot_s = k.numbers("s");
    s.knot_sigma = k.numbers("sigma");
    if (s.knot_s.size() != s.knot_sigma.size() || s.knot_s.size() < 2)
      Fields::fail("flux.knots", "s and sigma need equal lengths of at least 2");
    for (std::size_t i = 1; i < s.knot_s.size(); ++i)
      if (!(s.knot_s[i] > s.knot_s[i - 1])) Fields::fail("flux.knots.s", "must increase strictly");
  }
  if (f.has("landmarks")) {
    Fields l(f.raw("landmarks"), "flux.landmarks");
    auto& o = s.overrides;
    o.s1 = l.num("s1", nan_v);
    o.s2 = l.num("s2", nan_v);
    o.sbar1 = l.num("sbar1", nan_v);
    o.sbar2 = l.num("sbar2", nan_v);
    o.s0m = l.num("s0m", nan_v);
    o.s0p = l.num("s0p", nan_v);
  }
  return s;
}

inline U0Spec parse_u0(const json& j) {
  Fields f(j, "u0");
  U0Spec u;
  u.kind = f.str("kind");
  if (u.kind == "cosine_series") {
    const json& c = f.raw("coeffs");
    if (!c.is_array() || c.empty()) Fields::fail("u0.coeffs", "expected a non-empty array of [k, A] pairs");
    for (const auto& e : c) {
      if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number() || e[0].get<int>() < 0)
        Fields::fail("u0.coeffs", "each entry must be [k, A] with integer k >= 0");
      u.coeffs.emplace_back(e[0].get<int>(), e[1].get<double>());
    }
  } else if (u.kind == "constant") {
    u.value = f.num("value");
  } else {
    Fields::fail("u0.kind", cat("unknown kind '", u.kind, "' (cosine_series, constant)"));
  }
  return u;
}

}  // namespace detail

// strips the fields that do not change results
inline std::string config_hash(const json& effective) {
  json j = effective;
  j.erase("seed");
  j.erase("output");
  return hex64(fnv1a(j.dump()));
}

inline json load_json(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(cat("config ", source, " line ", detail::line_of(text, e.byte), ": ", e.what()));
  }
}

inline ScenarioConfig parse_config(const json& doc) {
  ScenarioConfig c;
  c.effective = doc;
  detail::Fields top(doc, "");
  long schema = top.integer("schema");
  if (schema != config_schema) detail::Fields::fail("schema", cat("unsupported version ", schema, ", expected ", config_schema));
  c.name = top.str("name", "scenario");
  c.scheme = top.str("scheme");
  if (!c.is_solve()) {
    try {
      c.sc.scheme = scheme_from_string(c.scheme);
    } catch (const ConfigError& e) {
      detail::Fields::fail("scheme", e.what());
    }
  }
  c.flux = detail::parse_flux(top.raw("flux"));
  c.u0 = detail::parse_u0(top.raw("u0"));
  {
    detail::Fields g(top.raw("grid"), "grid");
    c.sc.L = g.num("L", 1.0);
    c.sc.nx = static_cast<int>(g.integer("nx"));
    c.sc.dt = g.num("dt", 0.0);
    c.sc.stride = static_cast<int>(g.integer("stride", 4));
    if (c.sc.L <= 0) detail::Fields::fail("grid.L", "must be positive");
    if (c.sc.nx < 4) detail::Fields::fail("grid.nx", "must be at least 4");
    if (c.sc.dt < 0) detail::Fields::fail("grid.dt", "must be >= 0");
    if (c.sc.stride < 1) detail::Fields::fail("grid.stride", "must be >= 1");
  }
  if (c.is_solve()) {
    c.t_end = top.num("t_end");
    if (!(c.t_end > 0)) detail::Fields::fail("t_end", "must be positive");
  } else if (top.has("t_end")) {
    detail::Fields::fail("t_end", "only used by scheme 'solve'");
  }
  if (top.has("params")) {
    detail::Fields p(top.raw("params"), "params");
    c.sc.J = static_cast<int>(p.integer("J", c.sc.J));
    c.sc.r1 = p.num("r1", nan_v);
    c.sc.r2 = p.num("r2", nan_v);
    c.sc.r1p = p.num("r1p", nan_v);
    c.sc.r2p = p.num("r2p", nan_v);
    if (p.has("r")) c.sc.r = p.numbers("r");
    if (p.has("rp")) c.sc.rp = p.numbers("rp");
    c.sc.nf_r0 = p.num("nf_r0", nan_v);
    c.sc.nf_core = p.num("nf_core", c.sc.nf_core);
    c.sc.zero_tol = p.num("zero_tol", nan_v);
    c.sc.t_budget = p.num("t_budget", c.sc.t_budget);
    c.sc.tail = p.num("tail", c.sc.tail);
    if (c.sc.J < 1) detail::Fields::fail("params.J", "must be >= 1");
    if (c.sc.r.size() != c.sc.rp.size()) detail::Fields::fail("params.rp", "needs the same length as params.r");
  }
  if (top.has("density")) {
    detail::Fields d(top.raw("density"), "density");
    c.sc.density = d.boolean("enabled", true);
    c.sc.K_d = static_cast<int>(d.integer("K", c.sc.K_d));
    c.sc.eta = d.num("eta", c.sc.eta);
    c.sc.epsilon = d.num("epsilon", c.sc.epsilon);
    if (c.sc.K_d < 1) detail::Fields::fail("density.K", "must be >= 1");
    if (!(c.sc.eta > 0)) detail::Fields::fail("density.eta", "must be positive");
    if (!(c.sc.epsilon > 0)) detail::Fields::fail("density.epsilon", "must be positive");
  }
  if (top.has("residual")) {
    detail::Fields r(top.raw("residual"), "residual");
    c.C1 = r.num("C1");
    c.C2 = r.num("C2", 0.0);
    if (c.C1 < 0 || c.C2 < 0) detail::Fields::fail("residual", "constants must be >= 0");
  }
  if (top.has("output")) {
    detail::Fields o(top.raw("output"), "output");
    c.out_dir = o.str("dir", c.out_dir);
    c.every = static_cast<int>(o.integer("every", 1));
    c.write_field = o.boolean("field", true);
    if (c.every < 1) detail::Fields::fail("output.every", "must be >= 1");
  }
  long seed = top.integer("seed", 1);
  if (seed < 0) detail::Fields::fail("seed", "must be >= 0");
  c.seed = static_cast<std::uint64_t>(seed);
  c.sc.seed = c.seed;
  c.hash = config_hash(doc);
  return c;
}

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> nx, steps;
  std::optional<std::string> out;
};

inline json apply_overrides(json doc, const Overrides& o) {
  if (!doc.is_object()) return doc;
  if (o.seed) doc["seed"] = *o.seed;
  if (o.nx) doc["grid"]["nx"] = *o.nx;
  if (o.steps) doc["params"]["J"] = *o.steps;
  if (o.out) doc["output"]["dir"] = *o.out;
  return doc;
}

inline ScenarioConfig load_config(const std::string& path, const Overrides& o = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError(cat("cannot open config '", path, "'"));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(apply_overrides(load_json(ss.str(), path), o));
}

inline FluxModel build_flux(const FluxSpec& s) {
  FluxModel m;
  if (!s.closed_form.empty()) {
    try {
      m = s.closed_form == "hollig_pl" && !std::isnan(s.s2) ? hollig_pl_flux(s.s2) : closed_form_flux(s.closed_form);
    } catch (const ConfigError& e) {
      detail::Fields::fail("flux.closed_form", e.what());
    }
  } else {
    m = knot_flux(s.knot_s, s.knot_sigma);
  }
  m.lm = s.overrides;
  try {
    m = classified(std::move(m));
  } catch (const HypothesisError& e) {
    detail::Fields::fail("flux", e.what());
  }
  if (to_string(m.family) != s.family)
    detail::Fields::fail("flux.family", cat("declared '", s.family, "' but the flux classifies as '",
                                            to_string(m.family), "'"));
  return m;
}

// flux families each scheme accepts
inline void check_compatible(const ScenarioConfig& c, const FluxModel& m) {
  if (c.is_solve()) return;
  Family need = Family::strictly_parabolic;
  switch (c.sc.scheme) {
    case Scheme::hollig_smoothing: need = Family::hollig; break;
    case Scheme::pm_smoothing:
    case Scheme::pm_blowup:
    case Scheme::pm_hierarchy: need = Family::perona_malik; break;
    case Scheme::nf_allocation: need = Family::non_fourier; break;
  }
  if (m.family != need)
    detail::Fields::fail("flux.family", cat("scheme ", c.scheme, " needs a ", to_string(need), " flux"));
}

// density step reports as one JSON object per line
inline json to_json(const StepReport& R) {
  json j;
  j["short_circuit"] = R.short_circuit;
  j["delta"] = R.delta;
  j["epsilon"] = R.epsilon;
  j["eta"] = R.eta;
  j["seed"] = R.seed;
  j["measure"] = R.measure;
  j["dist_before"] = R.dist_before;
  j["dist_after"] = R.dist_after;
  auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  j["gamma_ref"] = num(R.gamma_ref);
  j["gamma_before"] = num(R.gamma_before);
  j["gamma_after"] = num(R.gamma_after);
  j["k"] = R.k;
  j["l"] = R.l;
  j["kappa"] = R.kappa;
  j["tau"] = R.tau;
  j["n_region"] = R.n_region;
  j["n_G"] = R.n_G;
  j["n_excluded"] = R.n_excluded;
  j["sup_w_change"] = R.sup_w_change;
  j["sup_u_drift"] = R.sup_u_drift;
  j["sup_ut_drift"] = R.sup_ut_drift;
  j["strict_margin"] = R.strict_margin;
  j["ut_margin"] = R.ut_margin;
  j["clauses"] = R.clause;
  j["ok"] = R.ok();
  return j;
}

}  // namespace fbd
