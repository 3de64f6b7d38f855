#include "cli_app.hpp"

#include "model_io.hpp"
#include "report.hpp"

#include <oqw/ergodic.hpp>
#include <oqw/trajectory.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <optional>
#include <ostream>

namespace oqwalk {

namespace {

using json = nlohmann::json;
using D = double;

struct Loaded {
  ModelFile mf;
  std::string path;
  std::string digest;
};

Loaded load(const std::string& path) {
  Loaded ld;
  std::string bytes;
  ld.mf = load_model(path, &bytes);
  ld.path = path;
  ld.digest = fnv1a_digest(bytes);
  return ld;
}

int site_index(const ModelFile& mf, int label, const char* flag) {
  if (label < 1 || label > mf.sites)
    throw model_error(std::string(flag) + " " + std::to_string(label) +
                      " out of range 1.." + std::to_string(mf.sites));
  return label - 1;
}

std::string site_tag(int i) { return std::to_string(i + 1); }

double json_number(const json& j, const std::string& field) {
  if (!j.is_number()) throw model_error("check field '" + field + "' must be a number");
  return j.get<double>();
}

// ---------------------------------------------------------------------------
// row emitters shared by the direct subcommands and check-all

void emit_validate(Report& rep, const ModelFile& mf, const std::string& p,
                   std::optional<bool> expect_tp, std::optional<bool> expect_unital,
                   std::optional<bool> expect_complete) {
  rep.info(p + "kind", to_string(mf.kind), "input");
  rep.info(p + "sites", double(mf.sites), "input");
  rep.info(p + "internal_dim", double(mf.internal_dim), "input");
  if (mf.kind == ModelKind::oqw || mf.kind == ModelKind::stochastic) {
    const auto w = to_walk(mf);
    const auto v = validate<D>(w);
    rep.check(p + "trace_defect", v.trace_defect, 1e-10, "analytic", v.trace_preserving,
              "transition matrices must sum to the identity columnwise");
    rep.info(p + "unital", v.unital ? "true" : "false", "analytic");
    rep.info(p + "unital_defect", v.unital_defect, "analytic");
    if (expect_tp)
      rep.check(p + "trace_preserving", v.trace_preserving ? 1.0 : 0.0, 0, "analytic",
                v.trace_preserving == *expect_tp,
                std::string("expected ") + (*expect_tp ? "true" : "false"));
    if (expect_unital)
      rep.check(p + "unital_flag", v.unital ? 1.0 : 0.0, 0, "analytic",
                v.unital == *expect_unital,
                std::string("expected ") + (*expect_unital ? "true" : "false"));
  }
  if (has_generator(mf)) {
    const auto g = to_generator(mf);
    rep.info(p + "vertices", double(g.vertices()), "analytic");
    const Eigen::Index nn = g.lhat().rows();
    Vec<D> tcov(nn);
    for (Eigen::Index a = 0; a < nn; ++a) {
      Vec<D> e = Vec<D>::Zero(nn);
      e[a] = Cx<D>(1);
      tcov[a] = Cx<D>(g.total_mass(e));
    }
    const double conserve = (tcov.transpose() * g.lhat()).cwiseAbs().maxCoeff();
    rep.check(p + "generator_mass_defect", conserve, 1e-10, "analytic", conserve <= 1e-10,
              "the generator must annihilate total mass");
    const auto comp = completeness_check<D>(g);
    rep.info(p + "complete", comp.complete ? "true" : "false", "analytic");
    if (expect_complete)
      rep.check(p + "complete_flag", comp.complete ? 1.0 : 0.0, 0, "analytic",
                comp.complete == *expect_complete,
                std::string("expected ") + (*expect_complete ? "true" : "false"));
  }
}

void emit_stationary(Report& rep, const ModelFile& mf, const std::string& p, double tol) {
  if (mf.kind == ModelKind::oqw || mf.kind == ModelKind::stochastic) {
    const auto w = to_walk(mf);
    const SiteSpace<D> sp(w.sites, w.dim);
    const Mat<D> phi = block_superoperator<D>(w);
    const auto st = stationary_state<D>(phi, sp);
    for (int i = 0; i < w.sites; ++i) {
      rep.info(p + "stationary_mass_" + site_tag(i), st.density[size_t(i)].trace().real(),
               "analytic");
      for (int r = 0; r < w.dim; ++r)
        for (int c = 0; c < w.dim; ++c)
          rep.info(p + "stationary_" + site_tag(i) + "_" + std::to_string(r + 1) +
                       std::to_string(c + 1),
                   format_complex<D>(st.density[size_t(i)](r, c)), "analytic");
    }
    rep.check(p + "stationary_residual", st.residual, tol, "analytic", st.residual <= tol,
              "fixed-point defect of the normalized state");
    rep.info(p + "stationary_unique", st.unique ? "true" : "false", "analytic");
    rep.info(p + "stationary_faithful", st.faithful ? "true" : "false", "analytic");
    return;
  }
  const auto g = to_generator(mf);
  const RVec<D> pi = vertex_stationary<D>(g);
  const RMat<D> q = vertex_rate_matrix<D>(g);
  for (int i = 0; i < g.vertices(); ++i)
    rep.info(p + "stationary_mass_" + site_tag(i), pi[i], "analytic");
  const double res = (q * pi).cwiseAbs().maxCoeff();
  rep.check(p + "stationary_residual", res, tol, "analytic", res <= tol,
            "kernel defect of the vertex rate matrix");
}

struct HitOptions {
  int from = 0, to = 0;  // 0-based
  std::string state;
  std::string mode = "discrete";
  double lambda = 1.0;
};

void emit_hitting(Report& rep, const ModelFile& mf, const std::string& p,
                  const HitOptions& o, std::optional<double> expect_p,
                  std::optional<double> expect_mean, double tol) {
  if (o.mode == "discrete") {
    const auto w = to_walk(mf);
    const SiteSpace<D> sp(w.sites, w.dim);
    const Mat<D> phi = block_superoperator<D>(w);
    const Mat<D> rho = named_state(mf, o.state);
    const auto hs = hit_statistics<D>(phi, sp, o.to, o.from, rho);
    if (expect_p)
      rep.check(p + "hitting_probability", hs.probability, tol, "analytic",
                std::abs(hs.probability - *expect_p) <= tol,
                "expected " + format_number(*expect_p));
    else
      rep.value(p + "hitting_probability", hs.probability, 1e-10, "analytic");
    const double mean = hs.mean_finite ? hs.mean
                                       : std::numeric_limits<double>::infinity();
    if (expect_mean)
      rep.check(p + "mean_hitting_time", mean, tol, "analytic",
                std::abs(mean - *expect_mean) <= tol, "expected " + format_number(*expect_mean));
    else
      rep.value(p + "mean_hitting_time", mean, 1e-10, "analytic");
    if (hs.abel) rep.info(p + "abel_limit", "true", "analytic", "peripheral spectrum averaged");
    return;
  }
  const auto g = to_generator(mf);
  if (o.mode == "poisson") {
    const auto pr = poisson_problem<D>(g, o.to, o.lambda);
    rep.info(p + "lambda", o.lambda, "input");
    rep.info(p + "monitored_spectral_radius", pr.record.spectral_radius, "analytic");
    const Vec<D> start = g.vertex_diagonal() ? g.start_vector(o.from)
                                             : g.start_vector(o.from, named_state(mf, o.state));
    const auto ph = poisson_hitting<D>(g, pr, start);
    if (expect_p)
      rep.check(p + "hitting_probability", ph.probability, tol, "analytic",
                std::abs(ph.probability - *expect_p) <= tol,
                "expected " + format_number(*expect_p));
    else
      rep.value(p + "hitting_probability", ph.probability, 1e-10, "analytic");
    if (expect_mean)
      rep.check(p + "mean_hitting_time", ph.mean_time, tol, "analytic",
                std::abs(ph.mean_time - *expect_mean) <= tol,
                "expected " + format_number(*expect_mean));
    else
      rep.value(p + "mean_hitting_time", ph.mean_time, 1e-10, "analytic");
    return;
  }
  if (o.mode == "ct-limit") {
    const auto lim = g.vertex_diagonal()
                         ? mean_hitting_ct<D>(g, o.to, o.from)
                         : mean_hitting_ct<D>(g, o.to, o.from, named_state(mf, o.state));
    const double fit_tol = std::max(lim.fit_residual, 1e-10);
    if (expect_mean)
      rep.check(p + "mean_hitting_time_limit", lim.limit, tol, "extrapolated",
                std::abs(lim.limit - *expect_mean) <= tol,
                "expected " + format_number(*expect_mean));
    else
      rep.value(p + "mean_hitting_time_limit", lim.limit, fit_tol, "extrapolated");
    rep.info(p + "rate_slope", lim.slope, "extrapolated", "coefficient of 1/rate in the fit");
    rep.value(p + "hitting_probability", lim.probability, 1e-10, "analytic");
    if (expect_p)
      rep.check(p + "hitting_probability_check", lim.probability, tol, "analytic",
                std::abs(lim.probability - *expect_p) <= tol,
                "expected " + format_number(*expect_p));
    return;
  }
  throw model_error("unknown hitting mode '" + o.mode + "'");
}

struct MhtfOptions {
  std::string which = "1";
  int from = 1, to = 0;  // 0-based; ct pair, defaults 2 -> 1
  std::string state;
  long long budget = 100000;
  std::uint64_t seed = 2026;
  double tol = 1e-8;
  std::vector<double> means;  // optional expected stationary means (which=2)
};

void emit_mhtf(Report& rep, const ModelFile& mf, const std::string& p, const MhtfOptions& o) {
  if (o.which == "1" || o.which == "2") {
    const auto w = to_walk(mf);
    const SiteSpace<D> sp(w.sites, w.dim);
    const Mat<D> phi = block_superoperator<D>(w);
    const auto d = ergodic_data<D>(phi, sp);
    if (o.which == "1") {
      const Mat<D> rho = named_state(mf, o.state);
      for (int i = 0; i < w.sites; ++i)
        for (int j = 0; j < w.sites; ++j) {
          if (i == j) continue;
          const auto c = mhtf1_verify<D>(d, rho, i, j);
          const std::string tag = site_tag(i) + "_from_" + site_tag(j);
          if (!c.finite) {
            rep.info(p + "mean_hit_" + tag, "inf", "analytic", "visit is not sure");
            continue;
          }
          rep.info(p + "mean_hit_" + tag, c.lhs, "analytic");
          rep.check(p + "mhtf1_residual_" + tag, c.residual, o.tol, "analytic",
                    c.residual <= o.tol, "hitting time vs fundamental-matrix form");
        }
      return;
    }
    for (int jsite = 0; jsite < w.sites; ++jsite) {
      const auto c = mhtf2_verify<D>(d, jsite);
      const std::string tag = site_tag(jsite);
      if (!c.finite) {
        rep.info(p + "stationary_mean_hit_" + tag, "inf", "analytic", "visit is not sure");
        continue;
      }
      rep.info(p + "stationary_mean_hit_" + tag, c.lhs, "analytic");
      rep.check(p + "mhtf2_residual_" + tag, c.residual, o.tol, "analytic",
                c.residual <= o.tol, "stationary average vs fundamental-matrix form");
      if (int(o.means.size()) == w.sites)
        rep.check(p + "stationary_mean_check_" + tag, c.lhs, o.tol, "analytic",
                  std::abs(c.lhs - o.means[size_t(jsite)]) <= o.tol,
                  "expected " + format_number(o.means[size_t(jsite)]));
    }
    return;
  }
  if (o.which != "ct") throw model_error("unknown mhtf variant '" + o.which + "'");
  const auto g = to_generator(mf);
  if (g.kind() == GeneratorKind::graph_induced)
    throw model_error(
        "the continuous-time hitting identity is not available for graph-induced "
        "generators (vertex populations are not autonomous)");
  if (g.vertex_diagonal()) {
    for (int i = 0; i < g.vertices(); ++i)
      for (int j = 0; j < g.vertices(); ++j) {
        if (i == j) continue;
        const auto c = mhtf_ct_verify<D>(g, Mat<D>::Identity(1, 1), i, j, o.budget, o.seed);
        const std::string tag = site_tag(i) + "_from_" + site_tag(j);
        rep.info(p + "mean_hit_ct_" + tag, c.lhs, "analytic");
        rep.check(p + "mhtf_ct_residual_" + tag, c.residual, o.tol, "analytic",
                  c.residual <= o.tol, "hitting time vs fundamental-matrix form");
      }
    return;
  }
  const Mat<D> rho = named_state(mf, o.state);
  const auto c = mhtf_ct_verify<D>(g, rho, o.to, o.from, o.budget, o.seed);
  const std::string tag = site_tag(o.to) + "_from_" + site_tag(o.from);
  rep.value(p + "mhtf_ct_lhs_" + tag, c.lhs, 1e-6, "extrapolated");
  rep.value(p + "mhtf_ct_rhs_" + tag, c.rhs, c.sigma, "monte_carlo");
  rep.check(p + "mhtf_ct_residual_" + tag, c.residual, 3 * c.sigma + 1e-8, "monte_carlo",
            c.within(3.0), "sampled return functional, three sigma band");
  rep.info(p + "mhtf_ct_samples_per_state", double(c.samples_per_state), "input");
}

struct KacOptions {
  bool ct = false;
  int site = 0;  // 1-based; 0 means every site
  double tol = -1;
  std::vector<double> means;
};

void emit_kac(Report& rep, const ModelFile& mf, const std::string& p, const KacOptions& o) {
  if (o.site < 0 || o.site > mf.sites)
    throw model_error("site " + std::to_string(o.site) + " out of range 1.." +
                      std::to_string(mf.sites));
  if (!o.ct) {
    const double tol = o.tol > 0 ? o.tol : 1e-8;
    const auto w = to_walk(mf);
    const SiteSpace<D> sp(w.sites, w.dim);
    const Mat<D> phi = block_superoperator<D>(w);
    const int lo = o.site > 0 ? o.site - 1 : 0;
    const int hi = o.site > 0 ? o.site : w.sites;
    for (int x = lo; x < hi; ++x) {
      const auto c = kac_verify<D>(phi, sp, x);
      const std::string tag = site_tag(x);
      if (!c.finite) {
        rep.check(p + "kac_finite_" + tag, 0.0, 0, "analytic", false,
                  "return to the site is not sure");
        continue;
      }
      rep.info(p + "mean_return_" + tag, c.expected_return, "analytic");
      rep.info(p + "inverse_stationary_mass_" + tag, c.inverse_trace, "analytic");
      rep.check(p + "kac_residual_" + tag, c.residual, tol, "analytic", c.residual <= tol,
                "mean return vs reciprocal stationary mass");
      if (int(o.means.size()) == w.sites)
        rep.check(p + "mean_return_check_" + tag, c.expected_return, tol, "analytic",
                  std::abs(c.expected_return - o.means[size_t(x)]) <= tol,
                  "expected " + format_number(o.means[size_t(x)]));
    }
    return;
  }
  const double tol = o.tol > 0 ? o.tol : 1e-6;
  const auto g = to_generator(mf);
  const auto rows = ct_kac_mn<D>(g);
  for (const auto& c : rows) {
    if (o.site > 0 && c.vertex != o.site - 1) continue;
    const std::string tag = site_tag(c.vertex);
    rep.info(p + "mean_return_ct_" + tag, c.conditional, "analytic",
             "first-jump decomposition of the mean return time");
    rep.info(p + "inverse_rate_mass_" + tag, c.reciprocal, "analytic");
    rep.check(p + "kac_ct_residual_" + tag, c.residual, tol, "analytic", c.residual <= tol,
              "mean return vs reciprocal of exit rate times stationary mass");
    if (int(o.means.size()) == int(rows.size()))
      rep.check(p + "mean_return_ct_check_" + tag, c.conditional, tol, "analytic",
                std::abs(c.conditional - o.means[size_t(c.vertex)]) <= tol,
                "expected " + format_number(o.means[size_t(c.vertex)]));
  }
}

void emit_recurrence(Report& rep, const ModelFile& mf, const std::string& p, double delta,
                     std::optional<bool> expect_recurrent) {
  const auto g = to_generator(mf);
  const auto r = ct_recurrence_report<D>(g, delta);
  rep.info(p + "delta", r.delta, "input");
  rep.info(p + "horizon", r.horizon, "input");
  for (const auto& v : r.vertex) {
    const std::string tag = site_tag(v.vertex);
    const bool rec = v.integral_recurrent;
    rep.info(p + "verdict_" + tag, rec ? "recurrent" : "transient", "analytic");
    rep.info(p + "integral_slope_" + tag, v.integral_slope, "analytic");
    rep.info(p + "skeleton_slope_" + tag, v.skeleton_slope, "analytic");
    rep.info(p + "monitored_return_" + tag, v.monitored_return, "analytic");
    rep.check(p + "diagnostics_agree_" + tag, v.agree ? 1.0 : 0.0, 0, "analytic", v.agree,
              "integral, skeleton and monitored-return verdicts must match");
    if (expect_recurrent)
      rep.check(p + "verdict_check_" + tag, rec ? 1.0 : 0.0, 0, "analytic",
                rec == *expect_recurrent,
                std::string("expected ") + (*expect_recurrent ? "recurrent" : "transient"));
  }
}

struct SimOptions {
  int from = 0, to = 0;  // 0-based
  std::string state;
  long long samples = 100000;
  std::uint64_t seed = 2026;
  std::optional<double> lambda;
  long long horizon = 0;  // 0 means per-mode default
  std::optional<double> expect_p, expect_mean;
  double band = 3.0;
};

void emit_simulate(Report& rep, const ModelFile& mf, const std::string& p,
                   const SimOptions& o) {
  McHitting mc;
  std::string scheme;
  if (o.lambda) {
    const auto g = to_generator(mf);
    const long long horizon = o.horizon > 0 ? o.horizon : 10000;
    if (g.vertex_diagonal())
      mc = mc_poisson_hitting<D>(g, o.to, o.from, *o.lambda, o.samples, horizon, o.seed);
    else
      mc = mc_poisson_hitting<D>(g, o.to, o.from, named_state(mf, o.state), *o.lambda,
                                 o.samples, horizon, o.seed);
    scheme = "poisson-measured evolution at rate " + format_number(*o.lambda);
  } else if (mf.kind == ModelKind::oqw || mf.kind == ModelKind::stochastic) {
    const auto w = to_walk(mf);
    const long long horizon = o.horizon > 0 ? o.horizon : 10000;
    mc = mc_hitting<D>(w, o.to, o.from, named_state(mf, o.state), o.samples, horizon, o.seed);
    scheme = "monitored discrete trajectories";
  } else {
    const auto g = to_generator(mf);
    const long long horizon = o.horizon > 0 ? o.horizon : 100000;
    mc = mc_ct_hitting<D>(g, o.to, o.from, named_state(mf, o.state), o.samples, horizon,
                          o.seed);
    scheme = "continuous-time jump chain";
  }
  rep.info(p + "samples", double(mc.samples), "input", scheme);
  rep.info(p + "seed", double(o.seed), "input");
  const auto pe = mc.probability;
  const auto te = mc.mean_time;
  if (o.expect_p)
    rep.check(p + "mc_hitting_probability", pe.mean, o.band * pe.std_error, "monte_carlo",
              std::abs(pe.mean - *o.expect_p) <= o.band * pe.std_error + 1e-12,
              "expected " + format_number(*o.expect_p) + " within " +
                  format_number(o.band) + " sigma");
  else
    rep.value(p + "mc_hitting_probability", pe.mean, pe.std_error, "monte_carlo",
              "tolerance is one standard error");
  if (o.expect_mean)
    rep.check(p + "mc_mean_hitting_time", te.mean, o.band * te.std_error, "monte_carlo",
              std::abs(te.mean - *o.expect_mean) <= o.band * te.std_error + 1e-12,
              "expected " + format_number(*o.expect_mean) + " within " +
                  format_number(o.band) + " sigma");
  else
    rep.value(p + "mc_mean_hitting_time", te.mean, te.std_error, "monte_carlo",
              "tolerance is one standard error; censored paths excluded");
  rep.info(p + "censored_fraction", mc.censored_fraction, "monte_carlo");
  rep.info(p + "branch_defect", mc.branch_defect, "monte_carlo");
}

// ---------------------------------------------------------------------------
// check-all: run the checks declared inside the model file

void run_declared_check(Report& rep, const ModelFile& mf, const json& c,
                        const std::string& prefix) {
  if (!c.is_object() || !c.contains("op") || !c["op"].is_string())
    throw model_error("each check must be an object with an 'op' string");
  const std::string op = c["op"].get<std::string>();

  auto opt_bool = [&](const char* k) -> std::optional<bool> {
    if (!c.contains(k)) return std::nullopt;
    if (!c[k].is_boolean()) throw model_error("check field '" + std::string(k) + "' must be a boolean");
    return c[k].get<bool>();
  };
  auto opt_num = [&](const char* k) -> std::optional<double> {
    if (!c.contains(k)) return std::nullopt;
    return json_number(c[k], k);
  };
  auto num_or = [&](const char* k, double dflt) {
    return c.contains(k) ? json_number(c[k], k) : dflt;
  };
  auto site_or = [&](const char* k, int dflt_label) {
    const int label = c.contains(k) ? int(json_number(c[k], k)) : dflt_label;
    return site_index(mf, label, k);
  };
  auto means_list = [&]() {
    std::vector<double> m;
    if (c.contains("means")) {
      if (!c["means"].is_array()) throw model_error("check field 'means' must be an array");
      for (const auto& v : c["means"]) m.push_back(json_number(v, "means"));
    }
    return m;
  };

  if (op == "validate") {
    emit_validate(rep, mf, prefix, opt_bool("trace_preserving"), opt_bool("unital"),
                  opt_bool("complete"));
  } else if (op == "stationary") {
    emit_stationary(rep, mf, prefix, num_or("tolerance", 1e-10));
  } else if (op == "hitting") {
    HitOptions o;
    o.mode = c.contains("mode") ? c["mode"].get<std::string>() : "discrete";
    o.from = site_or("from", 1);
    o.to = site_or("to", 1);
    o.state = c.contains("state") ? c["state"].get<std::string>() : "";
    o.lambda = num_or("lambda", 1.0);
    emit_hitting(rep, mf, prefix, o, opt_num("probability"), opt_num("mean"),
                 num_or("tolerance", 1e-8));
  } else if (op == "mhtf") {
    MhtfOptions o;
    o.which = c.contains("which") ? c["which"].get<std::string>() : "1";
    o.tol = num_or("tolerance", 1e-8);
    o.budget = (long long)num_or("budget", 100000);
    o.seed = (std::uint64_t)num_or("seed", 2026);
    o.state = c.contains("state") ? c["state"].get<std::string>() : "";
    o.means = means_list();
    if (o.which == "ct" && !c.contains("to") && !c.contains("from")) {
      // vertex-diagonal models run every pair; walk models need the pair
      o.to = 0;
      o.from = std::min(1, mf.sites - 1);
    } else if (o.which == "ct") {
      o.to = site_or("to", 1);
      o.from = site_or("from", std::min(2, mf.sites));
    }
    emit_mhtf(rep, mf, prefix, o);
  } else if (op == "kac") {
    KacOptions o;
    o.ct = opt_bool("ct").value_or(false);
    o.site = c.contains("site") ? int(json_number(c["site"], "site")) : 0;
    o.tol = num_or("tolerance", -1);
    o.means = means_list();
    emit_kac(rep, mf, prefix, o);
  } else if (op == "recurrence") {
    emit_recurrence(rep, mf, prefix, num_or("delta", 0.5), opt_bool("recurrent"));
  } else if (op == "simulate") {
    SimOptions o;
    o.from = site_or("from", 1);
    o.to = site_or("to", 1);
    o.state = c.contains("state") ? c["state"].get<std::string>() : "";
    o.samples = (long long)num_or("samples", 100000);
    o.seed = (std::uint64_t)num_or("seed", 2026);
    o.lambda = opt_num("lambda");
    o.horizon = (long long)num_or("horizon", 0);
    o.expect_p = opt_num("probability");
    o.expect_mean = opt_num("mean");
    o.band = num_or("band", 3.0);
    emit_simulate(rep, mf, prefix, o);
  } else {
    throw model_error("unknown check op '" + op + "'");
  }
}

void emit_check_all(Report& rep, const ModelFile& mf) {
  if (mf.checks.empty()) throw model_error("model declares no checks");
  int k = 0;
  for (const auto& c : mf.checks) {
    ++k;
    run_declared_check(rep, mf, c, "c" + std::to_string(k) + "_");
  }
}

std::string join_args(const std::vector<std::string>& args) {
  std::string s = "oqw";
  for (const auto& a : args) {
    s += ' ';
    s += a;
  }
  return s;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (const char* t = std::getenv("OQW_THREADS")) Eigen::setNbThreads(std::atoi(t));

  CLI::App app{"open quantum walk analysis"};
  app.require_subcommand(1);

  std::string file, csv_path, state, mode = "discrete", which = "1";
  int from_label = 1, to_label = 1, site_label = 0;
  double lambda = 1.0, tol = -1, delta = 0.5;
  long long samples = 100000, budget = 100000, horizon = 0;
  std::uint64_t seed = 2026;
  bool ct_flag = false, lambda_given = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("file", file, "model file (JSON)")->required();
    sub->add_option("--csv", csv_path, "write the CSV table to a path, or '-' for stdout");
  };

  auto* c_validate = app.add_subcommand("validate", "parse a model and check its algebraic hypotheses");
  add_common(c_validate);

  auto* c_stationary = app.add_subcommand("stationary", "stationary state and fixed-point residual");
  add_common(c_stationary);
  c_stationary->add_option("--tolerance", tol, "residual gate (default 1e-10)");

  auto* c_hitting = app.add_subcommand("hitting", "first-visit probability and mean hitting time");
  add_common(c_hitting);
  c_hitting->add_option("--from", from_label, "start site (1-based)")->required();
  c_hitting->add_option("--to", to_label, "target site (1-based)")->required();
  c_hitting->add_option("--state", state, "named initial density (default maximally mixed)");
  c_hitting->add_option("--mode", mode, "discrete | poisson | ct-limit")
      ->check(CLI::IsMember({"discrete", "poisson", "ct-limit"}));
  c_hitting->add_option("--lambda", lambda, "measurement rate for poisson mode");

  auto* c_mhtf = app.add_subcommand("mhtf", "mean-hitting-time identities against the fundamental matrix");
  add_common(c_mhtf);
  c_mhtf->add_option("--which", which, "1 | 2 | ct")->check(CLI::IsMember({"1", "2", "ct"}));
  c_mhtf->add_option("--from", from_label, "start site for the ct pair (1-based)");
  c_mhtf->add_option("--to", to_label, "target site for the ct pair (1-based)");
  c_mhtf->add_option("--state", state, "named initial density");
  c_mhtf->add_option("--budget", budget, "return-time trajectory budget (ct, walk models)");
  c_mhtf->add_option("--seed", seed, "master seed for the sampled return functional");
  c_mhtf->add_option("--tolerance", tol, "residual gate (default 1e-8)");

  auto* c_kac = app.add_subcommand("kac", "mean return time against the reciprocal stationary mass");
  add_common(c_kac);
  c_kac->add_flag("--ct", ct_flag, "continuous-time identity on vertex-diagonal models");
  c_kac->add_option("--site", site_label, "restrict to one site (1-based; default all)");
  c_kac->add_option("--tolerance", tol, "residual gate (default 1e-8 discrete, 1e-6 ct)");

  auto* c_recurrence = app.add_subcommand("recurrence", "recurrence diagnostics of the continuous-time model");
  add_common(c_recurrence);
  c_recurrence->add_option("--delta", delta, "skeleton step (default 0.5)");

  auto* c_simulate = app.add_subcommand("simulate", "Monte Carlo trajectory estimate of hitting statistics");
  add_common(c_simulate);
  c_simulate->add_option("--from", from_label, "start site (1-based)")->required();
  c_simulate->add_option("--to", to_label, "target site (1-based)")->required();
  c_simulate->add_option("--state", state, "named initial density");
  c_simulate->add_option("--samples", samples, "trajectory count (default 100000)");
  c_simulate->add_option("--seed", seed, "master seed (default 2026)");
  c_simulate->add_option("--lambda", lambda, "sample the measured evolution at this rate")
      ->each([&](const std::string&) { lambda_given = true; });
  c_simulate->add_option("--horizon", horizon, "step/jump cap per trajectory (0 = default)");

  auto* c_check_all = app.add_subcommand("check-all", "run every check declared in the model file");
  add_common(c_check_all);

  std::vector<const char*> argv;
  argv.push_back("oqw");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "input error: " << e.what() << "\n";
    return 2;
  }

  Report rep;
  rep.command = join_args(args);
  try {
    const Loaded ld = load(file);
    rep.input_path = ld.path;
    rep.input_digest = ld.digest;
    const ModelFile& mf = ld.mf;

    if (c_validate->parsed()) {
      emit_validate(rep, mf, "", std::nullopt, std::nullopt, std::nullopt);
    } else if (c_stationary->parsed()) {
      emit_stationary(rep, mf, "", tol > 0 ? tol : 1e-10);
    } else if (c_hitting->parsed()) {
      HitOptions o;
      o.from = site_index(mf, from_label, "--from");
      o.to = site_index(mf, to_label, "--to");
      o.state = state;
      o.mode = mode;
      o.lambda = lambda;
      emit_hitting(rep, mf, "", o, std::nullopt, std::nullopt, 1e-8);
    } else if (c_mhtf->parsed()) {
      MhtfOptions o;
      o.which = which;
      o.state = state;
      o.budget = budget;
      o.seed = seed;
      o.tol = tol > 0 ? tol : 1e-8;
      if (which == "ct") {
        o.to = site_index(mf, c_mhtf->count("--to") ? to_label : 1, "--to");
        o.from = site_index(mf, c_mhtf->count("--from") ? from_label : std::min(2, mf.sites),
                            "--from");
      }
      emit_mhtf(rep, mf, "", o);
    } else if (c_kac->parsed()) {
      KacOptions o;
      o.ct = ct_flag;
      o.site = site_label;
      o.tol = tol;
      if (o.site != 0) site_index(mf, o.site, "--site");
      emit_kac(rep, mf, "", o);
    } else if (c_recurrence->parsed()) {
      emit_recurrence(rep, mf, "", delta, std::nullopt);
    } else if (c_simulate->parsed()) {
      SimOptions o;
      o.from = site_index(mf, from_label, "--from");
      o.to = site_index(mf, to_label, "--to");
      o.state = state;
      o.samples = samples;
      o.seed = seed;
      o.horizon = horizon;
      if (lambda_given) o.lambda = lambda;
      emit_simulate(rep, mf, "", o);
    } else if (c_check_all->parsed()) {
      emit_check_all(rep, mf);
    }
  } catch (const hypothesis_error& e) {
    err << "hypothesis violation: " << e.what() << "\n";
    return 3;
  } catch (const model_error& e) {
    err << "input error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "input error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 1;
  }

  if (csv_path == "-") {
    out << rep.csv();
  } else {
    out << rep.human();
    if (!csv_path.empty()) {
      std::ofstream f(csv_path, std::ios::binary);
      if (!f) {
        err << "input error: cannot write '" << csv_path << "'\n";
        return 2;
      }
      f << rep.csv();
    }
  }
  return rep.ok() ? 0 : 1;
}

}  // namespace oqwalk
