// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <cstdarg>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "oracles/finite_diff.hpp"
#include "sqzcal/calib.hpp"
#include "sqzcal/config.hpp"
#include "sqzcal/fit.hpp"
#include "sqzcal/model.hpp"
#include "sqzcal/synth.hpp"
#include "sqzcal/traces.hpp"

using namespace sqzcal;

namespace {

constexpr double kPi = 3.14159265358979323846;

[[gnu::format(printf, 1, 2)]] std::string fmt(const char* f, ...) {
  char buf[256];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& text) {
    if (!detail.empty()) detail += "; ";
    detail += text;
    if (!ok) {
      detail += " [x]";
      pass = false;
    }
  }
};

const ModelParams kTruth = ModelParams::from_linewidth(0.975, 1.7e-3, 84e6);
const std::vector<double> kRatios{0.08, 0.339, 0.835};

Dataset processed(const AnalyzerSettings& s, std::uint64_t seed) {
  return process(synth_dataset(kTruth, kRatios, s, seed)).dataset;
}

FitResult fit(const Dataset& ds) {
  const FitProblem prob = FitProblem::from_dataset(ds);
  return fit_model(prob, initial_guess(prob));
}

Outcome model_replication() {
  Outcome o;
  const std::vector<double> grid = linear_grid(3e6, 8e6, 501);
  const ModelCurves high = model_spectrum(kTruth, 0.835, grid);
  const ModelCurves mid = model_spectrum(kTruth, 0.339, grid);
  const double min_high = *std::min_element(high.v_minus_db.begin(), high.v_minus_db.end());
  const double min_mid = *std::min_element(mid.v_minus_db.begin(), mid.v_minus_db.end());
  const double max_mid = *std::max_element(mid.v_plus_db.begin(), mid.v_plus_db.end());
  o.check(std::abs(min_high + 15.3) <= 0.15, fmt("x=0.835 min %.4f dB (-15.3+-0.15)", min_high));
  o.check(std::abs(min_mid + 10.2) <= 0.5, fmt("x=0.339 sqz %.4f dB (-10.2+-0.5)", min_mid));
  o.check(std::abs(max_mid - 11.3) <= 0.5, fmt("anti %.4f dB (11.3+-0.5)", max_mid));
  return o;
}

Trace flat(std::string id, TraceKind kind, double level_db, int pump = -1) {
  Trace t;
  t.id = std::move(id);
  t.kind = kind;
  t.frequency_hz = linear_grid(3e6, 8e6, 11);
  t.power_db.assign(t.frequency_hz.size(), level_db);
  t.pump_index = pump;
  t.analyzer = {300e3, 200.0, 0.295};
  return t;
}

Outcome dark_arithmetic() {
  Outcome o;
  const double vac = -70.0;
  const Trace dark = flat("dark", TraceKind::Dark, vac - 28.0);
  const Trace vacuum = flat("vacuum", TraceKind::Vacuum, vac);
  const Trace sqz = flat("squeezed_0", TraceKind::Squeezed, vac - 15.0, 0);
  const double got = normalize_to_vacuum(subtract_dark(sqz, dark), subtract_dark(vacuum, dark)).power_db[0];
  o.check(std::abs(got + 15.2) <= 0.05, fmt("-15.0 dB at 28 dB clearance -> %.4f dB (-15.2+-0.05)", got));
  return o;
}

Outcome oracle_closure() {
  Outcome o;
  AnalyzerSettings clean;
  clean.zero_scatter = true;
  const FitResult exact = fit(processed(clean, 1));
  const double truth[] = {0.975, 1.7e-3, 84e6, 0.08, 0.339, 0.835};
  const Eigen::VectorXd est = exact.estimate.pack();
  double worst = 0.0;
  for (int k = 0; k < 6; ++k) worst = std::max(worst, std::abs(est[k] - truth[k]) / truth[k]);
  o.check(exact.converged && worst <= 1e-6, fmt("zero-scatter max rel err %.2e (<=1e-6)", worst));

  const int seeds = 50;
  std::vector<double> eta;
  double var_reported = 0.0;
  bool all_converged = true;
  for (int s = 1; s <= seeds; ++s) {
    const FitResult r = fit(processed(AnalyzerSettings{}, static_cast<std::uint64_t>(s)));
    all_converged = all_converged && r.converged;
    eta.push_back(r.estimate.eta_tot);
    var_reported += r.stddev(0) * r.stddev(0);
  }
  double mean = 0.0;
  for (double e : eta) mean += e;
  mean /= seeds;
  double var = 0.0;
  for (double e : eta) var += (e - mean) * (e - mean);
  const double scatter = std::sqrt(var / (seeds - 1));
  const double reported = std::sqrt(var_reported / seeds);
  const double ratio = scatter / reported;
  o.check(all_converged, fmt("%d noisy fits converged", seeds));
  o.check(std::abs(mean - 0.975) < 1e-3, fmt("eta bias %.2e (<1e-3)", mean - 0.975));
  o.check(ratio >= 1.0 / 1.5 && ratio <= 1.5, fmt("scatter/sigma %.3f (1/1.5..1.5)", ratio));
  return o;
}

Outcome calibration() {
  Outcome o;
  CalibrationInput in = default_config().calibration_input();
  in.mc.samples = 1'000'000;
  in.mode = AccountingMode::Additive;
  const CalibrationReport add = calibrate_qe(in);
  in.mode = AccountingMode::Multiplicative;
  const CalibrationReport mul = calibrate_qe(in);
  o.check(std::abs(add.qe - 0.995) <= 0.001, fmt("additive %.6f (0.995+-0.001)", add.qe));
  o.check(std::abs(mul.qe - 0.9943) <= 0.001, fmt("multiplicative %.6f (0.9943+-0.001)", mul.qe));
  o.check(mul.mc.half_width >= 0.0033 && mul.mc.half_width <= 0.0075, fmt("k=2 half-width %.4f %% (0.33..0.75 %%)",
          100.0 * mul.mc.half_width));
  o.check(mul.mc.samples == 1'000'000, fmt("%zu samples", mul.mc.samples));
  return o;
}

Outcome properties() {
  Outcome o;
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_product = 1e300;
  double worst_identity = 0.0;
  double worst_affine = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double eta = u(gen);
    const double theta = kPi / 4.0 * u(gen);
    const double lw = 1e5 * std::pow(10.0, 5.0 * u(gen));
    const double x = u(gen) * 0.999999;
    const double f = 1e9 * u(gen) * u(gen);
    const ModelParams p = ModelParams::from_linewidth(eta, theta, lw);
    const QuadraturePair q = apply_phase_noise(quad_variances(p, x, f), theta);
    worst_product = std::min(worst_product, q.v_plus * q.v_minus);
    const QuadraturePair one = quad_variances(ModelParams::from_linewidth(1.0, 0.0, lw), x, f);
    worst_identity = std::max(worst_identity, std::abs(one.v_plus * one.v_minus - 1.0));
    const QuadraturePair lossy = quad_variances(ModelParams::from_linewidth(eta, 0.0, lw), x, f);
    worst_affine = std::max(worst_affine, std::abs(lossy.v_plus - (1.0 + eta * (one.v_plus - 1.0))) / one.v_plus);
    worst_affine = std::max(worst_affine, std::abs(lossy.v_minus - (1.0 + eta * (one.v_minus - 1.0))));
  }
  o.check(worst_product >= 1.0 - 1e-12, fmt("min V+V- %.15f (>=1)", worst_product));
  o.check(worst_identity <= 1e-10, fmt("eta=1 |V+V- - 1| %.1e", worst_identity));
  o.check(worst_affine <= 1e-12, fmt("affinity err %.1e (<=1e-12)", worst_affine));

  AnalyzerSettings small;
  small.zero_scatter = true;
  small.grid.points = 41;
  const FitProblem prob = FitProblem::from_dataset(processed(small, 1));
  double worst_jac = 0.0;
  for (int draw = 0; draw < 100; ++draw) {
    FitParams p;
    p.eta_tot = 0.3 + 0.69 * u(gen);
    p.theta_pn = 1e-4 + 0.2 * u(gen);
    p.linewidth_hz = 20e6 + 200e6 * u(gen);
    for (int k = 0; k < 3; ++k) p.pump_ratios.push_back(0.02 + 0.93 * u(gen));
    const Eigen::MatrixXd j = jacobian(prob, p);
    const Eigen::MatrixXd fd = oracle::central_jacobian(
        [&](const Eigen::VectorXd& v) { return residuals(prob, FitParams::unpack(v)); }, p.pack());
    for (Eigen::Index c = 0; c < j.cols(); ++c) {
      const double scale = fd.col(c).cwiseAbs().maxCoeff();
      if (scale > 0.0) worst_jac = std::max(worst_jac, (j.col(c) - fd.col(c)).cwiseAbs().maxCoeff() / scale);
    }
  }
  o.check(worst_jac <= 1e-6, fmt("Jacobian vs FD %.1e (<=1e-6)", worst_jac));

  const Dataset a = synth_dataset(kTruth, kRatios, AnalyzerSettings{}, 42);
  const Dataset b = synth_dataset(kTruth, kRatios, AnalyzerSettings{}, 42);
  bool same = a.trace_count() == b.trace_count();
  const auto ta = a.traces();
  const auto tb = b.traces();
  for (std::size_t i = 0; same && i < ta.size(); ++i) same = ta[i]->power_db == tb[i]->power_db;
  o.check(same, fmt("synth deterministic"));

  CalibrationInput in = default_config().calibration_input();
  in.mc.samples = 200'000;
  in.mc.threads = 4;
  const McSummary m1 = mc_propagate(in);
  in.mc.threads = 1;
  const McSummary m2 = mc_propagate(in);
  const bool mc_same = m1.mean == m2.mean && m1.lower == m2.lower && m1.upper == m2.upper &&
                       m1.histogram.counts == m2.histogram.counts;
  o.check(mc_same, fmt("MC deterministic"));
  return o;
}

Outcome cavity_arithmetic() {
  Outcome o;
  const CavitySummary s = summarize(default_config().cavity);
  o.check(s.escape_efficiency >= 0.986 && s.escape_efficiency <= 0.9945, fmt("eta_esc %.5f (0.986..0.9945)",
          s.escape_efficiency));
  const double lw = linewidth_from_finesse(3.75e9, 54.0) / 1e6;
  o.check(std::abs(lw - 69.4) <= 0.1, fmt("FSR/F linewidth %.3f MHz (69.4+-0.1)", lw));
  return o;
}

struct Criterion {
  const char* name;
  std::function<Outcome()> run;
  double limit_s;  // 0 means unlimited
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"AC1 model replication", model_replication, 1.0},
      {"AC2 dark-noise arithmetic", dark_arithmetic, 1.0},
      {"AC3 oracle closure", oracle_closure, 120.0},
      {"AC4 calibration reproduction", calibration, 30.0},
      {"AC5 property suites", properties, 0.0},
      {"AC6 escape and linewidth arithmetic", cavity_arithmetic, 0.0},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_s > 0.0) o.check(dt < c.limit_s, fmt("%.3f s (<%.0f s)", dt, c.limit_s));
    else o.check(true, fmt("%.3f s", dt));
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
