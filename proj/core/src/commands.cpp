#include "sqzcal/commands.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "sqzcal/synth.hpp"

namespace fs = std::filesystem;

namespace sqzcal {

namespace {

constexpr std::string_view kConfigCopyName = "config.cfg";

void save_config(const fs::path& dir, const RunConfig& cfg) {
  write_text(dir / std::string(kConfigCopyName), serialize(cfg));
}

double to_number(std::string_view s, std::string_view what) {
  std::istringstream is{std::string(s)};
  double v = 0.0;
  if (!(is >> v) || !(is >> std::ws).eof() || !std::isfinite(v)) {
    throw UsageError("invalid " + std::string(what) + " '" + std::string(s) + "'");
  }
  return v;
}

template <typename F>
auto in_stage(Stage stage, F&& f) {
  const std::string p = "stage " + std::string(to_string(stage)) + ": ";
  try {
    return f();
  } catch (const UsageError& e) {
    throw UsageError(p + e.what());
  } catch (const DataError& e) {
    throw DataError(p + e.what());
  } catch (const ConvergenceError& e) {
    throw ConvergenceError(p + e.what());
  } catch (const PhysicsError& e) {
    throw PhysicsError(p + e.what());
  } catch (const DomainError& e) {
    throw DomainError(p + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error(p + e.what());
  }
}

Dataset load_processed(const RunConfig& cfg, const fs::path& dir, Warnings* warnings) {
  DatasetFiles files = read_dataset(dir);
  if (files.stage == DatasetStage::Processed) return std::move(files.dataset);
  ProcessResult pr = process(files.dataset, cfg.process);
  if (warnings) warnings->insert(warnings->end(), pr.warnings.begin(), pr.warnings.end());
  return std::move(pr.dataset);
}

// Inverse-variance combination of per-curve efficiencies.
std::pair<double, double> combine_eta(const std::vector<FitResult>& fits) {
  double sw = 0.0;
  double swv = 0.0;
  for (const FitResult& f : fits) {
    const double s = f.stddev(0);
    if (!(s > 0.0)) continue;
    sw += 1.0 / (s * s);
    swv += f.estimate.eta_tot / (s * s);
  }
  if (sw == 0.0) return {fits.front().estimate.eta_tot, 0.0};
  return {swv / sw, 1.0 / std::sqrt(sw)};
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return kExitUsage;
  if (dynamic_cast<const DataError*>(&e)) return kExitData;
  if (dynamic_cast<const DomainError*>(&e)) return kExitData;
  if (dynamic_cast<const ConvergenceError*>(&e)) return kExitConvergence;
  if (dynamic_cast<const PhysicsError*>(&e)) return kExitPhysics;
  return kExitFailure;
}

GridSpec parse_grid(std::string_view text) {
  const auto a = text.find(':');
  const auto b = a == std::string_view::npos ? a : text.find(':', a + 1);
  if (a == std::string_view::npos || b == std::string_view::npos) {
    throw UsageError("grid must be start:stop:points, got '" + std::string(text) + "'");
  }
  GridSpec g;
  g.start_hz = to_number(text.substr(0, a), "grid start");
  g.stop_hz = to_number(text.substr(a + 1, b - a - 1), "grid stop");
  const double pts = to_number(text.substr(b + 1), "grid points");
  if (pts < 2 || pts != std::floor(pts)) throw UsageError("grid points must be an integer >= 2");
  g.points = static_cast<std::size_t>(pts);
  if (!(g.stop_hz > g.start_hz) || !(g.start_hz >= 0.0)) {
    throw UsageError("grid needs 0 <= start < stop");
  }
  return g;
}

std::pair<std::string, double> parse_fix(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw UsageError("--fix expects name=value, got '" + std::string(text) + "'");
  }
  return {std::string(text.substr(0, eq)), to_number(text.substr(eq + 1), "fixed value")};
}

void cmd_model(const RunConfig& cfg, const ModelOptions& opts, std::ostream& out) {
  const std::vector<double> ratios = opts.pump_ratios.value_or(cfg.model.pump_ratios);
  const GridSpec grid = opts.grid.value_or(cfg.grid);
  const ModelParams p = cfg.model.params();
  const std::vector<double> f = grid.frequencies();
  std::vector<ModelCurves> curves;
  for (double x : ratios) {
    if (!(x >= 0.0 && x < 1.0)) {
      throw UsageError("pump ratio must lie in [0, 1), got " + format_double(x));
    }
    curves.push_back(model_spectrum(p, x, f));
  }
  out << "frequency_hz,pump_ratio,v_plus_db,v_minus_db\n";
  for (std::size_t k = 0; k < ratios.size(); ++k) {
    const std::string x = format_sig12(ratios[k]);
    for (std::size_t i = 0; i < f.size(); ++i) {
      out << format_sig12(f[i]) << ',' << x << ',' << format_sig12(curves[k].v_plus_db[i]) << ','
          << format_sig12(curves[k].v_minus_db[i]) << '\n';
    }
  }
}

SynthSummary cmd_synth(const RunConfig& cfg, const fs::path& out_dir) {
  const AnalyzerSettings s = cfg.analyzer_settings();
  const Dataset ds = synth_dataset(cfg.model.params(), cfg.model.pump_ratios, s, cfg.seed);
  std::map<std::string, std::uint64_t> seeds;
  for (const Trace* t : ds.traces()) seeds[t->id] = trace_seed(cfg.seed, t->kind, t->pump_index);
  std::vector<std::pair<std::string, std::string>> extra = {
      {"generator", "synth"},
      {"n_eff", std::to_string(s.effective_averages())},
      {"config", std::string(kConfigCopyName)},
  };
  write_dataset(out_dir, ds, DatasetStage::Raw, cfg.seed, seeds, extra);
  save_config(out_dir, cfg);
  return {out_dir, ds.trace_count()};
}

ProcessSummary cmd_process(const RunConfig& cfg, const fs::path& in_dir, const fs::path& out_dir) {
  DatasetFiles raw = read_dataset(in_dir);
  if (raw.stage != DatasetStage::Raw) {
    throw DataError("dataset '" + in_dir.string() + "' is already processed");
  }
  ProcessSummary sum;
  sum.dir = out_dir;
  sum.result = process(raw.dataset, cfg.process);
  const ProcessResult& r = sum.result;
  write_dataset(out_dir, r.dataset, DatasetStage::Processed, raw.seed, {},
                {{"source", fs::absolute(in_dir).lexically_normal().string()}});
  save_config(out_dir, cfg);

  Report rep;
  std::ostringstream os;
  char line[200];
  std::snprintf(line, sizeof line, "dark clearance %.2f .. %.2f dB, %zu floored bins\n", r.clearance.min_db,
                r.clearance.max_db, r.floored_bins);
  os << line;
  std::snprintf(line, sizeof line, "%-20s %10s %14s %14s\n", "trace", "min dB", "at MHz", "band mean dB");
  os << line;
  rep.add("clearance.min_db", r.clearance.min_db);
  rep.add("clearance.max_db", r.clearance.max_db);
  rep.add("floored_bins", std::to_string(r.floored_bins));
  rep.add("band_start_hz", cfg.process.band_start_hz);
  rep.add("band_stop_hz", cfg.process.band_stop_hz);
  for (const PumpTraces& p : r.dataset.pumps) {
    for (const auto* t : {p.squeezed ? &*p.squeezed : nullptr, p.antisqueezed ? &*p.antisqueezed : nullptr}) {
      if (t == nullptr) continue;
      const BandSummary b = summarize(*t, cfg.process.band_start_hz, cfg.process.band_stop_hz);
      std::snprintf(line, sizeof line, "%-20s %10.3f %14.3f %14.3f\n", t->id.c_str(), b.min_db,
                    b.min_frequency_hz / 1e6, b.band_mean_db);
      os << line;
      rep.add("trace." + t->id + ".min_db", b.min_db);
      rep.add("trace." + t->id + ".min_frequency_hz", b.min_frequency_hz);
      rep.add("trace." + t->id + ".band_mean_db", b.band_mean_db);
      rep.add("trace." + t->id + ".max_db", b.max_db);
    }
  }
  for (const std::string& w : r.warnings) os << "warning: " << w << "\n";
  for (std::size_t i = 0; i < r.warnings.size(); ++i) rep.add("warning." + std::to_string(i), r.warnings[i]);
  rep.human = os.str();
  write_text(out_dir / "process_report.txt", rep.text());
  return sum;
}

FitSummary cmd_fit(const RunConfig& cfg, const fs::path& dataset_dir, const fs::path& out_dir,
                   const FitCommandOptions& opts) {
  FitOptions options = cfg.fit.options;
  for (const auto& [name, value] : opts.fixes) {
    std::erase_if(options.fixed, [&](const auto& f) { return f.first == name; });
    options.fixed.emplace_back(name, value);
  }
  Warnings load_warnings;
  const Dataset processed = load_processed(cfg, dataset_dir, &load_warnings);

  FitSummary sum;
  if (cfg.fit.mode == FitMode::Joint) {
    const FitProblem prob = FitProblem::from_dataset(processed, options);
    sum.fits.push_back(fit_model(prob, initial_guess(prob), options));
    sum.report = fit_report(sum.fits.front(), options, "joint fit");
  } else {
    sum.fits = fit_per_curve(processed, options);
    Report& r = sum.report;
    r.human = "per-curve fits (" + std::string(to_string(options.residual_space)) + " residuals, " +
              std::string(to_string(options.weights)) + " weights)\n";
    r.add("mode", std::string("per-curve"));
    r.add("residual_space", std::string(to_string(options.residual_space)));
    r.add("weights", std::string(to_string(options.weights)));
    r.add("curves", std::to_string(sum.fits.size()));
    const auto [eta, sd] = combine_eta(sum.fits);
    r.add("param.eta_tot.value", eta);
    r.add("param.eta_tot.stddev", sd);
    r.add("param.eta_tot.combined", std::string("inverse-variance"));
    bool all = true;
    for (std::size_t k = 0; k < sum.fits.size(); ++k) {
      r.human += "\ncurve " + std::to_string(k) + "\n";
      append_fit(r, sum.fits[k], "curve" + std::to_string(k) + ".");
      all = all && sum.fits[k].converged;
    }
    char line[120];
    std::snprintf(line, sizeof line, "\ncombined eta_tot %.8f +- %.3g\n", eta, sd);
    r.human += line;
    r.add("converged", std::string(all ? "true" : "false"));
  }
  for (std::size_t i = 0; i < load_warnings.size(); ++i) {
    sum.report.add("process_warning." + std::to_string(i), load_warnings[i]);
  }

  std::vector<TraceResidual> residuals;
  for (const FitResult& f : sum.fits) residuals.insert(residuals.end(), f.traces.begin(), f.traces.end());
  write_text(out_dir / std::string(kFitReportName), sum.report.text());
  write_residual_csv(out_dir / std::string(kResidualsName), residuals);
  save_config(out_dir, cfg);

  for (const FitResult& f : sum.fits) {
    if (!f.converged) {
      throw ConvergenceError("fit did not converge (" + f.termination + " after " + std::to_string(f.iterations) +
                             " iterations); partial report written to " +
                             (out_dir / std::string(kFitReportName)).string());
    }
  }
  return sum;
}

CalibrateSummary cmd_calibrate(const RunConfig& cfg, const CalibrateOptions& opts, const fs::path& out_dir) {
  if (opts.fit_report && opts.eta_tot) {
    throw UsageError("give either a fit report or --eta-tot, not both");
  }
  UncertainValue eta = cfg.calib.eta_tot;
  std::string source = "config";
  if (opts.fit_report) {
    const MachineBlock m = read_machine_block(*opts.fit_report);
    const double v = machine_double(m, "param.eta_tot.value");
    const double sd = machine_double(m, "param.eta_tot.stddev");
    if (const auto it = m.find("converged"); it != m.end() && it->second != "true") {
      throw ConvergenceError("fit report '" + opts.fit_report->string() + "' is from a fit that did not converge");
    }
    eta.value = v;
    eta.plus = std::max(eta.plus, 2.0 * sd);
    eta.minus = std::max(eta.minus, 2.0 * sd);
    source = opts.fit_report->string();
  } else if (opts.eta_tot) {
    eta.value = *opts.eta_tot;
    source = "command line";
  }
  if (!(eta.value > 0.0 && eta.value <= 1.0)) {
    throw DomainError("eta_tot must lie in (0, 1], got " + format_double(eta.value));
  }

  const CalibrationInput in = cfg.calibration_input(eta);
  CalibrateSummary sum;
  sum.report = calibrate_qe(in);
  sum.text = calibration_report(sum.report, in);
  sum.text.add("eta_tot.source", source);

  const CavitySummary cav = summarize(cfg.cavity);
  char line[200];
  std::snprintf(line, sizeof line,
                "\ncavity: round-trip loss %.1f ppm, escape %.4f %% [%.4f, %.4f], linewidth %.2f MHz "
                "(FSR/finesse %.2f MHz)\n",
                cav.round_trip_loss * 1e6, 100 * cav.escape_efficiency, 100 * cav.escape_lower,
                100 * cav.escape_upper, cav.linewidth_hz / 1e6, cav.linewidth_from_finesse_hz / 1e6);
  sum.text.human += line;
  sum.text.add("cavity.round_trip_loss", cav.round_trip_loss);
  sum.text.add("cavity.escape_efficiency", cav.escape_efficiency);
  sum.text.add("cavity.escape_lower", cav.escape_lower);
  sum.text.add("cavity.escape_upper", cav.escape_upper);
  sum.text.add("cavity.linewidth_hz", cav.linewidth_hz);
  sum.text.add("cavity.linewidth_from_finesse_hz", cav.linewidth_from_finesse_hz);

  write_text(out_dir / std::string(kCalibReportName), sum.text.text());
  write_histogram_csv(out_dir / std::string(kHistogramName), sum.report.mc.histogram);
  save_config(out_dir, cfg);
  return sum;
}

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Synth: return "synth";
    case Stage::Process: return "process";
    case Stage::Fit: return "fit";
    case Stage::Calibrate: return "calibrate";
  }
  return "synth";
}

Stage stage_from_string(std::string_view s) {
  if (s == "synth") return Stage::Synth;
  if (s == "process") return Stage::Process;
  if (s == "fit") return Stage::Fit;
  if (s == "calibrate") return Stage::Calibrate;
  throw UsageError("unknown stage '" + std::string(s) + "' (synth | process | fit | calibrate)");
}

PipelineSummary cmd_pipeline(const RunConfig& cfg, const fs::path& out_dir, Stage start_at) {
  const fs::path synth_dir = out_dir / "synth";
  const fs::path proc_dir = out_dir / "processed";
  const fs::path fit_dir = out_dir / "fit";
  const fs::path calib_dir = out_dir / "calib";
  fs::create_directories(out_dir);
  save_config(out_dir, cfg);

  PipelineSummary sum;
  auto runs = [&](Stage s) { return static_cast<int>(s) >= static_cast<int>(start_at); };

  if (runs(Stage::Synth)) {
    in_stage(Stage::Synth, [&] { return cmd_synth(cfg, synth_dir); });
    sum.stages_run.push_back(Stage::Synth);
  }
  if (runs(Stage::Process)) {
    in_stage(Stage::Process, [&] { return cmd_process(cfg, synth_dir, proc_dir); });
    sum.stages_run.push_back(Stage::Process);
  }
  if (runs(Stage::Fit)) {
    sum.fit = in_stage(Stage::Fit, [&] { return cmd_fit(cfg, proc_dir, fit_dir); });
    sum.stages_run.push_back(Stage::Fit);
  }
  sum.calib = in_stage(Stage::Calibrate, [&] {
    CalibrateOptions o;
    o.fit_report = fit_dir / std::string(kFitReportName);
    return cmd_calibrate(cfg, o, calib_dir);
  });
  sum.stages_run.push_back(Stage::Calibrate);

  std::ostringstream m;
  m << "seed = " << cfg.seed << "\n";
  m << "config = " << kConfigCopyName << "\n";
  m << "start_at = " << to_string(start_at) << "\n";
  std::string stages;
  for (Stage s : sum.stages_run) stages += (stages.empty() ? "" : ", ") + std::string(to_string(s));
  m << "stages_run = " << stages << "\n";
  m << "synth.dir = synth\n";
  m << "process.dir = processed\n";
  m << "fit.dir = fit\n";
  m << "fit.report = fit/" << kFitReportName << "\n";
  m << "calibrate.dir = calib\n";
  m << "calibrate.report = calib/" << kCalibReportName << "\n";
  if (!sum.fit.fits.empty()) {
    m << "result.eta_tot = " << format_double(sum.fit.fits.front().estimate.eta_tot) << "\n";
  }
  m << "result.qe = " << format_double(sum.calib.report.qe) << "\n";
  m << "result.qe_lower = " << format_double(sum.calib.report.lower) << "\n";
  m << "result.qe_upper = " << format_double(sum.calib.report.upper) << "\n";
  write_text(out_dir / std::string(kPipelineManifestName), m.str());
  return sum;
}

}  // namespace sqzcal
