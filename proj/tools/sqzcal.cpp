// sqzcal: squeezed-light photodiode calibration toolkit.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "sqzcal/commands.hpp"

namespace fs = std::filesystem;
using namespace sqzcal;

namespace {

void print_fit(const FitSummary& s) {
  for (std::size_t k = 0; k < s.fits.size(); ++k) {
    const FitResult& f = s.fits[k];
    std::cout << (s.fits.size() > 1 ? "curve " + std::to_string(k) + ": " : std::string())
              << "eta_tot " << format_sig12(f.estimate.eta_tot) << " +- " << format_sig12(f.stddev(0))
              << ", theta_pn " << format_sig12(f.estimate.theta_pn) << " rad"
              << ", linewidth " << format_sig12(f.estimate.linewidth_hz / 1e6) << " MHz"
              << " (" << f.termination << ", " << f.iterations << " iterations)\n";
  }
  for (const FitResult& f : s.fits) {
    for (const std::string& w : f.warnings) std::cerr << "warning: " << w << "\n";
  }
}

void print_calib(const CalibrateSummary& s) {
  const CalibrationReport& r = s.report;
  std::printf("qe %.4f %% (%s), k=2 [%.4f, %.4f] %%; multiplicative %.4f %%, additive %.4f %%\n", 100 * r.qe,
              std::string(to_string(r.mode)).c_str(), 100 * r.lower, 100 * r.upper, 100 * r.qe_multiplicative,
              100 * r.qe_additive);
  for (const std::string& w : r.warnings) std::cerr << "warning: " << w << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Photodiode quantum-efficiency calibration with squeezed light"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "sqzcal 0.1.0");

  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  bool print_config = false;
  app.add_option("-c,--config", config_path,
                 std::string("Config file (default: $") + kConfigEnvVar + ", else built-in)");
  app.add_option("--seed", seed, "Override the config seed");
  app.add_flag("--print-config", print_config, "Print the resolved config to stderr before running");

  auto* model = app.add_subcommand("model", "Write model spectra as CSV");
  std::vector<double> pump_ratios;
  std::string grid;
  std::string model_out;
  model->add_option("--pump-ratio", pump_ratios, "Pump ratio P/P_thr (repeatable; default: model.pump_ratios)")
      ->delimiter(',');
  model->add_option("--grid", grid, "Frequency grid start:stop:points in Hz");
  model->add_option("-o,--output", model_out, "Output CSV (default: stdout)");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic raw dataset");
  std::string synth_out;
  synth->add_option("-o,--output", synth_out, "Dataset directory")->required();

  auto* proc = app.add_subcommand("process", "Dark-subtract and vacuum-normalize a raw dataset");
  std::string proc_in;
  std::string proc_out;
  proc->add_option("dataset", proc_in, "Raw dataset directory")->required();
  proc->add_option("-o,--output", proc_out, "Processed dataset directory")->required();

  auto* fit = app.add_subcommand("fit", "Fit the spectrum model to a dataset");
  std::string fit_in;
  std::string fit_out;
  std::vector<std::string> fixes;
  std::string fit_mode;
  fit->add_option("dataset", fit_in, "Raw or processed dataset directory")->required();
  fit->add_option("-o,--output", fit_out, "Output directory")->required();
  fit->add_option("--fix", fixes, "Hold a parameter fixed, name=value (repeatable)");
  fit->add_option("--mode", fit_mode, "joint | per-curve (default: fit.mode)");

  auto* cal = app.add_subcommand("calibrate", "Infer the photodiode quantum efficiency");
  std::string fit_report;
  std::optional<double> eta_tot;
  std::string cal_out;
  std::string acc_mode;
  auto* fr = cal->add_option("--fit-report", fit_report, "Fit report supplying eta_tot");
  cal->add_option("--eta-tot", eta_tot, "Total detection efficiency (keeps configured bounds)")->excludes(fr);
  cal->add_option("--mode", acc_mode, "multiplicative | additive (default: calib.mode)");
  cal->add_option("-o,--output", cal_out, "Output directory")->required();

  auto* pipe = app.add_subcommand("pipeline", "synth -> process -> fit -> calibrate");
  std::string pipe_out;
  std::string start_at = "synth";
  pipe->add_option("-o,--output", pipe_out, "Run directory")->required();
  pipe->add_option("--start-at", start_at, "Resume at synth | process | fit | calibrate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    RunConfig cfg = resolve_config(config_path);
    if (seed) cfg.seed = *seed;
    if (!fit_mode.empty()) cfg.fit.mode = fit_mode_from_string(fit_mode);
    if (!acc_mode.empty()) cfg.calib.mode = accounting_mode_from_string(acc_mode);
    if (print_config) std::cerr << serialize(cfg);

    if (model->parsed()) {
      ModelOptions o;
      if (!pump_ratios.empty()) o.pump_ratios = pump_ratios;
      if (!grid.empty()) o.grid = parse_grid(grid);
      if (model_out.empty()) {
        cmd_model(cfg, o, std::cout);
      } else {
        std::ostringstream os;
        cmd_model(cfg, o, os);
        write_text(model_out, os.str());
      }
    } else if (synth->parsed()) {
      const SynthSummary s = cmd_synth(cfg, synth_out);
      std::cout << "wrote " << s.trace_count << " traces to " << s.dir.string() << "\n";
    } else if (proc->parsed()) {
      const ProcessSummary s = cmd_process(cfg, proc_in, proc_out);
      std::printf("dark clearance %.2f .. %.2f dB, %zu floored bins\n", s.result.clearance.min_db,
                  s.result.clearance.max_db, s.result.floored_bins);
      for (const std::string& w : s.result.warnings) std::cerr << "warning: " << w << "\n";
    } else if (fit->parsed()) {
      FitCommandOptions o;
      for (const std::string& f : fixes) o.fixes.push_back(parse_fix(f));
      print_fit(cmd_fit(cfg, fit_in, fit_out, o));
    } else if (cal->parsed()) {
      CalibrateOptions o;
      if (!fit_report.empty()) o.fit_report = fs::path(fit_report);
      o.eta_tot = eta_tot;
      print_calib(cmd_calibrate(cfg, o, cal_out));
    } else if (pipe->parsed()) {
      const PipelineSummary s = cmd_pipeline(cfg, pipe_out, stage_from_string(start_at));
      if (!s.fit.fits.empty()) print_fit(s.fit);
      print_calib(s.calib);
    }
  } catch (const std::exception& e) {
    std::cerr << "sqzcal: error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kExitOk;
}
