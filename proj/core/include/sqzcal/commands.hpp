#pragma once

// The operations behind each CLI subcommand. Every command is a pure
// function of (config, inputs, seed) and communicates through files only.

#include <exception>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sqzcal/config.hpp"
#include "sqzcal/io.hpp"

namespace sqzcal {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitData = 3,
  kExitConvergence = 4,
  kExitPhysics = 5,
};

int exit_code_for(const std::exception& e);

// "start:stop:points", e.g. "3e6:8e6:501".
GridSpec parse_grid(std::string_view text);
// "name=value".
std::pair<std::string, double> parse_fix(std::string_view text);

struct ModelOptions {
  std::optional<std::vector<double>> pump_ratios;  // default: model.pump_ratios
  std::optional<GridSpec> grid;                    // default: grid.*
};

// CSV frequency_hz,pump_ratio,v_plus_db,v_minus_db, one block per ratio.
void cmd_model(const RunConfig& cfg, const ModelOptions& opts, std::ostream& out);

struct SynthSummary {
  std::filesystem::path dir;
  std::size_t trace_count = 0;
};

SynthSummary cmd_synth(const RunConfig& cfg, const std::filesystem::path& out_dir);

struct ProcessSummary {
  std::filesystem::path dir;
  ProcessResult result;
};

ProcessSummary cmd_process(const RunConfig& cfg, const std::filesystem::path& in_dir,
                           const std::filesystem::path& out_dir);

struct FitCommandOptions {
  std::vector<std::pair<std::string, double>> fixes;  // added to fit.fixed
};

struct FitSummary {
  std::vector<FitResult> fits;  // one joint fit, or one per pump setting
  Report report;
};

inline constexpr std::string_view kFitReportName = "fit_report.txt";
inline constexpr std::string_view kResidualsName = "residuals.csv";

// Accepts a raw or processed dataset directory. Writes fit_report.txt and
// residuals.csv, then throws ConvergenceError if any fit failed to converge.
FitSummary cmd_fit(const RunConfig& cfg, const std::filesystem::path& dataset_dir,
                   const std::filesystem::path& out_dir, const FitCommandOptions& opts = {});

struct CalibrateOptions {
  // eta_tot from a fit report; bounds widened to at least 2 sigma of the fit.
  std::optional<std::filesystem::path> fit_report;
  // Direct eta_tot central value; keeps the configured bounds.
  std::optional<double> eta_tot;
};

struct CalibrateSummary {
  CalibrationReport report;
  Report text;
};

inline constexpr std::string_view kCalibReportName = "calib_report.txt";
inline constexpr std::string_view kHistogramName = "qe_histogram.csv";

CalibrateSummary cmd_calibrate(const RunConfig& cfg, const CalibrateOptions& opts,
                               const std::filesystem::path& out_dir);

enum class Stage { Synth, Process, Fit, Calibrate };

std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view s);

struct PipelineSummary {
  std::vector<Stage> stages_run;
  FitSummary fit;
  CalibrateSummary calib;
};

inline constexpr std::string_view kPipelineManifestName = "pipeline.txt";

// synth/ -> processed/ -> fit/ -> calib/ under out_dir, plus pipeline.txt.
// Stages before start_at are read back from out_dir. Errors keep their type
// and are prefixed with the failing stage.
PipelineSummary cmd_pipeline(const RunConfig& cfg, const std::filesystem::path& out_dir,
                             Stage start_at = Stage::Synth);

}  // namespace sqzcal
