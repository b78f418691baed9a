#pragma once

// Run configuration: a flat `key = value` text format with dotted section
// names. `#` starts a comment. Uncertain quantities are written as
// `value +plus -minus` and must always carry both bounds; lists are comma
// separated. Unknown or repeated keys are rejected. See docs/config.md.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sqzcal/budget.hpp"
#include "sqzcal/calib.hpp"
#include "sqzcal/fit.hpp"
#include "sqzcal/model.hpp"
#include "sqzcal/synth.hpp"
#include "sqzcal/traces.hpp"

namespace sqzcal {

// Environment variable naming the default config file.
inline constexpr const char* kConfigEnvVar = "SQZCAL_CONFIG";

// One intracavity loss mechanism: either a per-pass loss in ppm or a bulk
// absorption in ppm/cm over a length.
struct CavityLossSpec {
  std::string name;
  std::optional<UncertainValue> ppm;
  std::optional<UncertainValue> ppm_per_cm;
  double length_cm = 0.0;
  double passes = 1.0;

  LossComponent component() const;
  bool operator==(const CavityLossSpec&) const = default;
};

struct CavityConfig {
  UncertainValue coupler_transmission;
  double round_trip_length_m = 0.0;
  double fsr_hz = 0.0;
  double finesse = 0.0;
  double pump_wavelength_m = 532e-9;
  double fundamental_wavelength_m = 1064e-9;
  std::vector<CavityLossSpec> losses;

  std::vector<LossComponent> components() const;
  // Central values only.
  CavityParams params() const;
  bool operator==(const CavityConfig&) const = default;
};

// Escape efficiency and linewidth implied by the cavity description.
struct CavitySummary {
  double round_trip_loss = 0.0;
  double escape_efficiency = 0.0;
  double escape_lower = 0.0;  // extremes over the loss and transmission bounds
  double escape_upper = 0.0;
  double linewidth_hz = 0.0;  // c (T + L) / (2 pi l)
  double linewidth_from_finesse_hz = 0.0;
};

CavitySummary summarize(const CavityConfig& c);

struct ModelConfig {
  double eta_tot = 0.0;
  double theta_pn_rad = 0.0;
  double linewidth_hz = 0.0;
  std::vector<double> pump_ratios;

  ModelParams params() const { return ModelParams::from_linewidth(eta_tot, theta_pn_rad, linewidth_hz); }
  bool operator==(const ModelConfig&) const = default;
};

struct LedgerConfig {
  UncertainValue escape;
  UncertainValue visibility;  // fringe visibility V; enters as V^2
  UncertainValue lens;
  std::vector<std::pair<std::string, UncertainValue>> other;  // efficiencies
  Distribution distribution = Distribution::SplitUniform;

  LossLedger ledger() const;
  bool operator==(const LedgerConfig&) const = default;
};

struct CalibConfig {
  UncertainValue eta_tot;
  AccountingMode mode = AccountingMode::Multiplicative;
  std::size_t samples = 1'000'000;
  std::size_t histogram_bins = 200;
  std::size_t threads = 0;

  bool operator==(const CalibConfig&) const = default;
};

enum class FitMode { Joint, PerCurve };

std::string_view to_string(FitMode m);
FitMode fit_mode_from_string(std::string_view s);

struct FitConfig {
  FitOptions options;
  FitMode mode = FitMode::Joint;

  bool operator==(const FitConfig&) const = default;
};

struct RunConfig {
  std::uint64_t seed = 1;
  ModelConfig model;
  GridSpec grid;
  AnalyzerSettings analyzer;  // dark_profile is loaded from dark_profile_path
  std::string dark_profile_path;
  CavityConfig cavity;
  LedgerConfig ledger;
  CalibConfig calib;
  FitConfig fit;
  ProcessOptions process;

  // Analyzer settings with the grid applied and the dark profile loaded.
  AnalyzerSettings analyzer_settings() const;
  CalibrationInput calibration_input() const;
  CalibrationInput calibration_input(const UncertainValue& eta_tot) const;
  MonteCarloSettings monte_carlo() const;

  // Range and consistency checks; throws UsageError or DomainError.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

// Throws UsageError with the line number on malformed text, unknown or
// duplicate keys, missing physics keys, or uncertain values without bounds.
RunConfig parse_config(std::string_view text, std::string_view origin = "<config>");
RunConfig load_config(const std::string& path);
std::string serialize(const RunConfig& c);

// Built-in configuration reproducing the reference experiment.
std::string_view default_config_text();
RunConfig default_config();

// Explicit path, else $SQZCAL_CONFIG, else the built-in default.
RunConfig resolve_config(const std::optional<std::string>& path);

// "v +p -m" and back. Bounds are mandatory.
UncertainValue parse_uncertain(std::string_view text);
std::string format_uncertain(const UncertainValue& u);
std::string format_double(double v);

// Two-column CSV (frequency_hz, clearance_db), header optional.
std::vector<std::pair<double, double>> load_dark_profile(const std::string& path);

}  // namespace sqzcal
