#pragma once

// Synthetic spectrum-analyzer datasets generated from known model
// parameters. These are the reference data for the processing, fitting and
// calibration pipeline.
//
// Scatter model: each displayed bin is the mean of N_eff independent
// exponentially distributed power samples, i.e. mean * Gamma(N_eff, 1/N_eff),
// with N_eff = effective_averages(rbw, vbw, sweep time, points). Dark noise
// is added in linear power to every non-dark trace before scatter is applied.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "sqzcal/model.hpp"
#include "sqzcal/traces.hpp"

namespace sqzcal {

struct GridSpec {
  double start_hz = 3e6;
  double stop_hz = 8e6;
  std::size_t points = 501;

  std::vector<double> frequencies() const { return linear_grid(start_hz, stop_hz, points); }
  bool operator==(const GridSpec&) const = default;
};

struct AnalyzerSettings {
  double rbw_hz = 300e3;
  double vbw_hz = 200.0;
  double sweep_time_s = 0.295;
  // Shot-noise-to-dark ratio used when no profile is given.
  double dark_clearance_db = 28.0;
  // Optional measured clearance profile (frequency Hz, clearance dB),
  // linearly interpolated onto the grid and held constant beyond its ends.
  std::vector<std::pair<double, double>> dark_profile;
  GridSpec grid;
  // Absolute shot-noise level at the reference LO power.
  double vacuum_level_dbm = -70.0;
  // Noiseless limit (N_eff -> infinity).
  bool zero_scatter = false;
  // Overrides the derived N_eff when non-zero.
  std::size_t n_eff_override = 0;

  AnalyzerState state() const { return {rbw_hz, vbw_hz, sweep_time_s}; }
  std::size_t effective_averages() const;
  // Dark power relative to shot noise, per grid point.
  std::vector<double> dark_relative_power() const;
  // Throws DomainError unless rbw > vbw > 0, sweep_time > 0, points >= 2.
  void validate() const;
  bool operator==(const AnalyzerSettings&) const = default;
};

// Seed stream of a trace within a dataset; independent of generation order.
std::uint64_t trace_seed(std::uint64_t dataset_seed, TraceKind kind, int pump_index);

std::string trace_id(TraceKind kind, int pump_index);

Trace synth_trace(const ModelParams& p, double pump_ratio, TraceKind kind, const AnalyzerSettings& s,
                  std::uint64_t seed);

// Dark, vacuum, and a squeezed/antisqueezed pair per pump ratio.
Dataset synth_dataset(const ModelParams& p, std::span<const double> pump_ratios,
                      const AnalyzerSettings& s, std::uint64_t seed);

double photon_flux(double power_w, double wavelength_m);

struct LinearityPoint {
  double lo_power_w = 0.0;
  double photon_flux_per_s = 0.0;
  Trace vacuum;
};

struct LinearitySet {
  Trace dark;
  std::vector<LinearityPoint> points;
};

inline constexpr double kReferenceLoPowerW = 26.5e-3;

// Vacuum traces whose shot-noise power is proportional to LO power, scaled
// so that kReferenceLoPowerW sits at s.vacuum_level_dbm. The dark level is
// fixed by the clearance at the reference power.
LinearitySet linearity_check_set(std::span<const double> lo_powers_w, const AnalyzerSettings& s,
                                 std::uint64_t seed, double wavelength_m = 1064e-9);

// Least-squares slope of dark-subtracted band-mean vacuum level versus LO
// power in log-log space. A linear detection chain gives 1.
double linearity_slope(const LinearitySet& set);

}  // namespace sqzcal
