#pragma once

// Spectrum-analyzer trace processing: dark-noise subtraction, vacuum
// normalization, dark-noise clearance and grid alignment.
//
// Traces store powers in dB (dBm as recorded, dB relative to vacuum once
// normalized). Every arithmetic step works on linear power.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sqzcal/error.hpp"

namespace sqzcal {

enum class TraceKind { Dark, Vacuum, Squeezed, Antisqueezed };

std::string_view to_string(TraceKind k);
TraceKind trace_kind_from_string(std::string_view s);

struct AnalyzerState {
  double rbw_hz = 0.0;
  double vbw_hz = 0.0;
  double sweep_time_s = 0.0;

  bool known() const { return rbw_hz > 0.0 && vbw_hz > 0.0 && sweep_time_s > 0.0; }
  bool operator==(const AnalyzerState&) const = default;
};

// Number of independent RBW-limited power samples averaged into one displayed
// bin: the detector output decorrelates after 1/RBW and is integrated over
// the longer of the per-point dwell time and the video-filter time 1/VBW.
std::size_t effective_averages(const AnalyzerState& a, std::size_t points);

struct Trace {
  std::string id;
  TraceKind kind = TraceKind::Vacuum;
  std::vector<double> frequency_hz;
  std::vector<double> power_db;
  AnalyzerState analyzer;
  int pump_index = -1;  // squeezed/antisqueezed traces only
  std::optional<double> pump_ratio;
  std::optional<double> pump_power_w;

  bool dark_subtracted = false;
  bool normalized = false;
  bool interpolated = false;
  bool degenerate = false;  // every bin hit the floor during subtraction
  std::string reference_id;  // vacuum trace used for normalization
  std::size_t floored_bins = 0;

  // Per-bin variance of the power estimate relative to its square. Empty
  // means "derive from the analyzer settings".
  std::vector<double> relative_variance;

  std::size_t size() const { return frequency_hz.size(); }
  // Throws DataError unless frequencies are strictly ascending and match powers.
  void validate() const;
  std::vector<double> linear_power() const;
};

// Per-bin relative variance: stored values, else 1/N_eff from the analyzer,
// else empty.
std::vector<double> relative_variance(const Trace& t);

// Per-bin one-sigma scatter in dB (delta method); empty when unknown.
std::vector<double> sigma_db(const Trace& t);

bool same_grid(const Trace& a, const Trace& b);

inline constexpr double kDefaultFloor = 1e-12;

// Pointwise linear subtraction t - dark. Bins that come out non-positive are
// set to floor_rel times the input power and counted in floored_bins.
Trace subtract_dark(const Trace& t, const Trace& dark, double floor_rel = kDefaultFloor,
                    Warnings* warnings = nullptr);

// Pointwise ratio t / vacuum, in dB. Both inputs must share the same
// dark-subtraction state.
Trace normalize_to_vacuum(const Trace& t, const Trace& vacuum);

struct ClearanceSummary {
  std::vector<double> frequency_hz;
  std::vector<double> clearance_db;
  double min_db = 0.0;
  double max_db = 0.0;
};

// Vacuum-to-dark power ratio in dB.
ClearanceSummary clearance(const Trace& vacuum, const Trace& dark);

struct PumpTraces {
  int index = 0;
  std::optional<double> pump_ratio;
  std::optional<Trace> squeezed;
  std::optional<Trace> antisqueezed;
};

struct Dataset {
  Trace dark;
  Trace vacuum;
  std::vector<PumpTraces> pumps;  // ordered by index
  bool interpolated = false;

  std::vector<const Trace*> traces() const;
  std::size_t trace_count() const { return traces().size(); }
};

// Restricts every trace to the common frequency range and linearly
// interpolates (in linear power) onto the first trace's grid. Requires
// exactly one dark and one vacuum trace and unique (kind, pump) pairs.
Dataset align(std::vector<Trace> traces);

struct BandSummary {
  double min_db = 0.0;
  double min_frequency_hz = 0.0;
  double band_mean_db = 0.0;  // mean of linear power inside the band, in dB
  double max_db = 0.0;
};

// Band edges are inclusive; an empty band falls back to the whole trace.
BandSummary summarize(const Trace& t, double band_start_hz, double band_stop_hz);

struct ProcessOptions {
  double floor_rel = kDefaultFloor;
  double band_start_hz = 3e6;
  double band_stop_hz = 5e6;
  bool subtract = true;

  bool operator==(const ProcessOptions&) const = default;
};

struct ProcessResult {
  Dataset dataset;  // dark echoed raw; vacuum and pump traces normalized
  ClearanceSummary clearance;
  std::size_t floored_bins = 0;
  Warnings warnings;
};

// subtract_dark on every trace, then normalize_to_vacuum.
ProcessResult process(const Dataset& raw, const ProcessOptions& options = {});

}  // namespace sqzcal
