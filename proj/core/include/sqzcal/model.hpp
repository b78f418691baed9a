#pragma once

// Output spectrum of a degenerate optical parametric amplifier operated
// below threshold, as seen by a balanced homodyne detector.
//
// All variances are dimensionless and normalized so that vacuum noise is 1.
// Decibel values are always relative to vacuum. The cavity decay rate gamma
// is carried in rad/s; public interfaces that talk in Hz use the FWHM
// linewidth gamma / (2 pi).

#include <span>
#include <vector>

#include "sqzcal/error.hpp"

namespace sqzcal {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s
inline constexpr double kPlanck = 6.62607015e-34;     // J s
inline constexpr double kPi = 3.14159265358979323846;

// Phase-noise mixing is a small-angle model; beyond this it is flagged.
inline constexpr double kPhaseNoiseValidityRad = 0.1;

struct CavityParams {
  double coupler_transmission = 0.0;  // T, power fraction
  double round_trip_loss = 0.0;       // L, power fraction
  double round_trip_length_m = 0.0;   // l
  double pump_wavelength_m = 532e-9;
  double fundamental_wavelength_m = 1064e-9;

  // Throws DomainError unless 0 < T < 1, 0 <= L < 1, T + L < 1, l > 0.
  void validate() const;
};

struct ModelParams {
  double eta_tot = 1.0;   // total detection efficiency
  double theta_pn = 0.0;  // rms phase noise, rad
  double gamma = 0.0;     // cavity decay rate, rad/s

  static ModelParams from_linewidth(double eta_tot, double theta_pn, double linewidth_hz);
  double linewidth_hz() const;
  void validate() const;
};

struct QuadraturePair {
  double v_plus = 1.0;   // antisqueezed
  double v_minus = 1.0;  // squeezed
};

// Antisqueezed/squeezed variances for pump ratio x = P/P_thr at sideband
// frequency f, without phase noise:
//   V(+/-) = 1 +/- eta * 4 sqrt(x) / ((1 -/+ sqrt(x))^2 + 4 (2 pi f / gamma)^2)
QuadraturePair quad_variances(const ModelParams& p, double pump_ratio, double frequency_hz);

// Rotates the measured quadrature by the rms phase jitter:
//   V(+/-) = V(+/-) cos^2 + V(-/+) sin^2.
// Apply exactly once per model evaluation. Angles above
// kPhaseNoiseValidityRad are accepted but reported to `warnings`.
QuadraturePair apply_phase_noise(QuadraturePair q, double theta_pn, Warnings* warnings = nullptr);

// gamma = c (T + L) / l in rad/s. T = L = 0 returns 0 and warns.
double decay_rate(const CavityParams& c, Warnings* warnings = nullptr);

double linewidth_from_finesse(double fsr_hz, double finesse);

double escape_efficiency(const CavityParams& c);

double db_from_linear(double v);
double linear_from_db(double db);

struct ModelCurves {
  std::vector<double> frequency_hz;
  std::vector<double> v_plus_db;
  std::vector<double> v_minus_db;
};

// quad_variances followed by apply_phase_noise over a strictly ascending grid.
ModelCurves model_spectrum(const ModelParams& p, double pump_ratio, std::span<const double> grid_hz);

// Linearly spaced grid including both end points.
std::vector<double> linear_grid(double start_hz, double stop_hz, std::size_t points);

}  // namespace sqzcal
