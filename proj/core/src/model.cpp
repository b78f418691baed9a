#include "sqzcal/model.hpp"

#include <cmath>
#include <sstream>

namespace sqzcal {

namespace {

void check_pump_ratio(double x) {
  if (!(x >= 0.0) || !(x < 1.0)) {
    std::ostringstream os;
    os << "pump ratio x = " << x << " outside [0, 1): model is only valid below threshold";
    throw DomainError(os.str());
  }
}

}  // namespace

void CavityParams::validate() const {
  const double t = coupler_transmission;
  const double l = round_trip_loss;
  if (!(t > 0.0 && t < 1.0)) throw DomainError("cavity: coupler transmission must lie in (0, 1)");
  if (!(l >= 0.0 && l < 1.0)) throw DomainError("cavity: round-trip loss must lie in [0, 1)");
  if (!(t + l < 1.0)) throw DomainError("cavity: T + L must be below 1");
  if (!(round_trip_length_m > 0.0)) throw DomainError("cavity: round-trip length must be positive");
}

ModelParams ModelParams::from_linewidth(double eta_tot, double theta_pn, double linewidth_hz) {
  return ModelParams{eta_tot, theta_pn, 2.0 * kPi * linewidth_hz};
}

double ModelParams::linewidth_hz() const { return gamma / (2.0 * kPi); }

void ModelParams::validate() const {
  if (!(eta_tot >= 0.0 && eta_tot <= 1.0)) {
    throw DomainError("eta_tot = " + std::to_string(eta_tot) + " outside [0, 1]");
  }
  if (!(theta_pn >= 0.0)) throw DomainError("theta_pn must be non-negative");
  if (!(gamma > 0.0)) throw DomainError("decay rate gamma must be positive");
}

QuadraturePair quad_variances(const ModelParams& p, double pump_ratio, double frequency_hz) {
  p.validate();
  check_pump_ratio(pump_ratio);
  if (!(frequency_hz >= 0.0)) throw DomainError("sideband frequency must be non-negative");

  const double s = std::sqrt(pump_ratio);
  const double w = 2.0 * kPi * frequency_hz / p.gamma;
  const double detune = 4.0 * w * w;
  const double gain = 4.0 * s;
  const double lo = (1.0 - s) * (1.0 - s) + detune;
  const double hi = (1.0 + s) * (1.0 + s) + detune;
  return QuadraturePair{1.0 + p.eta_tot * gain / lo, 1.0 - p.eta_tot * gain / hi};
}

QuadraturePair apply_phase_noise(QuadraturePair q, double theta_pn, Warnings* warnings) {
  if (!(theta_pn >= 0.0)) throw DomainError("theta_pn must be non-negative");
  if (theta_pn > kPhaseNoiseValidityRad) {
    warn(warnings, "phase noise " + std::to_string(theta_pn) +
                       " rad exceeds the small-angle regime of the mixing model");
  }
  // Written as V + (V' - V) sin^2 so equal inputs pass through exactly.
  const double s = std::sin(theta_pn);
  const double s2 = s * s;
  const double d = q.v_minus - q.v_plus;
  return QuadraturePair{q.v_plus + d * s2, q.v_minus - d * s2};
}

double decay_rate(const CavityParams& c, Warnings* warnings) {
  if (!(c.round_trip_length_m > 0.0)) throw DomainError("cavity: round-trip length must be positive");
  if (!(c.coupler_transmission >= 0.0) || !(c.round_trip_loss >= 0.0)) {
    throw DomainError("cavity: transmission and loss must be non-negative");
  }
  const double total = c.coupler_transmission + c.round_trip_loss;
  if (total == 0.0) warn(warnings, "cavity: T = L = 0 gives a degenerate zero decay rate");
  return kSpeedOfLight * total / c.round_trip_length_m;
}

double linewidth_from_finesse(double fsr_hz, double finesse) {
  if (!(fsr_hz > 0.0)) throw DomainError("free spectral range must be positive");
  if (!(finesse > 0.0)) throw DomainError("finesse must be positive");
  return fsr_hz / finesse;
}

double escape_efficiency(const CavityParams& c) {
  c.validate();
  return c.coupler_transmission / (c.coupler_transmission + c.round_trip_loss);
}

double db_from_linear(double v) {
  if (!(v > 0.0)) {
    throw DomainError("cannot express non-positive ratio " + std::to_string(v) + " in dB");
  }
  return 10.0 * std::log10(v);
}

double linear_from_db(double db) { return std::pow(10.0, db / 10.0); }

ModelCurves model_spectrum(const ModelParams& p, double pump_ratio, std::span<const double> grid_hz) {
  if (grid_hz.empty()) throw DomainError("model_spectrum: empty frequency grid");
  for (std::size_t i = 1; i < grid_hz.size(); ++i) {
    if (!(grid_hz[i] > grid_hz[i - 1])) {
      throw DomainError("model_spectrum: frequency grid must be strictly ascending");
    }
  }
  ModelCurves out;
  out.frequency_hz.assign(grid_hz.begin(), grid_hz.end());
  out.v_plus_db.reserve(grid_hz.size());
  out.v_minus_db.reserve(grid_hz.size());
  for (double f : grid_hz) {
    const QuadraturePair q = apply_phase_noise(quad_variances(p, pump_ratio, f), p.theta_pn);
    out.v_plus_db.push_back(db_from_linear(q.v_plus));
    out.v_minus_db.push_back(db_from_linear(q.v_minus));
  }
  return out;
}

std::vector<double> linear_grid(double start_hz, double stop_hz, std::size_t points) {
  if (points < 2) throw DomainError("frequency grid needs at least two points");
  if (!(stop_hz > start_hz)) throw DomainError("frequency grid stop must exceed start");
  std::vector<double> grid(points);
  const double step = (stop_hz - start_hz) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) grid[i] = start_hz + step * static_cast<double>(i);
  grid.back() = stop_hz;
  return grid;
}

}  // namespace sqzcal
