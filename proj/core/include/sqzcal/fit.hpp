#pragma once

// Joint weighted least-squares fit of the phase-noise-mixed OPA spectrum to
// processed (dark-subtracted, vacuum-normalized) squeezing and antisqueezing
// traces.
//
// Parameter vector layout: [eta_tot, theta_pn (rad), linewidth (Hz, FWHM =
// gamma / 2 pi), x_0, x_1, ...]. Efficiency, phase noise and linewidth are
// shared by every pump setting; each pump setting has its own x_k.

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sqzcal/error.hpp"
#include "sqzcal/model.hpp"
#include "sqzcal/traces.hpp"

namespace sqzcal {

enum class Quadrature { Antisqueezed, Squeezed };
enum class ResidualSpace { Decibel, Linear };
enum class WeightMode { Uniform, ChiSquared };

std::string_view to_string(ResidualSpace s);
std::string_view to_string(WeightMode w);
ResidualSpace residual_space_from_string(std::string_view s);
WeightMode weight_mode_from_string(std::string_view s);

inline constexpr std::size_t kSharedParameters = 3;
inline constexpr double kMaxPumpRatio = 1.0 - 1e-6;

struct FitParams {
  double eta_tot = 0.9;
  double theta_pn = 5e-3;
  double linewidth_hz = 70e6;
  std::vector<double> pump_ratios;

  std::size_t size() const { return kSharedParameters + pump_ratios.size(); }
  Eigen::VectorXd pack() const;
  static FitParams unpack(const Eigen::VectorXd& v);
  ModelParams model() const { return ModelParams::from_linewidth(eta_tot, theta_pn, linewidth_hz); }

  // Documented fallback start point.
  static FitParams defaults(std::size_t pumps);
};

// "eta_tot", "theta_pn", "linewidth_hz", "x_0", "x_1", ...
std::string parameter_name(std::size_t index);
// Inverse of parameter_name; also accepts "eta", "gamma_hz" and "x0" spellings.
std::optional<std::size_t> parameter_index(std::string_view name, std::size_t pumps);

struct FitTrace {
  std::string id;
  Quadrature quadrature = Quadrature::Squeezed;
  std::size_t pump = 0;
  std::vector<double> frequency_hz;
  std::vector<double> value_db;
  std::vector<double> sigma;  // per bin, in residual-space units
};

struct FitOptions {
  double tol_g = 1e-10;
  double tol_x = 1e-12;
  int max_iterations = 500;
  ResidualSpace residual_space = ResidualSpace::Decibel;
  WeightMode weights = WeightMode::Uniform;
  std::vector<std::pair<std::string, double>> fixed;
  // Eigenvalues of the correlation-scaled normal matrix below rank_tol
  // (relative to the largest) are unidentifiable; below weak_tol, weak.
  double rank_tol = 1e-12;
  double weak_tol = 1e-4;
  // Parameter pairs whose fitted correlation exceeds this are reported.
  double correlation_tol = 0.995;

  bool operator==(const FitOptions&) const = default;
};

struct FitProblem {
  std::vector<FitTrace> traces;
  std::size_t pump_count = 0;
  FitParams lower;
  FitParams upper;
  std::vector<bool> free;
  std::vector<std::pair<std::size_t, double>> fixed;
  ResidualSpace residual_space = ResidualSpace::Decibel;
  // True when sigma is an absolute noise estimate, so chi-squared and the
  // covariance need no rescaling by the residual variance.
  bool sigma_absolute = false;
  Warnings warnings;

  // Builds the problem from a processed dataset. Throws DataError when the
  // dataset carries no squeezed or antisqueezed trace or is not normalized.
  static FitProblem from_dataset(const Dataset& processed, const FitOptions& options = {});

  std::size_t parameter_count() const { return kSharedParameters + pump_count; }
  std::size_t data_count() const;
  std::size_t free_count() const;
  void validate() const;
};

// Default box: eta in [0,1], theta in [0, pi/4], linewidth in [1 kHz, 1 THz],
// x in [0, 1 - 1e-6].
void set_default_bounds(FitProblem& problem);

// Model value of one bin in dB relative to vacuum.
double model_db(const FitParams& p, Quadrature q, std::size_t pump, double frequency_hz);

// Weighted residuals (data - model) / sigma over all traces in order.
Eigen::VectorXd residuals(const FitProblem& problem, const FitParams& p);

// Analytic derivative of the residual vector with respect to every
// parameter (fixed ones included).
Eigen::MatrixXd jacobian(const FitProblem& problem, const FitParams& p);

// Closed-form start point from the data; see fit.cpp for the heuristic.
// Degenerate data falls back to FitParams::defaults with a warning.
FitParams initial_guess(const FitProblem& problem, Warnings* warnings = nullptr);
FitParams initial_guess(const Dataset& processed, Warnings* warnings = nullptr);

struct TraceResidual {
  std::string id;
  Quadrature quadrature = Quadrature::Squeezed;
  std::size_t pump = 0;
  std::vector<double> frequency_hz;
  std::vector<double> residual_db;  // data - model, unweighted
  double rms_db = 0.0;
};

struct FitResult {
  FitParams estimate;
  Eigen::MatrixXd covariance;  // full parameter layout, zero rows for fixed
  std::vector<bool> free;
  double cost = 0.0;           // 0.5 * sum of squared weighted residuals
  double residual_norm = 0.0;  // sqrt(2 cost)
  std::vector<TraceResidual> traces;
  int iterations = 0;
  std::string termination;
  bool converged = false;
  std::size_t data_count = 0;
  std::size_t free_count = 0;
  bool sigma_absolute = false;
  bool rank_deficient = false;
  std::vector<std::string> weak_directions;
  std::vector<double> cost_history;  // accepted iterates
  Warnings warnings;

  double stddev(std::size_t index) const;
};

// Damped Gauss-Newton (Levenberg-Marquardt) with projection onto the box.
// Stops when the scaled gradient falls below tol_g, the scaled step below
// tol_x, or after max_iterations (reported as not converged).
FitResult fit_model(const FitProblem& problem, const FitParams& init, const FitOptions& options = {});

// Independent single-pump fits, one per pump setting.
std::vector<FitResult> fit_per_curve(const Dataset& processed, const FitOptions& options = {});

struct GoodnessReport {
  double chi_squared = 0.0;
  double reduced_chi_squared = 0.0;
  std::size_t degrees_of_freedom = 0;
  std::vector<std::pair<std::string, double>> trace_rms_db;
  double overall_rms_db = 0.0;
};

GoodnessReport goodness(const FitResult& fit);

}  // namespace sqzcal
