#include "sqzcal/fit.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

namespace sqzcal {

namespace {

constexpr double kDbPerNeper = 10.0 / 2.302585092994045684;

struct BinEval {
  double value = 0.0;             // residual-space model value
  std::array<double, 4> grad{};   // d value / d (eta, theta, linewidth, x)
};

BinEval eval_bin(const FitParams& p, Quadrature q, std::size_t pump, double f, ResidualSpace space,
                 bool with_grad) {
  const double eta = p.eta_tot;
  const double theta = p.theta_pn;
  const double lw = p.linewidth_hz;
  const double x = p.pump_ratios[pump];
  const double s = std::sqrt(std::max(x, 0.0));

  const double u = (f / lw) * (f / lw);
  const double d_lo = (1.0 - s) * (1.0 - s) + 4.0 * u;
  const double d_hi = (1.0 + s) * (1.0 + s) + 4.0 * u;
  const double g_anti = 4.0 * s / d_lo;
  const double g_sqz = 4.0 * s / d_hi;
  const double anti = 1.0 + eta * g_anti;
  const double sqz = 1.0 - eta * g_sqz;

  const double c = std::cos(theta);
  const double sn = std::sin(theta);
  const double c2 = c * c;
  const double s2 = sn * sn;
  const double sin2 = 2.0 * sn * c;

  // V = w_anti * anti + w_sqz * sqz
  const bool is_anti = q == Quadrature::Antisqueezed;
  const double w_anti = is_anti ? c2 : s2;
  const double w_sqz = is_anti ? s2 : c2;
  double v = is_anti ? anti + (sqz - anti) * s2 : sqz + (anti - sqz) * s2;
  v = std::max(v, std::numeric_limits<double>::min());

  BinEval out;
  out.value = space == ResidualSpace::Decibel ? kDbPerNeper * std::log(v) : v;
  if (!with_grad) return out;

  const double dv_deta = w_anti * g_anti - w_sqz * g_sqz;
  const double dv_dtheta = (is_anti ? (sqz - anti) : (anti - sqz)) * sin2;

  const double dga_ds = 4.0 / d_lo + 8.0 * s * (1.0 - s) / (d_lo * d_lo);
  const double dgs_ds = 4.0 / d_hi - 8.0 * s * (1.0 + s) / (d_hi * d_hi);
  const double ds_dx = s > 0.0 ? 0.5 / s : 0.5 / std::sqrt(std::numeric_limits<double>::min());
  const double dv_dx = eta * (w_anti * dga_ds - w_sqz * dgs_ds) * ds_dx;

  const double du_dlw = -2.0 * f * f / (lw * lw * lw);
  const double dga_du = -16.0 * s / (d_lo * d_lo);
  const double dgs_du = -16.0 * s / (d_hi * d_hi);
  const double dv_dlw = eta * (w_anti * dga_du - w_sqz * dgs_du) * du_dlw;

  const double chain = space == ResidualSpace::Decibel ? kDbPerNeper / v : 1.0;
  out.grad = {dv_deta * chain, dv_dtheta * chain, dv_dlw * chain, dv_dx * chain};
  return out;
}

double data_value(double db, ResidualSpace space) {
  return space == ResidualSpace::Decibel ? db : linear_from_db(db);
}

Eigen::VectorXd clamp_to(const Eigen::VectorXd& v, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  return v.cwiseMax(lo).cwiseMin(hi);
}

struct Regression {
  double intercept = 0.0;
  double slope = 0.0;
  bool ok = false;
};

// Ordinary least squares y = a + b t.
Regression regress(const std::vector<double>& t, const std::vector<double>& y) {
  Regression r;
  if (t.size() < 2) return r;
  const double n = static_cast<double>(t.size());
  double mt = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    mt += t[i];
    my += y[i];
  }
  mt /= n;
  my /= n;
  double stt = 0.0;
  double sty = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    stt += (t[i] - mt) * (t[i] - mt);
    sty += (t[i] - mt) * (y[i] - my);
  }
  if (stt <= 0.0) return r;
  r.slope = sty / stt;
  r.intercept = my - r.slope * mt;
  r.ok = std::isfinite(r.slope) && std::isfinite(r.intercept);
  return r;
}

// Fits 1 / |V - 1| against f^2. For either quadrature without phase noise
// this is exactly linear: intercept (1 -/+ s)^2 / (4 eta s), slope
// 1 / (eta s linewidth^2).
Regression reciprocal_excess(const FitTrace& t) {
  std::vector<double> f2;
  std::vector<double> y;
  for (std::size_t i = 0; i < t.frequency_hz.size(); ++i) {
    const double excess = std::abs(linear_from_db(t.value_db[i]) - 1.0);
    if (excess < 1e-3) continue;
    f2.push_back(t.frequency_hz[i] * t.frequency_hz[i]);
    y.push_back(1.0 / excess);
  }
  return regress(f2, y);
}

std::string describe_direction(const Eigen::VectorXd& v, const std::vector<std::size_t>& idx) {
  std::ostringstream os;
  os.setf(std::ios::showpos);
  os.precision(3);
  bool first = true;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) < 0.1) continue;
    if (!first) os << " ";
    os << v[i] << "*" << parameter_name(idx[static_cast<std::size_t>(i)]);
    first = false;
  }
  return os.str();
}

}  // namespace

std::string_view to_string(ResidualSpace s) {
  return s == ResidualSpace::Decibel ? "db" : "linear";
}

std::string_view to_string(WeightMode w) { return w == WeightMode::Uniform ? "uniform" : "chisq"; }

ResidualSpace residual_space_from_string(std::string_view s) {
  if (s == "db") return ResidualSpace::Decibel;
  if (s == "linear") return ResidualSpace::Linear;
  throw UsageError("unknown residual space '" + std::string(s) + "' (db | linear)");
}

WeightMode weight_mode_from_string(std::string_view s) {
  if (s == "uniform") return WeightMode::Uniform;
  if (s == "chisq") return WeightMode::ChiSquared;
  throw UsageError("unknown weight mode '" + std::string(s) + "' (uniform | chisq)");
}

Eigen::VectorXd FitParams::pack() const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(size()));
  v[0] = eta_tot;
  v[1] = theta_pn;
  v[2] = linewidth_hz;
  for (std::size_t k = 0; k < pump_ratios.size(); ++k) {
    v[static_cast<Eigen::Index>(kSharedParameters + k)] = pump_ratios[k];
  }
  return v;
}

FitParams FitParams::unpack(const Eigen::VectorXd& v) {
  if (v.size() < static_cast<Eigen::Index>(kSharedParameters)) {
    throw DomainError("parameter vector too short");
  }
  FitParams p;
  p.eta_tot = v[0];
  p.theta_pn = v[1];
  p.linewidth_hz = v[2];
  p.pump_ratios.assign(v.data() + kSharedParameters, v.data() + v.size());
  return p;
}

FitParams FitParams::defaults(std::size_t pumps) {
  FitParams p;
  p.eta_tot = 0.9;
  p.theta_pn = 5e-3;
  p.linewidth_hz = 70e6;
  p.pump_ratios.assign(pumps, 0.5);
  return p;
}

std::string parameter_name(std::size_t index) {
  switch (index) {
    case 0: return "eta_tot";
    case 1: return "theta_pn";
    case 2: return "linewidth_hz";
    default: return "x_" + std::to_string(index - kSharedParameters);
  }
}

std::optional<std::size_t> parameter_index(std::string_view name, std::size_t pumps) {
  if (name == "eta_tot" || name == "eta") return 0;
  if (name == "theta_pn") return 1;
  if (name == "linewidth_hz" || name == "gamma_hz") return 2;
  if (name.size() >= 2 && name[0] == 'x') {
    std::string_view digits = name.substr(name[1] == '_' ? 2 : 1);
    std::size_t k = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), k);
    if (ec == std::errc() && ptr == digits.data() + digits.size() && !digits.empty() && k < pumps) {
      return kSharedParameters + k;
    }
  }
  return std::nullopt;
}

void set_default_bounds(FitProblem& problem) {
  problem.lower = FitParams{0.0, 0.0, 1e3, std::vector<double>(problem.pump_count, 0.0)};
  problem.upper =
      FitParams{1.0, kPi / 4.0, 1e12, std::vector<double>(problem.pump_count, kMaxPumpRatio)};
}

FitProblem FitProblem::from_dataset(const Dataset& processed, const FitOptions& options) {
  FitProblem prob;
  prob.residual_space = options.residual_space;

  bool all_absolute = true;
  std::size_t pump_slot = 0;
  for (const PumpTraces& p : processed.pumps) {
    if (!p.squeezed && !p.antisqueezed) continue;
    for (const std::optional<Trace>* slot : {&p.antisqueezed, &p.squeezed}) {
      if (!*slot) continue;
      const Trace& t = **slot;
      if (!t.normalized) {
        throw DataError("fit: trace '" + t.id + "' is not normalized to vacuum");
      }
      FitTrace ft;
      ft.id = t.id;
      ft.quadrature = t.kind == TraceKind::Antisqueezed ? Quadrature::Antisqueezed : Quadrature::Squeezed;
      ft.pump = pump_slot;
      ft.frequency_hz = t.frequency_hz;
      ft.value_db = t.power_db;

      const std::size_t n = t.size();
      const bool analyzer_known = t.analyzer.known();
      const double nominal_db =
          analyzer_known
              ? kDbPerNeper *
                    std::sqrt(2.0 / static_cast<double>(effective_averages(t.analyzer, n)))
              : 1.0;
      std::vector<double> per_bin = options.weights == WeightMode::ChiSquared ? sigma_db(t)
                                                                              : std::vector<double>{};
      const bool per_bin_ok =
          !per_bin.empty() &&
          std::all_of(per_bin.begin(), per_bin.end(), [](double s) { return s > 0.0; });
      if (options.weights == WeightMode::ChiSquared && !per_bin_ok) {
        prob.warnings.push_back("trace '" + t.id +
                                "' has no usable per-bin variance; using uniform weights");
      }
      if (!per_bin_ok && !analyzer_known) all_absolute = false;

      ft.sigma.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double s_db = per_bin_ok ? per_bin[i] : nominal_db;
        if (options.residual_space == ResidualSpace::Decibel) {
          ft.sigma[i] = s_db;
        } else if (per_bin_ok) {
          ft.sigma[i] = linear_from_db(t.power_db[i]) * s_db / kDbPerNeper;
        } else {
          ft.sigma[i] = 1.0;
          all_absolute = false;
        }
      }
      prob.traces.push_back(std::move(ft));
    }
    ++pump_slot;
  }
  if (prob.traces.empty()) {
    throw DataError("fit: dataset has no squeezed or antisqueezed traces");
  }
  prob.pump_count = pump_slot;
  prob.sigma_absolute = all_absolute;
  set_default_bounds(prob);
  prob.free.assign(prob.parameter_count(), true);
  for (const auto& [name, value] : options.fixed) {
    const auto idx = parameter_index(name, prob.pump_count);
    if (!idx) throw UsageError("fit: cannot fix unknown parameter '" + name + "'");
    prob.free[*idx] = false;
    prob.fixed.emplace_back(*idx, value);
  }
  return prob;
}

std::size_t FitProblem::data_count() const {
  std::size_t n = 0;
  for (const FitTrace& t : traces) n += t.frequency_hz.size();
  return n;
}

std::size_t FitProblem::free_count() const {
  return static_cast<std::size_t>(std::count(free.begin(), free.end(), true));
}

void FitProblem::validate() const {
  if (traces.empty()) throw DataError("fit problem has no traces");
  if (free.size() != parameter_count() || lower.size() != parameter_count() ||
      upper.size() != parameter_count()) {
    throw DomainError("fit problem: parameter layout mismatch");
  }
  for (const FitTrace& t : traces) {
    if (t.pump >= pump_count) throw DomainError("fit problem: trace '" + t.id + "' pump out of range");
    if (t.value_db.size() != t.frequency_hz.size() || t.sigma.size() != t.frequency_hz.size()) {
      throw DataError("fit problem: trace '" + t.id + "' column lengths differ");
    }
    for (double s : t.sigma) {
      if (!(s > 0.0)) throw DataError("fit problem: trace '" + t.id + "' has non-positive sigma");
    }
  }
  if (data_count() < free_count()) {
    throw DataError("fit problem: fewer data points than free parameters");
  }
}

double model_db(const FitParams& p, Quadrature q, std::size_t pump, double frequency_hz) {
  return eval_bin(p, q, pump, frequency_hz, ResidualSpace::Decibel, false).value;
}

Eigen::VectorXd residuals(const FitProblem& problem, const FitParams& p) {
  Eigen::VectorXd r(static_cast<Eigen::Index>(problem.data_count()));
  Eigen::Index row = 0;
  for (const FitTrace& t : problem.traces) {
    for (std::size_t i = 0; i < t.frequency_hz.size(); ++i) {
      const BinEval e = eval_bin(p, t.quadrature, t.pump, t.frequency_hz[i], problem.residual_space, false);
      r[row++] = (data_value(t.value_db[i], problem.residual_space) - e.value) / t.sigma[i];
    }
  }
  return r;
}

Eigen::MatrixXd jacobian(const FitProblem& problem, const FitParams& p) {
  const auto m = static_cast<Eigen::Index>(problem.data_count());
  const auto n = static_cast<Eigen::Index>(problem.parameter_count());
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(m, n);
  Eigen::Index row = 0;
  for (const FitTrace& t : problem.traces) {
    const auto x_col = static_cast<Eigen::Index>(kSharedParameters + t.pump);
    for (std::size_t i = 0; i < t.frequency_hz.size(); ++i) {
      const BinEval e = eval_bin(p, t.quadrature, t.pump, t.frequency_hz[i], problem.residual_space, true);
      const double w = -1.0 / t.sigma[i];
      j(row, 0) = w * e.grad[0];
      j(row, 1) = w * e.grad[1];
      j(row, 2) = w * e.grad[2];
      j(row, x_col) = w * e.grad[3];
      ++row;
    }
  }
  return j;
}

// Heuristic start point.
//  1. Per pump, regress 1/|V - 1| on f^2 for both quadratures. Ignoring phase
//     noise, the ratio of squeezed to antisqueezed intercepts is
//     ((1 + s)/(1 - s))^2, giving s = sqrt(x) independently of eta.
//  2. eta from the antisqueezing intercept of the lowest-x pump, where phase
//     noise is negligible; linewidth from the antisqueezing slope/intercept
//     ratio of the highest-x pump, where the roll-off is strongest.
//  3. With eta fixed, each x_k is re-solved from its antisqueezing intercept.
//  4. theta_pn from the excess of the highest-x squeezing trace over the
//     phase-noise-free prediction.
FitParams initial_guess(const FitProblem& problem, Warnings* warnings) {
  const std::size_t pumps = problem.pump_count;
  FitParams guess = FitParams::defaults(pumps);
  if (pumps == 0) {
    warn(warnings, "initial guess: no squeezing data, using defaults");
    return guess;
  }

  struct PerPump {
    const FitTrace* anti = nullptr;
    const FitTrace* sqz = nullptr;
    Regression ra;
    Regression rs;
    double s = -1.0;
  };
  std::vector<PerPump> per(pumps);
  for (const FitTrace& t : problem.traces) {
    (t.quadrature == Quadrature::Antisqueezed ? per[t.pump].anti : per[t.pump].sqz) = &t;
  }
  for (PerPump& pp : per) {
    if (pp.anti) pp.ra = reciprocal_excess(*pp.anti);
    if (pp.sqz) pp.rs = reciprocal_excess(*pp.sqz);
    if (pp.ra.ok && pp.rs.ok && pp.ra.intercept > 0.0 && pp.rs.intercept > 0.0) {
      const double r = std::sqrt(pp.rs.intercept / pp.ra.intercept);
      if (r > 1.0) pp.s = (r - 1.0) / (r + 1.0);
    }
  }

  std::optional<std::size_t> low;
  std::optional<std::size_t> high;
  for (std::size_t k = 0; k < pumps; ++k) {
    if (per[k].s <= 0.0) continue;
    if (!low || per[k].s < per[*low].s) low = k;
    if (!high || per[k].s > per[*high].s) high = k;
  }

  if (!low) {
    // No pump has both quadratures: assume the default efficiency and solve
    // x from whichever trace is present.
    bool any = false;
    for (std::size_t k = 0; k < pumps; ++k) {
      const PerPump& pp = per[k];
      const double eta = guess.eta_tot;
      if (pp.ra.ok && pp.ra.intercept > 0.0) {
        const double b = 2.0 + 4.0 * eta * pp.ra.intercept;
        guess.pump_ratios[k] = std::pow(0.5 * (b - std::sqrt(b * b - 4.0)), 2);
        any = true;
      } else if (pp.rs.ok) {
        const double b = 4.0 * eta * pp.rs.intercept - 2.0;
        if (b > 2.0) {
          guess.pump_ratios[k] = std::pow(0.5 * (b - std::sqrt(b * b - 4.0)), 2);
          any = true;
          if (pp.rs.slope > 0.0) {
            guess.linewidth_hz =
                1.0 / std::sqrt(pp.rs.slope * eta * std::sqrt(guess.pump_ratios[k]));
          }
        }
      }
    }
    warn(warnings, any ? "initial guess: squeezing and antisqueezing not both available, "
                         "eta_tot and theta_pn left at defaults"
                       : "initial guess: degenerate data, using defaults");
    for (double& x : guess.pump_ratios) x = std::clamp(x, 0.0, kMaxPumpRatio);
    return guess;
  }

  {
    const PerPump& pp = per[*low];
    const double eta = (1.0 - pp.s) * (1.0 - pp.s) / (4.0 * pp.s * pp.ra.intercept);
    guess.eta_tot = std::clamp(eta, 1e-3, 1.0);
  }
  {
    const PerPump& pp = per[*high];
    const double ratio = pp.ra.slope / pp.ra.intercept;  // 4 / ((1-s)^2 lw^2)
    if (ratio > 0.0) guess.linewidth_hz = 2.0 / ((1.0 - pp.s) * std::sqrt(ratio));
  }
  for (std::size_t k = 0; k < pumps; ++k) {
    const PerPump& pp = per[k];
    double s = pp.s;
    if (pp.ra.ok && pp.ra.intercept > 0.0) {
      const double b = 2.0 + 4.0 * guess.eta_tot * pp.ra.intercept;
      s = 0.5 * (b - std::sqrt(b * b - 4.0));
    }
    if (s > 0.0) guess.pump_ratios[k] = std::clamp(s * s, 0.0, kMaxPumpRatio);
  }
  {
    const PerPump& pp = per[*high];
    FitParams no_pn = guess;
    no_pn.theta_pn = 0.0;
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pp.sqz->frequency_hz.size(); ++i) {
      const double f = pp.sqz->frequency_hz[i];
      const double vm = linear_from_db(model_db(no_pn, Quadrature::Squeezed, *high, f));
      const double vp = linear_from_db(model_db(no_pn, Quadrature::Antisqueezed, *high, f));
      const double meas = linear_from_db(pp.sqz->value_db[i]);
      if (vp - vm <= 0.0) continue;
      acc += (meas - vm) / (vp - vm);
      ++n;
    }
    const double s2 = n > 0 ? acc / static_cast<double>(n) : 0.0;
    // theta = 0 is a stationary point of the model, so never start there.
    guess.theta_pn = std::clamp(std::asin(std::sqrt(std::clamp(s2, 0.0, 0.5))), 5e-4, kPi / 4.0);
  }
  if (!std::isfinite(guess.linewidth_hz) || guess.linewidth_hz <= 0.0) {
    guess.linewidth_hz = FitParams::defaults(0).linewidth_hz;
    warn(warnings, "initial guess: linewidth not identifiable from roll-off, using default");
  }
  return guess;
}

FitParams initial_guess(const Dataset& processed, Warnings* warnings) {
  bool any = false;
  for (const PumpTraces& p : processed.pumps) any = any || p.squeezed || p.antisqueezed;
  if (!any) {
    warn(warnings, "initial guess: dataset holds no squeezing data, using defaults");
    return FitParams::defaults(0);
  }
  return initial_guess(FitProblem::from_dataset(processed), warnings);
}

double FitResult::stddev(std::size_t index) const {
  const auto i = static_cast<Eigen::Index>(index);
  if (i >= covariance.rows()) return 0.0;
  return std::sqrt(std::max(covariance(i, i), 0.0));
}

FitResult fit_model(const FitProblem& problem, const FitParams& init, const FitOptions& options) {
  problem.validate();
  if (init.size() != problem.parameter_count()) {
    throw DomainError("fit: initial guess has the wrong number of parameters");
  }
  const Eigen::VectorXd lo = problem.lower.pack();
  const Eigen::VectorXd hi = problem.upper.pack();
  Eigen::VectorXd full = init.pack();
  for (const auto& [idx, value] : problem.fixed) full[static_cast<Eigen::Index>(idx)] = value;
  full = clamp_to(full, lo, hi);

  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < problem.free.size(); ++i) {
    if (problem.free[i]) idx.push_back(i);
  }
  const auto nf = static_cast<Eigen::Index>(idx.size());

  auto free_jacobian = [&](const Eigen::VectorXd& v) {
    const Eigen::MatrixXd j = jacobian(problem, FitParams::unpack(v));
    Eigen::MatrixXd jf(j.rows(), nf);
    for (Eigen::Index c = 0; c < nf; ++c) jf.col(c) = j.col(static_cast<Eigen::Index>(idx[c]));
    return jf;
  };

  // Largest cosine between a free Jacobian column and the residual, ignoring
  // parameters held at a bound by the gradient.
  auto scaled_gradient = [&](const Eigen::MatrixXd& j, const Eigen::VectorXd& g, const Eigen::VectorXd& v,
                             double rnorm) {
    double gmax = 0.0;
    for (Eigen::Index c = 0; c < nf; ++c) {
      const auto k = static_cast<Eigen::Index>(idx[c]);
      const bool blocked = (v[k] <= lo[k] && g[c] > 0.0) || (v[k] >= hi[k] && g[c] < 0.0);
      const double cn = j.col(c).norm();
      if (blocked || cn == 0.0) continue;
      gmax = std::max(gmax, std::abs(g[c]) / (cn * rnorm));
    }
    return gmax;
  };

  FitResult res;
  res.free = problem.free;
  res.data_count = problem.data_count();
  res.free_count = idx.size();
  res.sigma_absolute = problem.sigma_absolute;
  res.warnings = problem.warnings;

  Eigen::VectorXd r = residuals(problem, FitParams::unpack(full));
  double cost = 0.5 * r.squaredNorm();
  res.cost_history.push_back(cost);

  Eigen::VectorXd diag = Eigen::VectorXd::Zero(nf);
  double mu = 1e-3;
  double nu = 2.0;
  res.termination = "max_iterations";

  for (int iter = 0; iter < options.max_iterations && nf > 0; ++iter) {
    res.iterations = iter + 1;
    const Eigen::MatrixXd j = free_jacobian(full);
    const Eigen::VectorXd g = j.transpose() * r;
    const Eigen::MatrixXd h = j.transpose() * j;
    const double rnorm = r.norm();

    for (Eigen::Index c = 0; c < nf; ++c) {
      const double cn = j.col(c).norm();
      diag[c] = std::max(diag[c], cn > 0.0 ? cn : 1.0);
    }

    if (rnorm == 0.0) {
      res.termination = "zero_residual";
      res.converged = true;
      break;
    }
    if (scaled_gradient(j, g, full, rnorm) <= options.tol_g) {
      res.termination = "gradient";
      res.converged = true;
      break;
    }

    bool accepted = false;
    bool step_small = false;
    while (!accepted) {
      Eigen::MatrixXd a = h;
      for (Eigen::Index c = 0; c < nf; ++c) a(c, c) += mu * diag[c] * diag[c];
      Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
      Eigen::VectorXd delta = Eigen::VectorXd::Zero(nf);
      if (ldlt.info() == Eigen::Success) delta = ldlt.solve(-g);
      if (ldlt.info() != Eigen::Success || !delta.allFinite()) {
        mu *= nu;
        nu *= 2.0;
        if (mu > 1e30) break;
        continue;
      }

      Eigen::VectorXd trial = full;
      for (Eigen::Index c = 0; c < nf; ++c) trial[static_cast<Eigen::Index>(idx[c])] += delta[c];
      trial = clamp_to(trial, lo, hi);
      Eigen::VectorXd step(nf);
      Eigen::VectorXd scaled_p(nf);
      for (Eigen::Index c = 0; c < nf; ++c) {
        const auto k = static_cast<Eigen::Index>(idx[c]);
        step[c] = trial[k] - full[k];
        scaled_p[c] = diag[c] * full[k];
      }
      const double step_norm = step.cwiseProduct(diag).norm();
      if (step_norm <= options.tol_x * (scaled_p.norm() + options.tol_x)) {
        step_small = true;
        break;
      }

      const Eigen::VectorXd r_trial = residuals(problem, FitParams::unpack(trial));
      const double cost_trial = 0.5 * r_trial.squaredNorm();
      const double predicted = -(g.dot(step) + 0.5 * step.dot(h * step));
      if (std::isfinite(cost_trial) && cost_trial < cost) {
        const double rho = predicted > 0.0 ? std::clamp((cost - cost_trial) / predicted, 0.0, 1.0) : 0.5;
        mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
        nu = 2.0;
        full = trial;
        r = r_trial;
        cost = cost_trial;
        res.cost_history.push_back(cost);
        accepted = true;
      } else {
        mu *= nu;
        nu *= 2.0;
        if (mu > 1e30) break;
      }
    }
    if (step_small) {
      res.termination = "step";
      res.converged = true;
      break;
    }
    if (!accepted) {
      res.termination = "step";
      res.converged = true;
      break;
    }
  }
  // Close to the optimum cost differences fall below rounding and the damped
  // loop stalls; finish with plain Gauss-Newton steps on the interior
  // parameters, accepted while they shrink the gradient.
  if (res.converged && nf > 0 && r.norm() > 0.0) {
    std::vector<Eigen::Index> inner;
    for (Eigen::Index c = 0; c < nf; ++c) {
      const auto k = static_cast<Eigen::Index>(idx[c]);
      if (full[k] > lo[k] && full[k] < hi[k]) inner.push_back(c);
    }
    Eigen::MatrixXd j = free_jacobian(full);
    Eigen::VectorXd g = j.transpose() * r;
    double g_now = scaled_gradient(j, g, full, r.norm());
    for (int pass = 0; pass < 3 && !inner.empty() && g_now > 0.0; ++pass) {
      const auto ni = static_cast<Eigen::Index>(inner.size());
      Eigen::MatrixXd ji(j.rows(), ni);
      Eigen::VectorXd gi(ni);
      for (Eigen::Index c = 0; c < ni; ++c) {
        ji.col(c) = j.col(inner[static_cast<std::size_t>(c)]);
        gi[c] = g[inner[static_cast<std::size_t>(c)]];
      }
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(ji.transpose() * ji);
      if (ldlt.info() != Eigen::Success) break;
      const Eigen::VectorXd delta = ldlt.solve(-gi);
      if (!delta.allFinite()) break;
      Eigen::VectorXd trial = full;
      for (Eigen::Index c = 0; c < ni; ++c) {
        trial[static_cast<Eigen::Index>(idx[static_cast<std::size_t>(inner[static_cast<std::size_t>(c)])])] +=
            delta[c];
      }
      trial = clamp_to(trial, lo, hi);
      const Eigen::VectorXd r_trial = residuals(problem, FitParams::unpack(trial));
      const double cost_trial = 0.5 * r_trial.squaredNorm();
      const Eigen::MatrixXd j_trial = free_jacobian(trial);
      const Eigen::VectorXd g_trial = j_trial.transpose() * r_trial;
      const double g_next = scaled_gradient(j_trial, g_trial, trial, r_trial.norm());
      if (!(g_next < g_now) || !(cost_trial <= cost * (1.0 + 1e-12))) break;
      full = trial;
      r = r_trial;
      cost = cost_trial;
      j = j_trial;
      g = g_trial;
      g_now = g_next;
    }
  }
  if (nf == 0) {
    res.termination = "no_free_parameters";
    res.converged = true;
  }
  if (!res.converged) {
    res.warnings.push_back("fit did not converge within " + std::to_string(options.max_iterations) +
                           " iterations");
  }

  res.estimate = FitParams::unpack(full);
  res.cost = cost;
  res.residual_norm = std::sqrt(2.0 * cost);

  // Covariance from the Gauss-Newton normal matrix at the optimum, computed
  // in correlation scaling so rank tests are unit-free.
  const auto n = static_cast<Eigen::Index>(problem.parameter_count());
  res.covariance = Eigen::MatrixXd::Zero(n, n);
  if (nf > 0) {
    const Eigen::MatrixXd j = free_jacobian(full);
    const Eigen::MatrixXd h = j.transpose() * j;
    // Moves a dead parameter slightly off its bound and returns the free
    // parameter it is most strongly correlated with there.
    auto confounded_with = [&](Eigen::Index c) -> std::string {
      const auto k = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(c)]);
      Eigen::VectorXd probe = full;
      const double span = hi[k] - lo[k];
      probe[k] = full[k] - lo[k] <= hi[k] - full[k] ? full[k] + 1e-3 * span : full[k] - 1e-3 * span;
      const Eigen::MatrixXd jp = free_jacobian(probe);
      const Eigen::MatrixXd hp = jp.transpose() * jp;
      if (!(hp.diagonal().array() > 0.0).all()) return {};
      const Eigen::VectorXd d = hp.diagonal().cwiseSqrt().cwiseInverse();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(d.asDiagonal() * hp * d.asDiagonal());
      const double top = es.eigenvalues().maxCoeff();
      Eigen::MatrixXd cp = Eigen::MatrixXd::Zero(nf, nf);
      for (Eigen::Index e = 0; e < nf; ++e) {
        if (es.eigenvalues()[e] <= options.rank_tol * top) continue;
        cp += es.eigenvectors().col(e) * es.eigenvectors().col(e).transpose() / es.eigenvalues()[e];
      }
      Eigen::Index best = -1;
      double best_r = 0.0;
      for (Eigen::Index o = 0; o < nf; ++o) {
        if (o == c || cp(o, o) <= 0.0 || cp(c, c) <= 0.0) continue;
        const double rr = cp(c, o) / std::sqrt(cp(c, c) * cp(o, o));
        if (std::abs(rr) > std::abs(best_r)) {
          best_r = rr;
          best = o;
        }
      }
      if (best < 0 || std::abs(best_r) < 0.9) return {};
      std::ostringstream os;
      os.precision(4);
      os << parameter_name(idx[static_cast<std::size_t>(best)]) << " (r = " << best_r << ")";
      return os.str();
    };
    // Columns with no sensitivity at all are reported on their own and
    // excluded from the eigen analysis.
    std::vector<Eigen::Index> live;
    for (Eigen::Index c = 0; c < nf; ++c) {
      if (h(c, c) > 0.0) {
        live.push_back(c);
      } else {
        res.rank_deficient = true;
        std::string msg = "unidentifiable: " + parameter_name(idx[static_cast<std::size_t>(c)]) +
                          " has zero sensitivity at the optimum";
        const std::string partner = confounded_with(c);
        if (!partner.empty()) msg += "; just inside its bound it is confounded with " + partner;
        res.weak_directions.push_back(msg);
      }
    }
    const auto nl = static_cast<Eigen::Index>(live.size());
    std::vector<std::size_t> live_idx;
    Eigen::VectorXd scale(nl);
    Eigen::MatrixXd corr(nl, nl);
    for (Eigen::Index a = 0; a < nl; ++a) {
      live_idx.push_back(idx[static_cast<std::size_t>(live[a])]);
      scale[a] = 1.0 / std::sqrt(h(live[a], live[a]));
    }
    for (Eigen::Index a = 0; a < nl; ++a) {
      for (Eigen::Index b = 0; b < nl; ++b) corr(a, b) = h(live[a], live[b]) * scale[a] * scale[b];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(corr);
    const Eigen::VectorXd ev = eig.eigenvalues();
    const double emax = nl > 0 ? ev.maxCoeff() : 0.0;
    Eigen::MatrixXd pinv = Eigen::MatrixXd::Zero(nl, nl);
    for (Eigen::Index k = 0; k < nl; ++k) {
      const double rel = emax > 0.0 ? ev[k] / emax : 0.0;
      const Eigen::VectorXd v = eig.eigenvectors().col(k);
      if (rel < options.rank_tol) {
        res.rank_deficient = true;
        res.weak_directions.push_back("unidentifiable: " + describe_direction(v, live_idx));
        continue;
      }
      if (rel < options.weak_tol) {
        res.weak_directions.push_back("weak: " + describe_direction(v, live_idx));
      }
      pinv += v * v.transpose() / ev[k];
    }
    Eigen::MatrixXd cov_live = scale.asDiagonal() * pinv * scale.asDiagonal();
    for (Eigen::Index a = 0; a < nl; ++a) {
      for (Eigen::Index b = a + 1; b < nl; ++b) {
        const double denom = std::sqrt(cov_live(a, a) * cov_live(b, b));
        if (denom > 0.0 && std::abs(cov_live(a, b) / denom) > options.correlation_tol) {
          std::ostringstream os;
          os.precision(5);
          os << "correlated: " << parameter_name(live_idx[static_cast<std::size_t>(a)]) << " / "
             << parameter_name(live_idx[static_cast<std::size_t>(b)]) << " (r = " << cov_live(a, b) / denom << ")";
          res.weak_directions.push_back(os.str());
        }
      }
    }
    Eigen::MatrixXd cov_free = Eigen::MatrixXd::Zero(nf, nf);
    for (Eigen::Index a = 0; a < nl; ++a) {
      for (Eigen::Index b = 0; b < nl; ++b) cov_free(live[a], live[b]) = cov_live(a, b);
    }
    const auto dof = static_cast<double>(res.data_count) - static_cast<double>(res.free_count);
    if (!problem.sigma_absolute && dof > 0.0) cov_free *= 2.0 * cost / dof;
    for (Eigen::Index a = 0; a < nf; ++a) {
      for (Eigen::Index b = 0; b < nf; ++b) {
        res.covariance(static_cast<Eigen::Index>(idx[a]), static_cast<Eigen::Index>(idx[b])) = cov_free(a, b);
      }
    }
    if (res.rank_deficient) {
      res.warnings.push_back("rank-deficient normal equations; see weak directions");
    } else if (!res.weak_directions.empty()) {
      res.warnings.push_back("some parameter combinations are only weakly identifiable");
    }
  }

  for (const FitTrace& t : problem.traces) {
    TraceResidual tr;
    tr.id = t.id;
    tr.quadrature = t.quadrature;
    tr.pump = t.pump;
    tr.frequency_hz = t.frequency_hz;
    double ss = 0.0;
    for (std::size_t i = 0; i < t.frequency_hz.size(); ++i) {
      const double d = t.value_db[i] - model_db(res.estimate, t.quadrature, t.pump, t.frequency_hz[i]);
      tr.residual_db.push_back(d);
      ss += d * d;
    }
    tr.rms_db = std::sqrt(ss / static_cast<double>(t.frequency_hz.size()));
    res.traces.push_back(std::move(tr));
  }
  return res;
}

std::vector<FitResult> fit_per_curve(const Dataset& processed, const FitOptions& options) {
  std::vector<FitResult> out;
  std::size_t slot = 0;
  for (const PumpTraces& p : processed.pumps) {
    if (!p.squeezed && !p.antisqueezed) continue;
    Dataset single;
    single.dark = processed.dark;
    single.vacuum = processed.vacuum;
    single.pumps.push_back(p);

    FitOptions local = options;
    local.fixed.clear();
    for (const auto& [name, value] : options.fixed) {
      const auto shared = parameter_index(name, 0);
      if (shared) {
        local.fixed.emplace_back(name, value);
      } else if (parameter_index(name, slot + 1) == kSharedParameters + slot) {
        local.fixed.emplace_back("x_0", value);
      }
    }
    const FitProblem prob = FitProblem::from_dataset(single, local);
    out.push_back(fit_model(prob, initial_guess(prob), local));
    ++slot;
  }
  if (out.empty()) throw DataError("fit: dataset has no squeezed or antisqueezed traces");
  return out;
}

GoodnessReport goodness(const FitResult& fit) {
  GoodnessReport g;
  g.chi_squared = 2.0 * fit.cost;
  g.degrees_of_freedom = fit.data_count > fit.free_count ? fit.data_count - fit.free_count : 0;
  g.reduced_chi_squared =
      g.degrees_of_freedom > 0 ? g.chi_squared / static_cast<double>(g.degrees_of_freedom) : 0.0;
  double ss = 0.0;
  std::size_t n = 0;
  for (const TraceResidual& t : fit.traces) {
    g.trace_rms_db.emplace_back(t.id, t.rms_db);
    for (double d : t.residual_db) ss += d * d;
    n += t.residual_db.size();
  }
  g.overall_rms_db = n > 0 ? std::sqrt(ss / static_cast<double>(n)) : 0.0;
  return g;
}

}  // namespace sqzcal
