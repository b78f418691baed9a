#include "sqzcal/synth.hpp"

#include <algorithm>
#include <cmath>

#include "sqzcal/rng.hpp"

namespace sqzcal {

namespace {

std::uint64_t stream_of(TraceKind kind, int pump_index) {
  switch (kind) {
    case TraceKind::Dark: return 0;
    case TraceKind::Vacuum: return 1;
    case TraceKind::Squeezed: return 2 + 2 * static_cast<std::uint64_t>(pump_index);
    case TraceKind::Antisqueezed: return 3 + 2 * static_cast<std::uint64_t>(pump_index);
  }
  return 0;
}

Trace emit(std::vector<double> mean_relative, TraceKind kind, const AnalyzerSettings& s,
           const std::vector<double>& grid, std::uint64_t seed, double level_dbm) {
  Trace t;
  t.kind = kind;
  t.frequency_hz = grid;
  t.analyzer = s.state();
  t.power_db.reserve(grid.size());

  const double scale = linear_from_db(level_dbm);
  const std::size_t n = s.effective_averages();
  Rng rng(seed);
  for (double m : mean_relative) {
    double p = m * scale;
    if (!s.zero_scatter) p *= rng.gamma(static_cast<double>(n)) / static_cast<double>(n);
    t.power_db.push_back(db_from_linear(p));
  }
  return t;
}

}  // namespace

std::size_t AnalyzerSettings::effective_averages() const {
  if (n_eff_override > 0) return n_eff_override;
  return sqzcal::effective_averages(state(), grid.points);
}

std::vector<double> AnalyzerSettings::dark_relative_power() const {
  const std::vector<double> grid_hz = grid.frequencies();
  std::vector<double> out;
  out.reserve(grid_hz.size());
  if (dark_profile.empty()) {
    out.assign(grid_hz.size(), linear_from_db(-dark_clearance_db));
    return out;
  }
  for (double f : grid_hz) {
    auto it = std::lower_bound(dark_profile.begin(), dark_profile.end(), f,
                               [](const auto& pt, double x) { return pt.first < x; });
    double c = 0.0;
    if (it == dark_profile.begin()) {
      c = it->second;
    } else if (it == dark_profile.end()) {
      c = dark_profile.back().second;
    } else {
      const auto& hi = *it;
      const auto& lo = *(it - 1);
      c = lo.second + (f - lo.first) / (hi.first - lo.first) * (hi.second - lo.second);
    }
    out.push_back(linear_from_db(-c));
  }
  return out;
}

void AnalyzerSettings::validate() const {
  if (!(vbw_hz > 0.0) || !(rbw_hz > vbw_hz)) {
    throw DomainError("analyzer: require rbw > vbw > 0");
  }
  if (!(sweep_time_s > 0.0)) throw DomainError("analyzer: sweep time must be positive");
  if (grid.points < 2) throw DomainError("analyzer: grid needs at least two points");
  if (!(grid.stop_hz > grid.start_hz) || !(grid.start_hz >= 0.0)) {
    throw DomainError("analyzer: grid must satisfy 0 <= start < stop");
  }
  for (std::size_t i = 1; i < dark_profile.size(); ++i) {
    if (!(dark_profile[i].first > dark_profile[i - 1].first)) {
      throw DomainError("analyzer: dark profile frequencies must be strictly ascending");
    }
  }
}

std::uint64_t trace_seed(std::uint64_t dataset_seed, TraceKind kind, int pump_index) {
  return derive_seed(dataset_seed, stream_of(kind, pump_index));
}

std::string trace_id(TraceKind kind, int pump_index) {
  std::string id(to_string(kind));
  if (kind == TraceKind::Squeezed || kind == TraceKind::Antisqueezed) {
    id += "_" + std::to_string(pump_index);
  }
  return id;
}

Trace synth_trace(const ModelParams& p, double pump_ratio, TraceKind kind, const AnalyzerSettings& s,
                  std::uint64_t seed) {
  s.validate();
  p.validate();
  const std::vector<double> grid = s.grid.frequencies();
  const std::vector<double> dark = s.dark_relative_power();

  std::vector<double> mean(grid.size());
  if (kind == TraceKind::Squeezed || kind == TraceKind::Antisqueezed) {
    const ModelCurves curves = model_spectrum(p, pump_ratio, grid);
    const auto& db = kind == TraceKind::Squeezed ? curves.v_minus_db : curves.v_plus_db;
    for (std::size_t i = 0; i < grid.size(); ++i) mean[i] = linear_from_db(db[i]) + dark[i];
  } else if (kind == TraceKind::Vacuum) {
    for (std::size_t i = 0; i < grid.size(); ++i) mean[i] = 1.0 + dark[i];
  } else {
    mean = dark;
  }

  Trace t = emit(std::move(mean), kind, s, grid, seed, s.vacuum_level_dbm);
  if (kind == TraceKind::Squeezed || kind == TraceKind::Antisqueezed) t.pump_ratio = pump_ratio;
  t.id = trace_id(kind, -1);
  return t;
}

Dataset synth_dataset(const ModelParams& p, std::span<const double> pump_ratios,
                      const AnalyzerSettings& s, std::uint64_t seed) {
  if (pump_ratios.empty()) throw DomainError("synth_dataset: pump list is empty");
  Dataset ds;
  ds.dark = synth_trace(p, 0.0, TraceKind::Dark, s, trace_seed(seed, TraceKind::Dark, -1));
  ds.vacuum = synth_trace(p, 0.0, TraceKind::Vacuum, s, trace_seed(seed, TraceKind::Vacuum, -1));
  for (std::size_t k = 0; k < pump_ratios.size(); ++k) {
    const int idx = static_cast<int>(k);
    PumpTraces pt;
    pt.index = idx;
    pt.pump_ratio = pump_ratios[k];
    for (TraceKind kind : {TraceKind::Squeezed, TraceKind::Antisqueezed}) {
      Trace t = synth_trace(p, pump_ratios[k], kind, s, trace_seed(seed, kind, idx));
      t.pump_index = idx;
      t.id = trace_id(kind, idx);
      (kind == TraceKind::Squeezed ? pt.squeezed : pt.antisqueezed) = std::move(t);
    }
    ds.pumps.push_back(std::move(pt));
  }
  return ds;
}

double photon_flux(double power_w, double wavelength_m) {
  return power_w * wavelength_m / (kPlanck * kSpeedOfLight);
}

LinearitySet linearity_check_set(std::span<const double> lo_powers_w, const AnalyzerSettings& s,
                                 std::uint64_t seed, double wavelength_m) {
  s.validate();
  const std::vector<double> grid = s.grid.frequencies();
  const std::vector<double> dark = s.dark_relative_power();

  LinearitySet set;
  set.dark = emit(dark, TraceKind::Dark, s, grid, derive_seed(seed, 0), s.vacuum_level_dbm);
  set.dark.id = "dark";
  for (std::size_t k = 0; k < lo_powers_w.size(); ++k) {
    const double power = lo_powers_w[k];
    if (!(power > 0.0)) throw DomainError("linearity_check_set: LO powers must be positive");
    const double shot = power / kReferenceLoPowerW;
    std::vector<double> mean(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) mean[i] = shot + dark[i];
    LinearityPoint pt;
    pt.lo_power_w = power;
    pt.photon_flux_per_s = photon_flux(power, wavelength_m);
    pt.vacuum = emit(std::move(mean), TraceKind::Vacuum, s, grid, derive_seed(seed, 1 + k),
                     s.vacuum_level_dbm);
    pt.vacuum.id = "vacuum_lo_" + std::to_string(k);
    set.points.push_back(std::move(pt));
  }
  return set;
}

double linearity_slope(const LinearitySet& set) {
  if (set.points.size() < 2) throw DomainError("linearity_slope: need at least two LO powers");
  std::vector<double> xs;
  std::vector<double> ys;
  for (const LinearityPoint& pt : set.points) {
    const Trace sub = subtract_dark(pt.vacuum, set.dark);
    double mean = 0.0;
    for (double v : sub.linear_power()) mean += v;
    mean /= static_cast<double>(sub.size());
    xs.push_back(std::log10(pt.lo_power_w));
    ys.push_back(std::log10(mean));
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  if (sxx == 0.0) throw DomainError("linearity_slope: LO powers must not all be equal");
  return sxy / sxx;
}

}  // namespace sqzcal
