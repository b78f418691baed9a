#include "sqzcal/traces.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "sqzcal/model.hpp"

namespace sqzcal {

namespace {

constexpr double kDbPerNeper = 10.0 / 2.302585092994045684;  // 10 / ln(10)

void require_same_grid(const Trace& a, const Trace& b, std::string_view op) {
  if (!same_grid(a, b)) {
    throw DataError(std::string(op) + ": traces '" + a.id + "' and '" + b.id +
                    "' are on different frequency grids");
  }
}

double interpolate(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  auto it = std::lower_bound(xs.begin(), xs.end(), x);
  if (it == xs.end()) return ys.back();
  const auto hi = static_cast<std::size_t>(it - xs.begin());
  if (*it == x || hi == 0) return ys[hi];
  const std::size_t lo = hi - 1;
  const double t = (x - xs[lo]) / (xs[hi] - xs[lo]);
  return ys[lo] + t * (ys[hi] - ys[lo]);
}

Trace resample(const Trace& t, const std::vector<double>& grid) {
  Trace out = t;
  out.frequency_hz = grid;
  out.power_db.clear();
  const std::vector<double> lin = t.linear_power();
  for (double f : grid) out.power_db.push_back(db_from_linear(interpolate(t.frequency_hz, lin, f)));
  if (!t.relative_variance.empty()) {
    out.relative_variance.clear();
    for (double f : grid) {
      out.relative_variance.push_back(interpolate(t.frequency_hz, t.relative_variance, f));
    }
  }
  out.interpolated = true;
  return out;
}

}  // namespace

std::string_view to_string(TraceKind k) {
  switch (k) {
    case TraceKind::Dark: return "dark";
    case TraceKind::Vacuum: return "vacuum";
    case TraceKind::Squeezed: return "squeezed";
    case TraceKind::Antisqueezed: return "antisqueezed";
  }
  return "?";
}

TraceKind trace_kind_from_string(std::string_view s) {
  if (s == "dark") return TraceKind::Dark;
  if (s == "vacuum") return TraceKind::Vacuum;
  if (s == "squeezed") return TraceKind::Squeezed;
  if (s == "antisqueezed") return TraceKind::Antisqueezed;
  throw DataError("unknown trace kind '" + std::string(s) +
                  "' (dark | vacuum | squeezed | antisqueezed)");
}

std::size_t effective_averages(const AnalyzerState& a, std::size_t points) {
  if (!a.known() || points == 0) return 1;
  const double dwell = a.sweep_time_s / static_cast<double>(points);
  const double integration = std::max(dwell, 1.0 / a.vbw_hz);
  const double n = std::round(a.rbw_hz * integration);
  return n < 1.0 ? 1 : static_cast<std::size_t>(n);
}

void Trace::validate() const {
  if (frequency_hz.size() != power_db.size()) {
    throw DataError("trace '" + id + "': frequency and power columns differ in length");
  }
  if (frequency_hz.empty()) throw DataError("trace '" + id + "' is empty");
  for (std::size_t i = 1; i < frequency_hz.size(); ++i) {
    if (!(frequency_hz[i] > frequency_hz[i - 1])) {
      throw DataError("trace '" + id + "': frequencies must be strictly ascending");
    }
  }
  for (double p : power_db) {
    if (!std::isfinite(p)) throw DataError("trace '" + id + "' contains a non-finite power");
  }
  if (!relative_variance.empty() && relative_variance.size() != frequency_hz.size()) {
    throw DataError("trace '" + id + "': variance column has the wrong length");
  }
}

std::vector<double> Trace::linear_power() const {
  std::vector<double> out;
  out.reserve(power_db.size());
  for (double p : power_db) out.push_back(linear_from_db(p));
  return out;
}

std::vector<double> relative_variance(const Trace& t) {
  if (!t.relative_variance.empty()) return t.relative_variance;
  if (t.dark_subtracted || t.normalized || !t.analyzer.known()) return {};
  const double n = static_cast<double>(effective_averages(t.analyzer, t.size()));
  return std::vector<double>(t.size(), 1.0 / n);
}

std::vector<double> sigma_db(const Trace& t) {
  std::vector<double> rv = relative_variance(t);
  for (double& v : rv) v = kDbPerNeper * std::sqrt(v);
  return rv;
}

bool same_grid(const Trace& a, const Trace& b) { return a.frequency_hz == b.frequency_hz; }

Trace subtract_dark(const Trace& t, const Trace& dark, double floor_rel, Warnings* warnings) {
  t.validate();
  dark.validate();
  require_same_grid(t, dark, "subtract_dark");
  if (t.dark_subtracted) throw DataError("subtract_dark: trace '" + t.id + "' already dark-subtracted");
  if (!(floor_rel > 0.0)) throw DomainError("subtract_dark: floor must be positive");

  const std::vector<double> tl = t.linear_power();
  const std::vector<double> dl = dark.linear_power();
  const std::vector<double> tv = relative_variance(t);
  const std::vector<double> dv = relative_variance(dark);
  const bool track = !tv.empty() && !dv.empty();

  Trace out = t;
  out.dark_subtracted = true;
  out.floored_bins = 0;
  out.relative_variance.clear();
  for (std::size_t i = 0; i < tl.size(); ++i) {
    double p = tl[i] - dl[i];
    if (!(p > 0.0)) {
      p = floor_rel * tl[i];
      ++out.floored_bins;
    }
    out.power_db[i] = db_from_linear(p);
    if (track) {
      const double var = tl[i] * tl[i] * tv[i] + dl[i] * dl[i] * dv[i];
      out.relative_variance.push_back(var / (p * p));
    }
  }
  out.degenerate = out.floored_bins == out.size();
  if (out.floored_bins > 0) {
    warn(warnings, "trace '" + t.id + "': " + std::to_string(out.floored_bins) +
                       " bins fell to or below the dark level and were floored");
  }
  return out;
}

Trace normalize_to_vacuum(const Trace& t, const Trace& vacuum) {
  t.validate();
  vacuum.validate();
  require_same_grid(t, vacuum, "normalize_to_vacuum");
  if (t.dark_subtracted != vacuum.dark_subtracted) {
    throw DataError("normalize_to_vacuum: '" + t.id + "' and '" + vacuum.id +
                    "' mix dark-subtracted and raw data");
  }
  const bool self = t.id == vacuum.id && t.power_db == vacuum.power_db;
  const std::vector<double> tv = relative_variance(t);
  const std::vector<double> vv = relative_variance(vacuum);

  Trace out = t;
  out.normalized = true;
  out.reference_id = vacuum.id;
  out.relative_variance.clear();
  for (std::size_t i = 0; i < t.size(); ++i) {
    out.power_db[i] = self ? 0.0 : t.power_db[i] - vacuum.power_db[i];
    if (self) {
      out.relative_variance.push_back(0.0);
    } else if (!tv.empty() && !vv.empty()) {
      out.relative_variance.push_back(tv[i] + vv[i]);
    }
  }
  return out;
}

ClearanceSummary clearance(const Trace& vacuum, const Trace& dark) {
  vacuum.validate();
  dark.validate();
  require_same_grid(vacuum, dark, "clearance");
  ClearanceSummary out;
  out.frequency_hz = vacuum.frequency_hz;
  for (std::size_t i = 0; i < vacuum.size(); ++i) {
    out.clearance_db.push_back(vacuum.power_db[i] - dark.power_db[i]);
  }
  const auto [lo, hi] = std::minmax_element(out.clearance_db.begin(), out.clearance_db.end());
  out.min_db = *lo;
  out.max_db = *hi;
  return out;
}

std::vector<const Trace*> Dataset::traces() const {
  std::vector<const Trace*> out{&dark, &vacuum};
  for (const PumpTraces& p : pumps) {
    if (p.squeezed) out.push_back(&*p.squeezed);
    if (p.antisqueezed) out.push_back(&*p.antisqueezed);
  }
  return out;
}

Dataset align(std::vector<Trace> traces) {
  if (traces.empty()) throw DataError("align: no traces");
  for (const Trace& t : traces) t.validate();

  double lo = traces.front().frequency_hz.front();
  double hi = traces.front().frequency_hz.back();
  for (const Trace& t : traces) {
    lo = std::max(lo, t.frequency_hz.front());
    hi = std::min(hi, t.frequency_hz.back());
  }
  if (!(hi > lo)) throw DataError("align: traces have no overlapping frequency range");

  std::vector<double> grid;
  for (double f : traces.front().frequency_hz) {
    if (f >= lo && f <= hi) grid.push_back(f);
  }
  if (grid.size() < 2) throw DataError("align: common frequency range holds fewer than two points");

  Dataset ds;
  std::optional<Trace> dark;
  std::optional<Trace> vacuum;
  std::map<int, PumpTraces> pumps;
  for (Trace& t : traces) {
    if (t.frequency_hz != grid) {
      t = resample(t, grid);
      ds.interpolated = true;
    }
    switch (t.kind) {
      case TraceKind::Dark:
        if (dark) throw DataError("align: more than one dark trace");
        dark = std::move(t);
        break;
      case TraceKind::Vacuum:
        if (vacuum) throw DataError("align: more than one vacuum trace");
        vacuum = std::move(t);
        break;
      case TraceKind::Squeezed:
      case TraceKind::Antisqueezed: {
        if (t.pump_index < 0) {
          throw DataError("align: trace '" + t.id + "' has no pump index");
        }
        PumpTraces& slot = pumps[t.pump_index];
        slot.index = t.pump_index;
        if (t.pump_ratio) slot.pump_ratio = t.pump_ratio;
        std::optional<Trace>& target =
            t.kind == TraceKind::Squeezed ? slot.squeezed : slot.antisqueezed;
        if (target) {
          throw DataError("align: duplicate " + std::string(to_string(t.kind)) +
                          " trace for pump " + std::to_string(t.pump_index));
        }
        target = std::move(t);
        break;
      }
    }
  }
  if (!dark) throw DataError("dataset is missing a dark trace");
  if (!vacuum) throw DataError("dataset is missing a vacuum trace");
  ds.dark = std::move(*dark);
  ds.vacuum = std::move(*vacuum);
  for (auto& [index, p] : pumps) ds.pumps.push_back(std::move(p));
  return ds;
}

BandSummary summarize(const Trace& t, double band_start_hz, double band_stop_hz) {
  t.validate();
  BandSummary s;
  const auto lo = std::min_element(t.power_db.begin(), t.power_db.end());
  const auto idx = static_cast<std::size_t>(lo - t.power_db.begin());
  s.min_db = *lo;
  s.min_frequency_hz = t.frequency_hz[idx];
  s.max_db = *std::max_element(t.power_db.begin(), t.power_db.end());

  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t.frequency_hz[i] >= band_start_hz && t.frequency_hz[i] <= band_stop_hz) {
      sum += linear_from_db(t.power_db[i]);
      ++n;
    }
  }
  if (n == 0) {
    for (double p : t.power_db) sum += linear_from_db(p);
    n = t.size();
  }
  s.band_mean_db = db_from_linear(sum / static_cast<double>(n));
  return s;
}

ProcessResult process(const Dataset& raw, const ProcessOptions& options) {
  ProcessResult r;
  r.clearance = clearance(raw.vacuum, raw.dark);

  auto prepare = [&](const Trace& t) {
    if (!options.subtract) return t;
    Trace s = subtract_dark(t, raw.dark, options.floor_rel, &r.warnings);
    r.floored_bins += s.floored_bins;
    return s;
  };

  const Trace vacuum = prepare(raw.vacuum);
  r.dataset.dark = raw.dark;
  r.dataset.vacuum = normalize_to_vacuum(vacuum, vacuum);
  r.dataset.interpolated = raw.interpolated;
  for (const PumpTraces& p : raw.pumps) {
    PumpTraces out;
    out.index = p.index;
    out.pump_ratio = p.pump_ratio;
    if (p.squeezed) out.squeezed = normalize_to_vacuum(prepare(*p.squeezed), vacuum);
    if (p.antisqueezed) out.antisqueezed = normalize_to_vacuum(prepare(*p.antisqueezed), vacuum);
    r.dataset.pumps.push_back(std::move(out));
  }
  return r;
}

}  // namespace sqzcal
