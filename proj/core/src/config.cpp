#include "sqzcal/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

namespace sqzcal {

namespace {

constexpr std::string_view kDefaultConfig = R"(# Reference experiment: 15 dB squeezing, 1064 nm, PPKTP OPA.
seed = 1

# Fitted spectrum parameters used as synthesis truth.
model.eta_tot = 0.975
model.theta_pn_rad = 0.0017
model.linewidth_hz = 84000000
model.pump_ratios = 0.08, 0.339, 0.835

grid.start_hz = 3000000
grid.stop_hz = 8000000
grid.points = 501

analyzer.rbw_hz = 300000
analyzer.vbw_hz = 200
analyzer.sweep_time_s = 0.295
analyzer.dark_clearance_db = 28
analyzer.vacuum_level_dbm = -70
analyzer.zero_scatter = false
analyzer.n_eff = 0
analyzer.dark_profile =

# Standing-wave OPA: coupling mirror plus crystal back face.
cavity.coupler_transmission = 0.125 +0.005 -0.005
cavity.round_trip_length_m = 0.08
cavity.fsr_hz = 3750000000
cavity.finesse = 54
cavity.pump_wavelength_m = 5.32e-07
cavity.fundamental_wavelength_m = 1.064e-06
cavity.loss.hr_backside.ppm = 400 +100 -100
cavity.loss.hr_backside.passes = 1
cavity.loss.ar_frontside.ppm = 400 +200 -200
cavity.loss.ar_frontside.passes = 2
cavity.loss.crystal_absorption.ppm_per_cm = 12 +0 -0
cavity.loss.crystal_absorption.length_cm = 0.93
cavity.loss.crystal_absorption.passes = 2

# Independently measured efficiencies.
ledger.escape = 0.9905 +0.004 -0.0045
ledger.visibility = 0.996 +0.0005 -0.0005
ledger.lens = 0.998 +0.0001 -0.0001
# Photodiode back-reflection after retro-recycling; unit by default.
ledger.other.retro_recycling = 1 +0 -0
ledger.distribution = split-uniform

calib.eta_tot = 0.975 +0.001 -0.001
calib.mode = multiplicative
calib.samples = 1000000
calib.histogram_bins = 200
calib.threads = 0

fit.mode = joint
fit.residual_space = db
fit.weights = uniform
fit.fixed =
fit.tol_g = 1e-10
fit.tol_x = 1e-12
fit.max_iter = 500
fit.rank_tol = 1e-12
fit.weak_tol = 0.0001
fit.correlation_tol = 0.995

process.subtract_dark = true
process.floor = 1e-12
process.band_start_hz = 3000000
process.band_stop_hz = 5000000
)";

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto p = s.find(sep, start);
    out.push_back(trim(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start)));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

double to_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty() || !std::isfinite(v)) {
    throw UsageError("expected a number, got '" + std::string(s) + "'");
  }
  return v;
}

template <typename T>
T to_unsigned(std::string_view s) {
  s = trim(s);
  T v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw UsageError("expected a non-negative integer, got '" + std::string(s) + "'");
  }
  return v;
}

bool to_bool(std::string_view s) {
  s = trim(s);
  if (s == "true") return true;
  if (s == "false") return false;
  throw UsageError("expected true or false, got '" + std::string(s) + "'");
}

std::vector<double> to_list(std::string_view s) {
  std::vector<double> out;
  if (trim(s).empty()) return out;
  for (std::string_view item : split(s, ',')) out.push_back(to_double(item));
  return out;
}

std::vector<std::pair<std::string, double>> to_fixed(std::string_view s) {
  std::vector<std::pair<std::string, double>> out;
  if (trim(s).empty()) return out;
  for (std::string_view item : split(s, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) {
      throw UsageError("fixed parameter must be name=value, got '" + std::string(item) + "'");
    }
    out.emplace_back(std::string(trim(item.substr(0, eq))), to_double(item.substr(eq + 1)));
  }
  return out;
}

struct Entry {
  std::string value;
  int line = 0;
  bool used = false;
};

class KeyTable {
 public:
  KeyTable(std::string_view text, std::string_view origin) : origin_(origin) {
    int lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const auto nl = text.find('\n', pos);
      std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
      pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) fail(lineno, "expected 'key = value'");
      const std::string key(trim(line.substr(0, eq)));
      if (key.empty()) fail(lineno, "empty key");
      if (entries_.count(key) != 0) {
        fail(lineno, "duplicate key '" + key + "' (first set on line " + std::to_string(entries_[key].line) + ")");
      }
      entries_[key] = Entry{std::string(trim(line.substr(eq + 1))), lineno, false};
      order_.push_back(key);
    }
  }

  [[noreturn]] void fail(int line, const std::string& msg) const {
    throw UsageError(std::string(origin_) + ":" + std::to_string(line) + ": " + msg);
  }

  template <typename F>
  auto with(const std::string& key, F&& convert) {
    Entry& e = entries_.at(key);
    e.used = true;
    try {
      return convert(std::string_view(e.value));
    } catch (const std::exception& ex) {
      fail(e.line, key + ": " + ex.what());
    }
  }

  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  template <typename T, typename F>
  void optional(const std::string& key, T& out, F&& convert) {
    if (has(key)) out = with(key, convert);
  }

  template <typename T, typename F>
  void required(const std::string& key, T& out, F&& convert) {
    if (!has(key)) {
      missing_.push_back(key);
      return;
    }
    out = with(key, convert);
  }

  // Distinct middle components of keys "<prefix><name>.<field>", in order
  // of first appearance.
  std::vector<std::string> names_under(const std::string& prefix, bool with_field) const {
    std::vector<std::string> names;
    for (const std::string& k : order_) {
      if (k.rfind(prefix, 0) != 0) continue;
      std::string rest = k.substr(prefix.size());
      if (with_field) {
        const auto dot = rest.find('.');
        if (dot == std::string::npos) continue;
        rest = rest.substr(0, dot);
      }
      if (!rest.empty() && std::find(names.begin(), names.end(), rest) == names.end()) names.push_back(rest);
    }
    return names;
  }

  // Unknown keys first: a misspelt key also shows up as a missing one.
  void finish() const {
    for (const std::string& k : order_) {
      const Entry& e = entries_.at(k);
      if (!e.used) fail(e.line, "unknown key '" + k + "'");
    }
    if (!missing_.empty()) {
      std::string list;
      for (const std::string& k : missing_) list += (list.empty() ? "'" : ", '") + k + "'";
      throw UsageError(origin_ + ": missing required key" + (missing_.size() > 1 ? "s " : " ") + list);
    }
  }

 private:
  std::string origin_;
  std::map<std::string, Entry> entries_;
  std::vector<std::string> order_;
  std::vector<std::string> missing_;
};

auto as_double = [](std::string_view s) { return to_double(s); };
auto as_size = [](std::string_view s) { return to_unsigned<std::size_t>(s); };
auto as_bool = [](std::string_view s) { return to_bool(s); };
auto as_uncertain = [](std::string_view s) { return parse_uncertain(s); };
auto as_string = [](std::string_view s) { return std::string(s); };

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += format_double(v[i]);
  }
  return out;
}

}  // namespace

LossComponent CavityLossSpec::component() const {
  if (ppm) return LossComponent{name, *ppm, passes};
  if (ppm_per_cm) return absorption_component(name, *ppm_per_cm, length_cm, passes);
  throw UsageError("cavity loss '" + name + "' needs either ppm or ppm_per_cm");
}

std::vector<LossComponent> CavityConfig::components() const {
  std::vector<LossComponent> out;
  for (const CavityLossSpec& l : losses) out.push_back(l.component());
  return out;
}

CavityParams CavityConfig::params() const {
  CavityParams p;
  p.coupler_transmission = coupler_transmission.value;
  p.round_trip_loss = round_trip_loss(components());
  p.round_trip_length_m = round_trip_length_m;
  p.pump_wavelength_m = pump_wavelength_m;
  p.fundamental_wavelength_m = fundamental_wavelength_m;
  return p;
}

CavitySummary summarize(const CavityConfig& c) {
  const CavityParams p = c.params();
  p.validate();
  CavitySummary s;
  s.round_trip_loss = p.round_trip_loss;
  s.escape_efficiency = escape_efficiency(p);
  double loss_hi = 0.0;
  double loss_lo = 0.0;
  for (const LossComponent& k : c.components()) {
    loss_hi += k.loss_ppm.upper() * 1e-6 * k.passes;
    loss_lo += std::max(k.loss_ppm.lower(), 0.0) * 1e-6 * k.passes;
  }
  const double t_lo = c.coupler_transmission.lower();
  const double t_hi = c.coupler_transmission.upper();
  s.escape_lower = t_lo / (t_lo + loss_hi);
  s.escape_upper = t_hi / (t_hi + loss_lo);
  s.linewidth_hz = decay_rate(p) / (2.0 * kPi);
  s.linewidth_from_finesse_hz = linewidth_from_finesse(c.fsr_hz, c.finesse);
  return s;
}

LossLedger LedgerConfig::ledger() const {
  auto tagged = [&](UncertainValue u) {
    u.distribution = distribution;
    return u;
  };
  LossLedger l;
  l.add(efficiency_entry("escape", LossRole::Escape, tagged(escape)));
  l.add(visibility_entry(tagged(visibility)));
  l.add(efficiency_entry("lens", LossRole::Lens, tagged(lens)));
  for (const auto& [name, u] : other) l.add(efficiency_entry(name, LossRole::Other, tagged(u)));
  return l;
}

std::string_view to_string(FitMode m) { return m == FitMode::Joint ? "joint" : "per-curve"; }

FitMode fit_mode_from_string(std::string_view s) {
  if (s == "joint") return FitMode::Joint;
  if (s == "per-curve") return FitMode::PerCurve;
  throw UsageError("unknown fit mode '" + std::string(s) + "' (joint | per-curve)");
}

AnalyzerSettings RunConfig::analyzer_settings() const {
  AnalyzerSettings s = analyzer;
  s.grid = grid;
  if (!dark_profile_path.empty()) s.dark_profile = load_dark_profile(dark_profile_path);
  return s;
}

MonteCarloSettings RunConfig::monte_carlo() const {
  MonteCarloSettings mc;
  mc.samples = calib.samples;
  mc.seed = seed;
  mc.threads = calib.threads;
  mc.histogram_bins = calib.histogram_bins;
  return mc;
}

CalibrationInput RunConfig::calibration_input() const { return calibration_input(calib.eta_tot); }

CalibrationInput RunConfig::calibration_input(const UncertainValue& eta_tot) const {
  CalibrationInput in;
  in.eta_tot = eta_tot;
  in.eta_tot.distribution = ledger.distribution;
  in.ledger = ledger.ledger();
  in.mode = calib.mode;
  in.mc = monte_carlo();
  return in;
}

void RunConfig::validate() const {
  try {
    model.params().validate();
    if (model.pump_ratios.empty()) throw UsageError("model.pump_ratios must not be empty");
    for (double x : model.pump_ratios) {
      if (!(x >= 0.0 && x < 1.0)) throw UsageError("model.pump_ratios entries must lie in [0, 1)");
    }
    AnalyzerSettings a = analyzer;
    a.grid = grid;
    a.validate();
    cavity.coupler_transmission.validate();
    cavity.params().validate();
    if (!(cavity.fsr_hz > 0.0) || !(cavity.finesse > 0.0)) {
      throw UsageError("cavity.fsr_hz and cavity.finesse must be positive");
    }
    for (const CavityLossSpec& l : cavity.losses) {
      if (l.ppm.has_value() == l.ppm_per_cm.has_value()) {
        throw UsageError("cavity.loss." + l.name + " needs exactly one of ppm or ppm_per_cm");
      }
      if (l.ppm_per_cm && !(l.length_cm > 0.0)) {
        throw UsageError("cavity.loss." + l.name + ".length_cm must be positive");
      }
      if (!(l.passes > 0.0)) throw UsageError("cavity.loss." + l.name + ".passes must be positive");
    }
    (void)ledger.ledger();
    calib.eta_tot.validate_efficiency();
    if (calib.samples < kMinMonteCarloSamples) {
      throw UsageError("calib.samples must be at least " + std::to_string(kMinMonteCarloSamples));
    }
    if (calib.histogram_bins == 0) throw UsageError("calib.histogram_bins must be positive");
    const FitOptions& f = fit.options;
    if (!(f.tol_g > 0.0) || !(f.tol_x > 0.0) || f.max_iterations <= 0) {
      throw UsageError("fit tolerances and fit.max_iter must be positive");
    }
    for (const auto& [name, value] : f.fixed) {
      if (!parameter_index(name, model.pump_ratios.size())) {
        throw UsageError("fit.fixed: unknown parameter '" + name + "'");
      }
    }
    if (!(process.floor_rel > 0.0)) throw UsageError("process.floor must be positive");
    if (!(process.band_stop_hz > process.band_start_hz)) {
      throw UsageError("process.band_stop_hz must exceed process.band_start_hz");
    }
  } catch (const DomainError& e) {
    throw UsageError(std::string("invalid config: ") + e.what());
  }
}

UncertainValue parse_uncertain(std::string_view text) {
  std::istringstream is{std::string(text)};
  std::string t;
  std::vector<std::string> store;
  while (is >> t) store.push_back(t);
  UncertainValue u;
  bool have_plus = false;
  bool have_minus = false;
  if (store.empty()) throw UsageError("empty uncertain value");
  u.value = to_double(store[0]);
  for (std::size_t i = 1; i < store.size(); ++i) {
    const std::string& s = store[i];
    if (s.size() > 1 && s[0] == '+' && !have_plus) {
      u.plus = to_double(std::string_view(s).substr(1));
      have_plus = true;
    } else if (s.size() > 1 && s[0] == '-' && !have_minus) {
      u.minus = to_double(std::string_view(s).substr(1));
      have_minus = true;
    } else {
      throw UsageError("malformed uncertain value '" + std::string(text) + "'");
    }
  }
  if (!have_plus || !have_minus) {
    throw UsageError("uncertain value '" + std::string(text) + "' must give both bounds as 'v +p -m'");
  }
  if (u.plus < 0.0 || u.minus < 0.0) throw UsageError("uncertainty bounds must be non-negative");
  return u;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string format_uncertain(const UncertainValue& u) {
  return format_double(u.value) + " +" + format_double(u.plus) + " -" + format_double(u.minus);
}

RunConfig parse_config(std::string_view text, std::string_view origin) {
  KeyTable k(text, origin);
  RunConfig c;

  k.optional("seed", c.seed, [](std::string_view s) { return to_unsigned<std::uint64_t>(s); });

  k.required("model.eta_tot", c.model.eta_tot, as_double);
  k.required("model.theta_pn_rad", c.model.theta_pn_rad, as_double);
  k.required("model.linewidth_hz", c.model.linewidth_hz, as_double);
  k.required("model.pump_ratios", c.model.pump_ratios, [](std::string_view s) { return to_list(s); });

  k.optional("grid.start_hz", c.grid.start_hz, as_double);
  k.optional("grid.stop_hz", c.grid.stop_hz, as_double);
  k.optional("grid.points", c.grid.points, as_size);

  k.optional("analyzer.rbw_hz", c.analyzer.rbw_hz, as_double);
  k.optional("analyzer.vbw_hz", c.analyzer.vbw_hz, as_double);
  k.optional("analyzer.sweep_time_s", c.analyzer.sweep_time_s, as_double);
  k.optional("analyzer.dark_clearance_db", c.analyzer.dark_clearance_db, as_double);
  k.optional("analyzer.vacuum_level_dbm", c.analyzer.vacuum_level_dbm, as_double);
  k.optional("analyzer.zero_scatter", c.analyzer.zero_scatter, as_bool);
  k.optional("analyzer.n_eff", c.analyzer.n_eff_override, as_size);
  k.optional("analyzer.dark_profile", c.dark_profile_path, as_string);
  c.analyzer.grid = c.grid;

  k.required("cavity.coupler_transmission", c.cavity.coupler_transmission, as_uncertain);
  k.required("cavity.round_trip_length_m", c.cavity.round_trip_length_m, as_double);
  k.required("cavity.fsr_hz", c.cavity.fsr_hz, as_double);
  k.required("cavity.finesse", c.cavity.finesse, as_double);
  k.optional("cavity.pump_wavelength_m", c.cavity.pump_wavelength_m, as_double);
  k.optional("cavity.fundamental_wavelength_m", c.cavity.fundamental_wavelength_m, as_double);
  for (const std::string& name : k.names_under("cavity.loss.", true)) {
    const std::string base = "cavity.loss." + name + ".";
    CavityLossSpec l;
    l.name = name;
    if (k.has(base + "ppm")) l.ppm = k.with(base + "ppm", as_uncertain);
    if (k.has(base + "ppm_per_cm")) l.ppm_per_cm = k.with(base + "ppm_per_cm", as_uncertain);
    k.optional(base + "length_cm", l.length_cm, as_double);
    k.optional(base + "passes", l.passes, as_double);
    if (l.ppm.has_value() == l.ppm_per_cm.has_value()) {
      throw UsageError(std::string(origin) + ": cavity loss '" + name + "' needs exactly one of " + base +
                       "ppm or " + base + "ppm_per_cm");
    }
    c.cavity.losses.push_back(std::move(l));
  }

  k.required("ledger.escape", c.ledger.escape, as_uncertain);
  k.required("ledger.visibility", c.ledger.visibility, as_uncertain);
  k.required("ledger.lens", c.ledger.lens, as_uncertain);
  for (const std::string& name : k.names_under("ledger.other.", false)) {
    c.ledger.other.emplace_back(name, k.with("ledger.other." + name, as_uncertain));
  }
  k.optional("ledger.distribution", c.ledger.distribution,
             [](std::string_view s) { return distribution_from_string(s); });

  k.required("calib.eta_tot", c.calib.eta_tot, as_uncertain);
  k.optional("calib.mode", c.calib.mode, [](std::string_view s) { return accounting_mode_from_string(s); });
  k.optional("calib.samples", c.calib.samples, as_size);
  k.optional("calib.histogram_bins", c.calib.histogram_bins, as_size);
  k.optional("calib.threads", c.calib.threads, as_size);

  FitOptions& f = c.fit.options;
  k.optional("fit.mode", c.fit.mode, [](std::string_view s) { return fit_mode_from_string(s); });
  k.optional("fit.residual_space", f.residual_space,
             [](std::string_view s) { return residual_space_from_string(s); });
  k.optional("fit.weights", f.weights, [](std::string_view s) { return weight_mode_from_string(s); });
  k.optional("fit.fixed", f.fixed, [](std::string_view s) { return to_fixed(s); });
  k.optional("fit.tol_g", f.tol_g, as_double);
  k.optional("fit.tol_x", f.tol_x, as_double);
  k.optional("fit.max_iter", f.max_iterations, [](std::string_view s) { return to_unsigned<int>(s); });
  k.optional("fit.rank_tol", f.rank_tol, as_double);
  k.optional("fit.weak_tol", f.weak_tol, as_double);
  k.optional("fit.correlation_tol", f.correlation_tol, as_double);

  k.optional("process.subtract_dark", c.process.subtract, as_bool);
  k.optional("process.floor", c.process.floor_rel, as_double);
  k.optional("process.band_start_hz", c.process.band_start_hz, as_double);
  k.optional("process.band_stop_hz", c.process.band_stop_hz, as_double);

  k.finish();
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

std::string serialize(const RunConfig& c) {
  std::ostringstream os;
  auto kv = [&](const std::string& key, const std::string& value) {
    os << key << " = " << value << "\n";
  };
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  auto d = [](double v) { return format_double(v); };
  auto n = [](std::size_t v) { return std::to_string(v); };

  kv("seed", std::to_string(c.seed));
  os << "\n";
  kv("model.eta_tot", d(c.model.eta_tot));
  kv("model.theta_pn_rad", d(c.model.theta_pn_rad));
  kv("model.linewidth_hz", d(c.model.linewidth_hz));
  kv("model.pump_ratios", join(c.model.pump_ratios));
  os << "\n";
  kv("grid.start_hz", d(c.grid.start_hz));
  kv("grid.stop_hz", d(c.grid.stop_hz));
  kv("grid.points", n(c.grid.points));
  os << "\n";
  kv("analyzer.rbw_hz", d(c.analyzer.rbw_hz));
  kv("analyzer.vbw_hz", d(c.analyzer.vbw_hz));
  kv("analyzer.sweep_time_s", d(c.analyzer.sweep_time_s));
  kv("analyzer.dark_clearance_db", d(c.analyzer.dark_clearance_db));
  kv("analyzer.vacuum_level_dbm", d(c.analyzer.vacuum_level_dbm));
  kv("analyzer.zero_scatter", b(c.analyzer.zero_scatter));
  kv("analyzer.n_eff", n(c.analyzer.n_eff_override));
  kv("analyzer.dark_profile", c.dark_profile_path);
  os << "\n";
  kv("cavity.coupler_transmission", format_uncertain(c.cavity.coupler_transmission));
  kv("cavity.round_trip_length_m", d(c.cavity.round_trip_length_m));
  kv("cavity.fsr_hz", d(c.cavity.fsr_hz));
  kv("cavity.finesse", d(c.cavity.finesse));
  kv("cavity.pump_wavelength_m", d(c.cavity.pump_wavelength_m));
  kv("cavity.fundamental_wavelength_m", d(c.cavity.fundamental_wavelength_m));
  for (const CavityLossSpec& l : c.cavity.losses) {
    const std::string base = "cavity.loss." + l.name + ".";
    if (l.ppm) kv(base + "ppm", format_uncertain(*l.ppm));
    if (l.ppm_per_cm) {
      kv(base + "ppm_per_cm", format_uncertain(*l.ppm_per_cm));
      kv(base + "length_cm", d(l.length_cm));
    }
    kv(base + "passes", d(l.passes));
  }
  os << "\n";
  kv("ledger.escape", format_uncertain(c.ledger.escape));
  kv("ledger.visibility", format_uncertain(c.ledger.visibility));
  kv("ledger.lens", format_uncertain(c.ledger.lens));
  for (const auto& [name, u] : c.ledger.other) kv("ledger.other." + name, format_uncertain(u));
  kv("ledger.distribution", std::string(to_string(c.ledger.distribution)));
  os << "\n";
  kv("calib.eta_tot", format_uncertain(c.calib.eta_tot));
  kv("calib.mode", std::string(to_string(c.calib.mode)));
  kv("calib.samples", n(c.calib.samples));
  kv("calib.histogram_bins", n(c.calib.histogram_bins));
  kv("calib.threads", n(c.calib.threads));
  os << "\n";
  const FitOptions& f = c.fit.options;
  kv("fit.mode", std::string(to_string(c.fit.mode)));
  kv("fit.residual_space", std::string(to_string(f.residual_space)));
  kv("fit.weights", std::string(to_string(f.weights)));
  std::string fixed;
  for (const auto& [name, value] : f.fixed) {
    if (!fixed.empty()) fixed += ", ";
    fixed += name + "=" + d(value);
  }
  kv("fit.fixed", fixed);
  kv("fit.tol_g", d(f.tol_g));
  kv("fit.tol_x", d(f.tol_x));
  kv("fit.max_iter", std::to_string(f.max_iterations));
  kv("fit.rank_tol", d(f.rank_tol));
  kv("fit.weak_tol", d(f.weak_tol));
  kv("fit.correlation_tol", d(f.correlation_tol));
  os << "\n";
  kv("process.subtract_dark", b(c.process.subtract));
  kv("process.floor", d(c.process.floor_rel));
  kv("process.band_start_hz", d(c.process.band_start_hz));
  kv("process.band_stop_hz", d(c.process.band_stop_hz));
  return os.str();
}

std::string_view default_config_text() { return kDefaultConfig; }

RunConfig default_config() { return parse_config(kDefaultConfig, "<built-in>"); }

RunConfig resolve_config(const std::optional<std::string>& path) {
  if (path && !path->empty()) return load_config(*path);
  if (const char* env = std::getenv(kConfigEnvVar); env != nullptr && *env != '\0') {
    return load_config(env);
  }
  return default_config();
}

std::vector<std::pair<double, double>> load_dark_profile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dark profile '" + path + "'");
  std::vector<std::pair<double, double>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view v = trim(line);
    if (v.empty() || v.front() == '#') continue;
    const auto cols = split(v, ',');
    if (cols.size() != 2) throw DataError(path + ":" + std::to_string(lineno) + ": expected two columns");
    try {
      out.emplace_back(to_double(cols[0]), to_double(cols[1]));
    } catch (const UsageError&) {
      if (out.empty() && lineno == 1) continue;  // header
      throw DataError(path + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  if (out.empty()) throw DataError("dark profile '" + path + "' has no data");
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (!(out[i].first > out[i - 1].first)) {
      throw DataError("dark profile '" + path + "' frequencies must be strictly ascending");
    }
  }
  return out;
}

}  // namespace sqzcal
