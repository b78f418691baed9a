#include "sqzcal/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sqzcal/config.hpp"

namespace fs = std::filesystem;

namespace sqzcal {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_number(const std::string& s, const std::string& where) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (b != e && *b == '+') ++b;
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e || b == e || !std::isfinite(v)) {
    throw DataError(where + ": expected a number, got '" + s + "'");
  }
  return v;
}

bool parse_flag(const std::string& s, const std::string& where) {
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  throw DataError(where + ": expected 0 or 1, got '" + s + "'");
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::map<std::string, std::string> parse_key_values(std::string_view text, const std::string& origin) {
  std::map<std::string, std::string> out;
  std::size_t pos = 0;
  int lineno = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = trim(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw DataError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    out[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
  }
  return out;
}

std::string get(const std::map<std::string, std::string>& m, const std::string& key, const std::string& origin) {
  const auto it = m.find(key);
  if (it == m.end()) throw DataError(origin + ": missing '" + key + "'");
  return it->second;
}

void write_variance_csv(const fs::path& path, const Trace& t) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write '" + path.string() + "'");
  os << "frequency_hz,relative_variance\n";
  for (std::size_t i = 0; i < t.size(); ++i) {
    os << format_sig12(t.frequency_hz[i]) << ',' << format_sig12(t.relative_variance[i]) << '\n';
  }
  if (!os) throw DataError("failed writing '" + path.string() + "'");
}

std::vector<double> read_variance_csv(const fs::path& path, const Trace& t) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open variance file '" + path.string() + "'");
  std::string line;
  std::getline(is, line);
  std::vector<double> out;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cols = split_csv(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (cols.size() != 2) throw DataError(where + ": expected 2 columns");
    out.push_back(parse_number(cols[1], where));
  }
  if (out.size() != t.size()) {
    throw DataError("variance file '" + path.string() + "' does not match its trace length");
  }
  return out;
}

std::string fmt(double v) { return format_sig12(v); }

}  // namespace

std::string format_sig12(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void write_trace_csv(std::ostream& os, const Trace& t) {
  t.validate();
  os << kTraceCsvHeader << '\n';
  const std::string kind(to_string(t.kind));
  const std::string tail = "," + kind + "," + fmt(t.analyzer.rbw_hz) + "," + fmt(t.analyzer.vbw_hz) + "," +
                           fmt(t.analyzer.sweep_time_s) + "," + (t.normalized ? "1" : "0") + "\n";
  for (std::size_t i = 0; i < t.size(); ++i) {
    os << fmt(t.frequency_hz[i]) << ',' << fmt(t.power_db[i]) << tail;
  }
}

void write_trace_csv(const fs::path& path, const Trace& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write '" + path.string() + "'");
  write_trace_csv(os, t);
  if (!os) throw DataError("failed writing '" + path.string() + "'");
}

Trace read_trace_csv(std::istream& is, const std::string& origin) {
  std::string line;
  if (!std::getline(is, line)) throw DataError(origin + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTraceCsvHeader) {
    throw DataError(origin + ":1: unexpected header (want '" + std::string(kTraceCsvHeader) + "')");
  }
  Trace t;
  t.id = origin;
  int lineno = 1;
  bool first = true;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    const auto cols = split_csv(line);
    if (cols.size() != 7) throw DataError(where + ": expected 7 columns, found " + std::to_string(cols.size()));
    t.frequency_hz.push_back(parse_number(cols[0], where));
    t.power_db.push_back(parse_number(cols[1], where));
    TraceKind kind;
    AnalyzerState a{parse_number(cols[3], where), parse_number(cols[4], where), parse_number(cols[5], where)};
    bool normalized = parse_flag(cols[6], where);
    try {
      kind = trace_kind_from_string(cols[2]);
    } catch (const std::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    if (first) {
      t.kind = kind;
      t.analyzer = a;
      t.normalized = normalized;
      first = false;
    } else if (kind != t.kind || !(a == t.analyzer) || normalized != t.normalized) {
      throw DataError(where + ": per-trace columns change within the file");
    }
  }
  if (first) throw DataError(origin + ": no data rows");
  try {
    t.validate();
  } catch (const DataError& e) {
    throw DataError(origin + ": " + e.what());
  }
  return t;
}

Trace read_trace_csv(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open trace file '" + path.string() + "'");
  return read_trace_csv(is, path.string());
}

std::string_view to_string(DatasetStage s) { return s == DatasetStage::Raw ? "raw" : "processed"; }

void write_dataset(const fs::path& dir, const Dataset& ds, DatasetStage stage, std::uint64_t seed,
                   const std::map<std::string, std::uint64_t>& trace_seeds,
                   const std::vector<std::pair<std::string, std::string>>& extra) {
  fs::create_directories(dir);
  std::ostringstream m;
  m << "stage = " << to_string(stage) << "\n";
  m << "seed = " << seed << "\n";
  m << "interpolated = " << (ds.interpolated ? "true" : "false") << "\n";
  for (const auto& [k, v] : extra) m << k << " = " << v << "\n";
  std::string ids;
  for (const Trace* t : ds.traces()) ids += (ids.empty() ? "" : ", ") + t->id;
  m << "traces = " << ids << "\n";
  for (const Trace* t : ds.traces()) {
    const std::string file = t->id + ".csv";
    write_trace_csv(dir / file, *t);
    const std::string p = "trace." + t->id + ".";
    m << p << "file = " << file << "\n";
    m << p << "kind = " << to_string(t->kind) << "\n";
    if (t->pump_index >= 0) m << p << "pump_index = " << t->pump_index << "\n";
    if (t->pump_ratio) m << p << "pump_ratio = " << format_double(*t->pump_ratio) << "\n";
    if (t->pump_power_w) m << p << "pump_power_w = " << format_double(*t->pump_power_w) << "\n";
    if (const auto it = trace_seeds.find(t->id); it != trace_seeds.end()) {
      m << p << "seed = " << it->second << "\n";
    }
    m << p << "dark_subtracted = " << (t->dark_subtracted ? "true" : "false") << "\n";
    m << p << "interpolated = " << (t->interpolated ? "true" : "false") << "\n";
    m << p << "degenerate = " << (t->degenerate ? "true" : "false") << "\n";
    m << p << "floored_bins = " << t->floored_bins << "\n";
    if (!t->reference_id.empty()) m << p << "reference = " << t->reference_id << "\n";
    if (!t->relative_variance.empty()) {
      const std::string vfile = t->id + "_variance.csv";
      write_variance_csv(dir / vfile, *t);
      m << p << "variance_file = " << vfile << "\n";
    }
  }
  write_text(dir / std::string(kManifestName), m.str());
}

DatasetFiles read_dataset(const fs::path& dir) {
  const fs::path mpath = dir / std::string(kManifestName);
  if (!fs::exists(mpath)) throw DataError("dataset '" + dir.string() + "' has no " + std::string(kManifestName));
  const std::string origin = mpath.string();
  const auto m = parse_key_values(read_text(mpath), origin);

  DatasetFiles out;
  const std::string stage = get(m, "stage", origin);
  if (stage == "raw") {
    out.stage = DatasetStage::Raw;
  } else if (stage == "processed") {
    out.stage = DatasetStage::Processed;
  } else {
    throw DataError(origin + ": unknown stage '" + stage + "'");
  }
  out.seed = static_cast<std::uint64_t>(parse_number(get(m, "seed", origin), origin));

  std::vector<Trace> traces;
  std::string list = get(m, "traces", origin);
  std::stringstream ss(list);
  std::string id;
  while (std::getline(ss, id, ',')) {
    id = std::string(trim(id));
    if (id.empty()) continue;
    const std::string p = "trace." + id + ".";
    const fs::path file = dir / get(m, p + "file", origin);
    const std::string kind = get(m, p + "kind", origin);
    if (!fs::exists(file)) {
      throw DataError("dataset '" + dir.string() + "': " + kind + " trace file '" + file.filename().string() +
                      "' listed in the manifest is missing");
    }
    Trace t = read_trace_csv(file);
    t.id = id;
    if (std::string(to_string(t.kind)) != kind) {
      throw DataError(file.string() + ": kind column '" + std::string(to_string(t.kind)) +
                      "' disagrees with manifest kind '" + kind + "'");
    }
    auto opt = [&](const std::string& key) -> const std::string* {
      const auto it = m.find(p + key);
      return it == m.end() ? nullptr : &it->second;
    };
    if (auto v = opt("pump_index")) t.pump_index = static_cast<int>(parse_number(*v, origin));
    if (auto v = opt("pump_ratio")) t.pump_ratio = parse_number(*v, origin);
    if (auto v = opt("pump_power_w")) t.pump_power_w = parse_number(*v, origin);
    if (auto v = opt("dark_subtracted")) t.dark_subtracted = parse_flag(*v, origin);
    if (auto v = opt("interpolated")) t.interpolated = parse_flag(*v, origin);
    if (auto v = opt("degenerate")) t.degenerate = parse_flag(*v, origin);
    if (auto v = opt("floored_bins")) t.floored_bins = static_cast<std::size_t>(parse_number(*v, origin));
    if (auto v = opt("reference")) t.reference_id = *v;
    if (auto v = opt("variance_file")) t.relative_variance = read_variance_csv(dir / *v, t);
    traces.push_back(std::move(t));
  }
  if (traces.empty()) throw DataError(origin + ": manifest lists no traces");
  out.dataset = align(std::move(traces));
  if (const auto it = m.find("interpolated"); it != m.end() && parse_flag(it->second, origin)) {
    out.dataset.interpolated = true;
  }
  return out;
}

void Report::add(std::string key, std::string value) { machine.emplace_back(std::move(key), std::move(value)); }

void Report::add(std::string key, double value) { add(std::move(key), format_double(value)); }

std::string Report::text() const {
  std::string out = human;
  if (!out.empty() && out.back() != '\n') out += '\n';
  out += "\n[machine]\n";
  for (const auto& [k, v] : machine) out += k + " = " + v + "\n";
  return out;
}

MachineBlock parse_machine_block(std::string_view text) {
  const auto at = text.find("\n[machine]\n");
  std::string_view body;
  if (text.rfind("[machine]\n", 0) == 0) {
    body = text.substr(10);
  } else if (at != std::string_view::npos) {
    body = text.substr(at + 11);
  } else {
    throw DataError("report has no [machine] block");
  }
  return parse_key_values(body, "[machine]");
}

MachineBlock read_machine_block(const fs::path& path) {
  try {
    return parse_machine_block(read_text(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

double machine_double(const MachineBlock& m, const std::string& key) {
  const auto it = m.find(key);
  if (it == m.end()) throw DataError("report is missing '" + key + "'");
  return parse_number(it->second, "report key '" + key + "'");
}

void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write '" + path.string() + "'");
  os << text;
  if (!os) throw DataError("failed writing '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_histogram_csv(const fs::path& path, const Histogram& h) {
  std::ostringstream os;
  os << "bin_lo,bin_hi,count\n";
  const double n = static_cast<double>(h.counts.size());
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    const double lo = h.lo + (h.hi - h.lo) * static_cast<double>(i) / n;
    const double hi = h.lo + (h.hi - h.lo) * static_cast<double>(i + 1) / n;
    os << fmt(lo) << ',' << fmt(hi) << ',' << h.counts[i] << '\n';
  }
  write_text(path, os.str());
}

void write_residual_csv(const fs::path& path, const std::vector<TraceResidual>& traces) {
  std::ostringstream os;
  os << "trace,quadrature,pump_index,frequency_hz,residual_db\n";
  for (const TraceResidual& t : traces) {
    const char* q = t.quadrature == Quadrature::Squeezed ? "squeezed" : "antisqueezed";
    for (std::size_t i = 0; i < t.frequency_hz.size(); ++i) {
      os << t.id << ',' << q << ',' << t.pump << ',' << fmt(t.frequency_hz[i]) << ',' << fmt(t.residual_db[i])
         << '\n';
    }
  }
  write_text(path, os.str());
}

void append_fit(Report& r, const FitResult& fit, const std::string& prefix) {
  const GoodnessReport g = goodness(fit);
  std::ostringstream os;
  char line[200];
  std::snprintf(line, sizeof line, "%-14s %18s %14s  %s\n", "parameter", "value", "stddev", "status");
  os << line;
  const std::size_t n = fit.estimate.size();
  const Eigen::VectorXd v = fit.estimate.pack();
  for (std::size_t i = 0; i < n; ++i) {
    const bool free = fit.free[i];
    std::snprintf(line, sizeof line, "%-14s %18.10g %14.4g  %s\n", parameter_name(i).c_str(), v[static_cast<Eigen::Index>(i)],
                  free ? fit.stddev(i) : 0.0, free ? "free" : "fixed");
    os << line;
  }
  std::snprintf(line, sizeof line, "termination %s after %d iterations (%s)\n", fit.termination.c_str(),
                fit.iterations, fit.converged ? "converged" : "NOT converged");
  os << line;
  std::snprintf(line, sizeof line, "chi2 %.6g  dof %zu  reduced %.6g  rms %.4g dB\n", g.chi_squared,
                g.degrees_of_freedom, g.reduced_chi_squared, g.overall_rms_db);
  os << line;
  for (const auto& [id, rms] : g.trace_rms_db) {
    std::snprintf(line, sizeof line, "  rms %-20s %.4g dB\n", id.c_str(), rms);
    os << line;
  }
  for (const std::string& w : fit.weak_directions) os << "  " << w << "\n";
  for (const std::string& w : fit.warnings) os << "warning: " << w << "\n";
  r.human += os.str();

  for (std::size_t i = 0; i < n; ++i) {
    const std::string p = prefix + "param." + parameter_name(i) + ".";
    r.add(p + "value", v[static_cast<Eigen::Index>(i)]);
    r.add(p + "stddev", fit.free[i] ? fit.stddev(i) : 0.0);
    r.add(p + "free", std::string(fit.free[i] ? "true" : "false"));
  }
  r.add(prefix + "termination", fit.termination);
  r.add(prefix + "converged", std::string(fit.converged ? "true" : "false"));
  r.add(prefix + "iterations", std::to_string(fit.iterations));
  r.add(prefix + "cost", fit.cost);
  r.add(prefix + "chi2", g.chi_squared);
  r.add(prefix + "reduced_chi2", g.reduced_chi_squared);
  r.add(prefix + "dof", std::to_string(g.degrees_of_freedom));
  r.add(prefix + "data_count", std::to_string(fit.data_count));
  r.add(prefix + "free_count", std::to_string(fit.free_count));
  r.add(prefix + "sigma_absolute", std::string(fit.sigma_absolute ? "true" : "false"));
  r.add(prefix + "rms_db", g.overall_rms_db);
  r.add(prefix + "rank_deficient", std::string(fit.rank_deficient ? "true" : "false"));
  for (std::size_t i = 0; i < fit.weak_directions.size(); ++i) {
    r.add(prefix + "weak." + std::to_string(i), fit.weak_directions[i]);
  }
  for (std::size_t i = 0; i < fit.warnings.size(); ++i) {
    r.add(prefix + "warning." + std::to_string(i), fit.warnings[i]);
  }
}

Report fit_report(const FitResult& fit, const FitOptions& options, std::string_view title) {
  Report r;
  r.human = std::string(title) + " (" + std::string(to_string(options.residual_space)) + " residuals, " +
            std::string(to_string(options.weights)) + " weights)\n";
  r.add("residual_space", std::string(to_string(options.residual_space)));
  r.add("weights", std::string(to_string(options.weights)));
  r.add("pump_count", std::to_string(fit.estimate.pump_ratios.size()));
  append_fit(r, fit, "");
  return r;
}

Report calibration_report(const CalibrationReport& rep, const CalibrationInput& in) {
  Report r;
  std::ostringstream os;
  char line[200];
  os << "photodiode quantum efficiency (" << to_string(rep.mode) << " accounting)\n";
  std::snprintf(line, sizeof line, "  qe = %.4f %%  k=2 interval [%.4f, %.4f] %%  (+%.4f / -%.4f)\n", 100 * rep.qe,
                100 * rep.lower, 100 * rep.upper, 100 * (rep.upper - rep.qe), 100 * (rep.qe - rep.lower));
  os << line;
  std::snprintf(line, sizeof line, "  multiplicative %.4f %%  additive %.4f %%  difference %.4f %%\n",
                100 * rep.qe_multiplicative, 100 * rep.qe_additive,
                100 * (rep.qe_additive - rep.qe_multiplicative));
  os << line;
  std::snprintf(line, sizeof line, "  eta_tot = %.4f %% (+%.4f / -%.4f), %s\n", 100 * rep.eta_tot.value,
                100 * rep.eta_tot.plus, 100 * rep.eta_tot.minus,
                std::string(to_string(rep.eta_tot.distribution)).c_str());
  os << line;
  std::snprintf(line, sizeof line, "  Monte Carlo: %zu samples, mean %.5f, median %.5f, %zu above 1 (%.3g %%)\n",
                rep.mc.samples, rep.mc.mean, rep.mc.median, rep.mc.above_one, 100 * rep.mc.above_one_fraction);
  os << line;
  os << "\n" << ledger_report(in);
  for (const std::string& w : rep.warnings) os << "warning: " << w << "\n";
  r.human = os.str();

  r.add("mode", std::string(to_string(rep.mode)));
  r.add("qe", rep.qe);
  r.add("lower", rep.lower);
  r.add("upper", rep.upper);
  r.add("half_width", 0.5 * (rep.upper - rep.lower));
  r.add("qe_multiplicative", rep.qe_multiplicative);
  r.add("qe_additive", rep.qe_additive);
  r.add("mode_difference", rep.qe_additive - rep.qe_multiplicative);
  r.add("eta_tot.value", rep.eta_tot.value);
  r.add("eta_tot.plus", rep.eta_tot.plus);
  r.add("eta_tot.minus", rep.eta_tot.minus);
  r.add("distribution", std::string(to_string(rep.eta_tot.distribution)));
  r.add("mc.samples", std::to_string(rep.mc.samples));
  r.add("mc.seed", std::to_string(in.mc.seed));
  r.add("mc.mean", rep.mc.mean);
  r.add("mc.median", rep.mc.median);
  r.add("mc.lower_unclipped", rep.mc.lower_unclipped);
  r.add("mc.upper_unclipped", rep.mc.upper_unclipped);
  r.add("mc.above_one", std::to_string(rep.mc.above_one));
  r.add("mc.above_one_fraction", rep.mc.above_one_fraction);
  r.add("mc.max_unclipped", rep.mc.max_unclipped);
  const LedgerTable& t = rep.ledger;
  for (const LedgerRow& row : t.rows) {
    const std::string p = "ledger." + row.name + ".";
    r.add(p + "role", std::string(to_string(row.role)));
    r.add(p + "efficiency", row.efficiency);
    r.add(p + "loss", row.loss);
    r.add(p + "loss_plus", row.loss_plus);
    r.add(p + "loss_minus", row.loss_minus);
  }
  r.add("ledger.total_loss", t.total_loss);
  r.add("ledger.accounted_additive", t.accounted_additive);
  r.add("ledger.accounted_multiplicative", t.accounted_multiplicative);
  r.add("ledger.residual_additive", t.residual_additive);
  r.add("ledger.residual_multiplicative", t.residual_multiplicative);
  for (std::size_t i = 0; i < rep.warnings.size(); ++i) r.add("warning." + std::to_string(i), rep.warnings[i]);
  return r;
}

}  // namespace sqzcal
