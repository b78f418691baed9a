#include "sqzcal/calib.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include "sqzcal/error.hpp"
#include "sqzcal/rng.hpp"

namespace sqzcal {

namespace {

constexpr LossRole kRequiredRoles[] = {LossRole::Escape, LossRole::Visibility, LossRole::Lens};

void check_ledger(const LossLedger& ledger) {
  for (LossRole r : kRequiredRoles) {
    if (!ledger.contains(r)) {
      throw DataError("calibration ledger is missing the '" + std::string(to_string(r)) + "' entry");
    }
  }
  if (ledger.contains(LossRole::Photodiode)) {
    throw DataError("calibration ledger must not contain a photodiode entry: it is the quantity inferred");
  }
}

double qe_from(double eta_tot, const std::vector<double>& efficiencies, AccountingMode mode) {
  if (mode == AccountingMode::Multiplicative) {
    double product = 1.0;
    for (double e : efficiencies) product *= e;
    return eta_tot / product;
  }
  double accounted = 0.0;
  for (double e : efficiencies) accounted += 1.0 - e;
  return 1.0 - ((1.0 - eta_tot) - accounted);
}

double draw(const UncertainValue& u, Rng& rng) {
  if (u.exact()) return u.value;
  const double width = u.plus + u.minus;
  switch (u.distribution) {
    case Distribution::SplitUniform:
      return u.lower() + width * rng.uniform();
    case Distribution::SplitNormal: {
      const double z = std::abs(rng.normal());
      const bool left = rng.uniform() * width < u.minus;
      return left ? u.value - z * 0.5 * u.minus : u.value + z * 0.5 * u.plus;
    }
  }
  return u.value;
}

double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(h));
  if (i + 1 >= sorted.size()) return sorted.back();
  return sorted[i] + (h - static_cast<double>(i)) * (sorted[i + 1] - sorted[i]);
}

std::string pct(double v, int prec = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, 100.0 * v);
  return buf;
}

}  // namespace

std::string_view to_string(AccountingMode m) {
  return m == AccountingMode::Multiplicative ? "multiplicative" : "additive";
}

AccountingMode accounting_mode_from_string(std::string_view s) {
  if (s == "multiplicative") return AccountingMode::Multiplicative;
  if (s == "additive") return AccountingMode::Additive;
  throw UsageError("unknown accounting mode '" + std::string(s) + "' (multiplicative | additive)");
}

double qe_point(const UncertainValue& eta_tot, const LossLedger& ledger, AccountingMode mode) {
  check_ledger(ledger);
  std::vector<double> eff;
  for (const LossEntry& e : ledger.entries()) eff.push_back(e.efficiency());
  return qe_from(eta_tot.value, eff, mode);
}

McSummary mc_propagate(const CalibrationInput& in) {
  check_ledger(in.ledger);
  in.eta_tot.validate();
  const std::size_t n = in.mc.samples;
  if (n < kMinMonteCarloSamples) {
    throw DomainError("mc_propagate: need at least " + std::to_string(kMinMonteCarloSamples) + " samples");
  }

  const std::vector<LossEntry>& entries = in.ledger.entries();
  std::vector<double> samples(n);
  const std::size_t blocks = (n + kMonteCarloBlock - 1) / kMonteCarloBlock;

  auto run_block = [&](std::size_t b) {
    Rng rng(derive_seed(in.mc.seed, b));
    std::vector<double> eff(entries.size());
    const std::size_t end = std::min(n, (b + 1) * kMonteCarloBlock);
    for (std::size_t i = b * kMonteCarloBlock; i < end; ++i) {
      const double eta = draw(in.eta_tot, rng);
      for (std::size_t e = 0; e < entries.size(); ++e) {
        eff[e] = entries[e].efficiency_at(draw(entries[e].measured, rng));
      }
      samples[i] = qe_from(eta, eff, in.mode);
    }
  };

  std::size_t threads = in.mc.threads == 0 ? std::max(1u, std::thread::hardware_concurrency())
                                           : in.mc.threads;
  threads = std::min(threads, blocks);
  if (threads <= 1) {
    for (std::size_t b = 0; b < blocks; ++b) run_block(b);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t b = t; b < blocks; b += threads) run_block(b);
      });
    }
    for (std::thread& th : pool) th.join();
  }

  McSummary s;
  s.samples = n;
  double sum = 0.0;
  for (double q : samples) {
    sum += q;
    if (q > 1.0) ++s.above_one;
  }
  s.mean = sum / static_cast<double>(n);
  s.above_one_fraction = static_cast<double>(s.above_one) / static_cast<double>(n);

  std::sort(samples.begin(), samples.end());
  const double tail = 0.5 * (1.0 - kCoverageK2);
  s.median = std::min(quantile_sorted(samples, 0.5), 1.0);
  s.lower_unclipped = quantile_sorted(samples, tail);
  s.upper_unclipped = quantile_sorted(samples, 1.0 - tail);
  s.lower = std::min(s.lower_unclipped, 1.0);
  s.upper = std::min(s.upper_unclipped, 1.0);
  s.half_width = 0.5 * (s.upper - s.lower);
  s.max_unclipped = samples.back();

  const std::size_t bins = std::max<std::size_t>(1, in.mc.histogram_bins);
  s.histogram.lo = samples.front();
  s.histogram.hi = samples.back();
  s.histogram.counts.assign(bins, 0);
  const double span = s.histogram.hi - s.histogram.lo;
  for (double q : samples) {
    std::size_t b = span > 0.0 ? static_cast<std::size_t>((q - s.histogram.lo) / span * static_cast<double>(bins)) : 0;
    s.histogram.counts[std::min(b, bins - 1)]++;
  }
  return s;
}

LedgerTable ledger_table(const CalibrationInput& in) {
  LedgerTable t;
  t.total_loss = 1.0 - in.eta_tot.value;
  double product = 1.0;
  for (const LossEntry& e : in.ledger.entries()) {
    const UncertainValue eff = e.efficiency_value();
    product *= eff.value;
    t.accounted_additive += 1.0 - eff.value;
    if (eff.value == 1.0 && eff.exact()) continue;
    t.rows.push_back(LedgerRow{e.name, e.role, eff.value, 1.0 - eff.value, eff.minus, eff.plus});
  }
  t.accounted_multiplicative = 1.0 - product;
  t.residual_additive = t.total_loss - t.accounted_additive;
  t.residual_multiplicative = 1.0 - in.eta_tot.value / product;
  return t;
}

std::string ledger_report(const CalibrationInput& in) {
  const LedgerTable t = ledger_table(in);
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-24s %-11s %10s %10s %10s\n", "component", "role", "loss %",
                "+ %", "- %");
  os << line;
  for (const LedgerRow& r : t.rows) {
    std::snprintf(line, sizeof line, "%-24s %-11s %10s %10s %10s\n", r.name.c_str(),
                  std::string(to_string(r.role)).c_str(), pct(r.loss).c_str(), pct(r.loss_plus).c_str(),
                  pct(r.loss_minus).c_str());
    os << line;
  }
  const UncertainValue& eta = in.eta_tot;
  std::snprintf(line, sizeof line, "%-24s %-11s %10s %10s %10s\n", "total (1 - eta_tot)", "",
                pct(t.total_loss).c_str(), pct(eta.minus).c_str(), pct(eta.plus).c_str());
  os << line;
  std::snprintf(line, sizeof line, "%-36s %10s\n", "accounted (additive)", pct(t.accounted_additive).c_str());
  os << line;
  std::snprintf(line, sizeof line, "%-36s %10s\n", "accounted (multiplicative)",
                pct(t.accounted_multiplicative).c_str());
  os << line;
  std::snprintf(line, sizeof line, "%-36s %10s\n", "photodiode loss (additive)", pct(t.residual_additive).c_str());
  os << line;
  std::snprintf(line, sizeof line, "%-36s %10s\n", "photodiode loss (multiplicative)",
                pct(t.residual_multiplicative).c_str());
  os << line;
  return os.str();
}

CalibrationReport calibrate_qe(const CalibrationInput& in) {
  check_ledger(in.ledger);
  CalibrationReport rep;
  rep.mode = in.mode;
  rep.eta_tot = in.eta_tot;
  rep.qe_multiplicative = qe_point(in.eta_tot, in.ledger, AccountingMode::Multiplicative);
  rep.qe_additive = qe_point(in.eta_tot, in.ledger, AccountingMode::Additive);
  const double central = in.mode == AccountingMode::Multiplicative ? rep.qe_multiplicative : rep.qe_additive;
  rep.mc = mc_propagate(in);
  rep.ledger = ledger_table(in);

  if (rep.mc.lower_unclipped > 1.0) {
    std::ostringstream os;
    os.precision(6);
    os << "inconsistent inputs: qe = " << central << " and its entire k=2 interval ["
       << rep.mc.lower_unclipped << ", " << rep.mc.upper_unclipped
       << "] exceed 1; eta_tot is larger than the ledger allows";
    throw PhysicsError(os.str());
  }
  rep.qe = std::min(central, 1.0);
  if (central > 1.0) {
    rep.warnings.push_back("central qe exceeds 1 and was clipped; eta_tot is in tension with the ledger");
  }
  if (rep.mc.above_one > 0) {
    rep.warnings.push_back(std::to_string(rep.mc.above_one) + " Monte Carlo samples exceeded qe = 1 and were clipped");
  }
  rep.lower = std::min(rep.mc.lower, rep.qe);
  rep.upper = std::max(rep.mc.upper, rep.qe);
  return rep;
}

}  // namespace sqzcal
