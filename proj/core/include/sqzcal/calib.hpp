#pragma once

// Absolute photodiode quantum efficiency from the fitted total detection
// efficiency and an independently measured loss ledger, with Monte Carlo
// propagation of asymmetric input tolerances to a k = 2 interval.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sqzcal/budget.hpp"

namespace sqzcal {

enum class AccountingMode {
  Multiplicative,  // qe = eta_tot / prod(component efficiencies)
  Additive,        // qe = 1 - (loss_tot - sum(component losses))
};

std::string_view to_string(AccountingMode m);
AccountingMode accounting_mode_from_string(std::string_view s);

// Central 95.45 % coverage, the two-sided equivalent of k = 2.
inline constexpr double kCoverageK2 = 0.9544997361036416;

struct MonteCarloSettings {
  std::size_t samples = 1'000'000;
  std::uint64_t seed = 1;
  // Worker threads; 0 picks hardware concurrency. Results do not depend on it.
  std::size_t threads = 0;
  std::size_t histogram_bins = 200;

  bool operator==(const MonteCarloSettings&) const = default;
};

inline constexpr std::size_t kMinMonteCarloSamples = 10'000;
// Samples per independently seeded block.
inline constexpr std::size_t kMonteCarloBlock = 1u << 14;

struct CalibrationInput {
  UncertainValue eta_tot;
  LossLedger ledger;
  AccountingMode mode = AccountingMode::Multiplicative;
  MonteCarloSettings mc;
};

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::size_t> counts;
};

struct McSummary {
  std::size_t samples = 0;
  double mean = 0.0;
  double median = 0.0;
  double lower = 0.0;  // 2.275 % quantile of clipped samples
  double upper = 0.0;  // 97.725 % quantile of clipped samples
  double half_width = 0.0;
  double lower_unclipped = 0.0;
  double upper_unclipped = 0.0;
  std::size_t above_one = 0;  // unphysical samples (qe > 1) before clipping
  double above_one_fraction = 0.0;
  double max_unclipped = 0.0;
  Histogram histogram;  // of unclipped samples
};

struct LedgerRow {
  std::string name;
  LossRole role = LossRole::Other;
  double efficiency = 1.0;
  double loss = 0.0;        // 1 - efficiency
  double loss_plus = 0.0;   // loss interval offsets
  double loss_minus = 0.0;
};

struct LedgerTable {
  std::vector<LedgerRow> rows;
  double total_loss = 0.0;               // 1 - eta_tot
  double accounted_additive = 0.0;       // sum of component losses
  double accounted_multiplicative = 0.0; // 1 - product of efficiencies
  double residual_additive = 0.0;        // loss left for the photodiode
  double residual_multiplicative = 0.0;
};

struct CalibrationReport {
  AccountingMode mode = AccountingMode::Multiplicative;
  double qe = 0.0;  // central value in the selected mode
  double qe_multiplicative = 0.0;
  double qe_additive = 0.0;
  double lower = 0.0;  // k = 2 interval, selected mode
  double upper = 0.0;
  McSummary mc;
  LedgerTable ledger;
  UncertainValue eta_tot;
  std::vector<std::string> warnings;
};

// Central qe from central inputs. Requires escape, visibility and lens roles.
double qe_point(const UncertainValue& eta_tot, const LossLedger& ledger, AccountingMode mode);

// Samples every input per its distribution tag, evaluates qe in in.mode and
// summarizes. Deterministic in (input, seed); independent of thread count.
McSummary mc_propagate(const CalibrationInput& in);

// Throws DataError on missing ledger roles and PhysicsError when the whole
// k = 2 interval lies above qe = 1.
CalibrationReport calibrate_qe(const CalibrationInput& in);

LedgerTable ledger_table(const CalibrationInput& in);

// Human-readable loss budget. Exact unit-efficiency entries are omitted.
std::string ledger_report(const CalibrationInput& in);

}  // namespace sqzcal
