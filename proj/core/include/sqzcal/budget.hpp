#pragma once

// Optical loss ledger: uncertain efficiencies, their multiplicative
// composition, and round-trip cavity loss accounting.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sqzcal {

// How an asymmetric tolerance is read when it is sampled.
//  - SplitUniform: uniform on [v - minus, v + plus].
//  - SplitNormal: two half-Gaussians joined continuously at v with
//    sigma_minus = minus / 2 and sigma_plus = plus / 2 (bounds read as 2 sigma).
enum class Distribution { SplitUniform, SplitNormal };

std::string_view to_string(Distribution d);
Distribution distribution_from_string(std::string_view s);

struct UncertainValue {
  double value = 0.0;
  double plus = 0.0;   // offset above value, >= 0
  double minus = 0.0;  // offset below value, >= 0
  Distribution distribution = Distribution::SplitUniform;

  double upper() const { return value + plus; }
  double lower() const { return value - minus; }
  bool exact() const { return plus == 0.0 && minus == 0.0; }

  // Offsets must be non-negative.
  void validate() const;
  // Additionally requires the whole interval to lie in [0, 1].
  void validate_efficiency() const;

  bool operator==(const UncertainValue&) const = default;
};

enum class LossRole { Escape, Visibility, Lens, Photodiode, Other };

std::string_view to_string(LossRole r);
LossRole loss_role_from_string(std::string_view s);

// Maps the measured quantity of an entry onto a power efficiency.
enum class EfficiencyTransform {
  Identity,  // the entry already is a power efficiency
  Square,    // fringe visibility V -> mode-overlap efficiency V^2
};

struct LossEntry {
  std::string name;
  LossRole role = LossRole::Other;
  UncertainValue measured;
  EfficiencyTransform transform = EfficiencyTransform::Identity;

  double efficiency() const { return efficiency_at(measured.value); }
  double efficiency_at(double measured_value) const;
  // Efficiency interval obtained by mapping the measured bounds.
  UncertainValue efficiency_value() const;
  double loss() const { return 1.0 - efficiency(); }
};

class LossLedger {
 public:
  LossLedger() = default;

  // Throws DomainError on a duplicate non-Other role or an entry whose
  // efficiency interval leaves (0, 1].
  void add(LossEntry entry);

  const std::vector<LossEntry>& entries() const { return entries_; }
  bool contains(LossRole role) const;
  const LossEntry* find(LossRole role) const;
  bool empty() const { return entries_.empty(); }

 private:
  std::vector<LossEntry> entries_;
};

LossEntry efficiency_entry(std::string name, LossRole role, UncertainValue efficiency);
LossEntry visibility_entry(UncertainValue fringe_visibility);

// Mode-overlap power efficiency V^2 of a homodyne readout with fringe
// visibility V.
double visibility_efficiency(double visibility);

// Product of the central efficiencies of all entries whose role is listed.
// Selecting Other multiplies every Other entry. Empty selection gives 1.
// Throws DataError when a requested role is absent.
double compose(const LossLedger& ledger, std::span<const LossRole> roles);

// One intracavity loss mechanism, counted `passes` times per round trip.
struct LossComponent {
  std::string name;
  UncertainValue loss_ppm;  // per pass
  double passes = 1.0;

  bool operator==(const LossComponent&) const = default;
};

// Bulk absorption expressed per unit length.
LossComponent absorption_component(std::string name, UncertainValue ppm_per_cm, double length_cm,
                                   double passes);

// Sum of loss x passes, as a fraction. Additive in the small-loss limit.
double round_trip_loss(std::span<const LossComponent> components);

}  // namespace sqzcal
