#include "sqzcal/budget.hpp"

#include <algorithm>

#include "sqzcal/error.hpp"

namespace sqzcal {

std::string_view to_string(Distribution d) {
  switch (d) {
    case Distribution::SplitUniform: return "split-uniform";
    case Distribution::SplitNormal: return "split-normal";
  }
  return "?";
}

Distribution distribution_from_string(std::string_view s) {
  if (s == "split-uniform") return Distribution::SplitUniform;
  if (s == "split-normal") return Distribution::SplitNormal;
  throw UsageError("unknown distribution '" + std::string(s) + "' (split-uniform | split-normal)");
}

void UncertainValue::validate() const {
  if (!(plus >= 0.0) || !(minus >= 0.0)) {
    throw DomainError("uncertainty offsets must be non-negative");
  }
}

void UncertainValue::validate_efficiency() const {
  validate();
  if (!(lower() >= 0.0) || !(upper() <= 1.0)) {
    throw DomainError("efficiency interval [" + std::to_string(lower()) + ", " +
                      std::to_string(upper()) + "] leaves [0, 1]");
  }
}

std::string_view to_string(LossRole r) {
  switch (r) {
    case LossRole::Escape: return "escape";
    case LossRole::Visibility: return "visibility";
    case LossRole::Lens: return "lens";
    case LossRole::Photodiode: return "photodiode";
    case LossRole::Other: return "other";
  }
  return "?";
}

LossRole loss_role_from_string(std::string_view s) {
  if (s == "escape") return LossRole::Escape;
  if (s == "visibility") return LossRole::Visibility;
  if (s == "lens") return LossRole::Lens;
  if (s == "photodiode") return LossRole::Photodiode;
  if (s == "other") return LossRole::Other;
  throw UsageError("unknown loss role '" + std::string(s) + "'");
}

double LossEntry::efficiency_at(double measured_value) const {
  switch (transform) {
    case EfficiencyTransform::Identity: return measured_value;
    case EfficiencyTransform::Square: return visibility_efficiency(measured_value);
  }
  return measured_value;
}

UncertainValue LossEntry::efficiency_value() const {
  const double centre = efficiency();
  const double hi = efficiency_at(measured.upper());
  const double lo = efficiency_at(measured.lower());
  return UncertainValue{centre, hi - centre, centre - lo, measured.distribution};
}

void LossLedger::add(LossEntry entry) {
  if (entry.role != LossRole::Other && contains(entry.role)) {
    throw DomainError("loss ledger: role '" + std::string(to_string(entry.role)) +
                      "' already present");
  }
  entry.measured.validate();
  const UncertainValue eff = entry.efficiency_value();
  if (!(eff.value > 0.0 && eff.value <= 1.0) || !(eff.lower() > 0.0) || !(eff.upper() <= 1.0)) {
    throw DomainError("loss ledger: entry '" + entry.name + "' efficiency must lie in (0, 1]");
  }
  entries_.push_back(std::move(entry));
}

bool LossLedger::contains(LossRole role) const { return find(role) != nullptr; }

const LossEntry* LossLedger::find(LossRole role) const {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [role](const LossEntry& e) { return e.role == role; });
  return it == entries_.end() ? nullptr : &*it;
}

LossEntry efficiency_entry(std::string name, LossRole role, UncertainValue efficiency) {
  return LossEntry{std::move(name), role, efficiency, EfficiencyTransform::Identity};
}

LossEntry visibility_entry(UncertainValue fringe_visibility) {
  return LossEntry{"homodyne visibility", LossRole::Visibility, fringe_visibility,
                   EfficiencyTransform::Square};
}

double visibility_efficiency(double visibility) {
  if (!(visibility >= 0.0 && visibility <= 1.0)) {
    throw DomainError("fringe visibility must lie in [0, 1]");
  }
  return visibility * visibility;
}

double compose(const LossLedger& ledger, std::span<const LossRole> roles) {
  double product = 1.0;
  std::vector<LossRole> seen;
  for (LossRole role : roles) {
    if (std::find(seen.begin(), seen.end(), role) != seen.end()) continue;
    seen.push_back(role);
    bool found = false;
    for (const LossEntry& e : ledger.entries()) {
      if (e.role != role) continue;
      product *= e.efficiency();
      found = true;
    }
    if (!found) {
      throw DataError("loss ledger has no '" + std::string(to_string(role)) + "' entry");
    }
  }
  return product;
}

LossComponent absorption_component(std::string name, UncertainValue ppm_per_cm, double length_cm,
                                   double passes) {
  if (!(length_cm >= 0.0)) throw DomainError("absorption length must be non-negative");
  UncertainValue per_pass{ppm_per_cm.value * length_cm, ppm_per_cm.plus * length_cm,
                          ppm_per_cm.minus * length_cm, ppm_per_cm.distribution};
  return LossComponent{std::move(name), per_pass, passes};
}

double round_trip_loss(std::span<const LossComponent> components) {
  double ppm = 0.0;
  for (const LossComponent& c : components) {
    if (!(c.loss_ppm.value >= 0.0) || !(c.passes >= 0.0)) {
      throw DomainError("loss component '" + c.name + "' must be non-negative");
    }
    ppm += c.loss_ppm.value * c.passes;
  }
  return ppm * 1e-6;
}

}  // namespace sqzcal
