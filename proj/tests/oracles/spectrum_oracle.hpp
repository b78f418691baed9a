#pragma once

// Independent long-double reference evaluations used to check the library.
// Written directly from the physics, without reusing any library code.

#include <cmath>

namespace oracle {

struct Pair {
  long double plus;
  long double minus;
};

// OPA quadrature variances with phase-noise mixing. linewidth is the FWHM
// in Hz, so 2 pi f / gamma = f / linewidth.
inline Pair variances(long double eta, long double theta, long double linewidth_hz, long double x,
                      long double f_hz) {
  const long double s = std::sqrt(x);
  const long double w = f_hz / linewidth_hz;
  const long double anti = 1.0L + eta * 4.0L * s / ((1.0L - s) * (1.0L - s) + 4.0L * w * w);
  const long double sqz = 1.0L - eta * 4.0L * s / ((1.0L + s) * (1.0L + s) + 4.0L * w * w);
  const long double c2 = std::cos(theta) * std::cos(theta);
  const long double s2 = std::sin(theta) * std::sin(theta);
  return {anti * c2 + sqz * s2, sqz * c2 + anti * s2};
}

inline long double db(long double v) { return 10.0L * std::log10(v); }

// Squeezed level after dark subtraction and renormalization, for a trace
// read `measured_db` below a raw vacuum reference that itself sits
// `clearance_db` above the dark level.
inline long double dark_corrected_db(long double measured_db, long double clearance_db) {
  const long double d = std::pow(10.0L, -clearance_db / 10.0L);
  const long double s = std::pow(10.0L, measured_db / 10.0L);
  return db((s - d) / (1.0L - d));
}

}  // namespace oracle
