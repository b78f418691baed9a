#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles/spectrum_oracle.hpp"
#include "sqzcal/model.hpp"

using namespace sqzcal;

namespace {

ModelParams reference(double theta = 1.7e-3) { return ModelParams::from_linewidth(0.975, theta, 84e6); }

QuadraturePair mixed(const ModelParams& p, double x, double f) {
  return apply_phase_noise(quad_variances(p, x, f), p.theta_pn);
}

}  // namespace

TEST(QuadVariances, MatchesLongDoubleOracle) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const double eta = u(gen);
    const double theta = 0.2 * u(gen);
    const double lw = 1e6 * std::pow(10.0, 3.0 * u(gen));
    const double x = 0.999 * u(gen);
    const double f = 1e8 * u(gen);
    const QuadraturePair q = mixed(ModelParams::from_linewidth(eta, theta, lw), x, f);
    const oracle::Pair o = oracle::variances(eta, theta, lw, x, f);
    EXPECT_NEAR(q.v_plus, static_cast<double>(o.plus), 1e-12 * static_cast<double>(o.plus));
    EXPECT_NEAR(q.v_minus, static_cast<double>(o.minus), 1e-12 * static_cast<double>(o.plus));
  }
}

TEST(QuadVariances, ZeroPumpIsVacuum) {
  for (double eta : {0.0, 0.5, 1.0}) {
    for (double f : {0.0, 3e6, 1e9}) {
      const QuadraturePair q = quad_variances(ModelParams::from_linewidth(eta, 0.0, 84e6), 0.0, f);
      EXPECT_EQ(q.v_plus, 1.0);
      EXPECT_EQ(q.v_minus, 1.0);
    }
  }
}

TEST(QuadVariances, HighPumpAtThreeMegahertz) {
  const QuadraturePair q = quad_variances(reference(0.0), 0.835, 3e6);
  EXPECT_NEAR(q.v_minus, 0.0283323535071737, 1e-12);
  EXPECT_NEAR(q.v_plus, 285.296354900838, 1e-9);
  EXPECT_NEAR(db_from_linear(q.v_minus), -15.48, 0.01);
  EXPECT_NEAR(db_from_linear(q.v_plus), 24.55, 0.01);
}

TEST(QuadVariances, MidPumpGivesTenDbWithElevenAntisqueezing) {
  const QuadraturePair q = quad_variances(reference(0.0), 0.339, 3e6);
  EXPECT_NEAR(db_from_linear(q.v_minus), -10.2312118417975, 1e-9);
  EXPECT_NEAR(db_from_linear(q.v_plus), 11.348547405836, 1e-9);
  EXPECT_NEAR(db_from_linear(q.v_minus), -10.2, 0.5);
  EXPECT_NEAR(db_from_linear(q.v_plus), 11.35, 0.5);
}

TEST(QuadVariances, RejectsInvalidInputs) {
  EXPECT_THROW(quad_variances(reference(), 1.0, 3e6), DomainError);
  EXPECT_THROW(quad_variances(reference(), 1.5, 3e6), DomainError);
  EXPECT_THROW(quad_variances(reference(), -0.1, 3e6), DomainError);
  EXPECT_THROW(quad_variances(reference(), 0.5, -1.0), DomainError);
  EXPECT_THROW(quad_variances(ModelParams::from_linewidth(1.1, 0.0, 84e6), 0.5, 3e6), DomainError);
  EXPECT_THROW(quad_variances(ModelParams::from_linewidth(-0.1, 0.0, 84e6), 0.5, 3e6), DomainError);
  EXPECT_THROW(quad_variances(ModelParams::from_linewidth(0.9, 0.0, 0.0), 0.5, 3e6), DomainError);
}

TEST(PhaseNoise, ZeroAngleIsIdentity) {
  const QuadraturePair q{285.3, 0.02833};
  const QuadraturePair r = apply_phase_noise(q, 0.0);
  EXPECT_EQ(r.v_plus, q.v_plus);
  EXPECT_EQ(r.v_minus, q.v_minus);
}

TEST(PhaseNoise, ReferenceMixingRaisesSqueezedLevel) {
  const QuadraturePair r = apply_phase_noise(QuadraturePair{285.296354900838, 0.0283323535071737}, 1.7e-3);
  EXPECT_NEAR(r.v_minus, 0.02915, 1e-5);
  EXPECT_NEAR(db_from_linear(r.v_minus), -15.3526048031911, 1e-9);
  EXPECT_NEAR(db_from_linear(r.v_minus), -15.35, 0.1);
}

TEST(PhaseNoise, QuarterTurnSwapsQuadratures) {
  const QuadraturePair r = apply_phase_noise(QuadraturePair{3.0, 0.25}, kPi / 2.0);
  EXPECT_NEAR(r.v_plus, 0.25, 1e-15);
  EXPECT_NEAR(r.v_minus, 3.0, 1e-15);
}

TEST(PhaseNoise, LargeAngleIsFlagged) {
  Warnings w;
  apply_phase_noise(QuadraturePair{3.0, 0.25}, 0.05, &w);
  EXPECT_TRUE(w.empty());
  apply_phase_noise(QuadraturePair{3.0, 0.25}, 0.2, &w);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_NE(w[0].find("small-angle"), std::string::npos);
  EXPECT_THROW(apply_phase_noise(QuadraturePair{}, -1e-3), DomainError);
}

TEST(Cavity, DecayRateFromComponentLosses) {
  const CavityParams c{0.125, 1222.32e-6, 0.08};
  EXPECT_NEAR(decay_rate(c) / (2.0 * kPi), 75281281.939957, 1e-3);
  EXPECT_NEAR(decay_rate(c) / (2.0 * kPi) / 1e6, 75.3, 0.05);
  CavityParams longer = c;
  longer.round_trip_length_m *= 2.0;
  EXPECT_NEAR(decay_rate(longer), decay_rate(c) / 2.0, 1e-6);
}

TEST(Cavity, ZeroTransmissionAndLossIsDegenerate) {
  Warnings w;
  EXPECT_EQ(decay_rate(CavityParams{0.0, 0.0, 0.08}, &w), 0.0);
  ASSERT_EQ(w.size(), 1u);
}

TEST(Cavity, LinewidthFromFinesse) {
  EXPECT_NEAR(linewidth_from_finesse(3.75e9, 54) / 1e6, 69.4, 0.1);
  EXPECT_NEAR(linewidth_from_finesse(3.75e9, 243) / 1e6, 15.4, 0.1);
  EXPECT_EQ(linewidth_from_finesse(3.75e9, 1.0), 3.75e9);
  EXPECT_THROW(linewidth_from_finesse(3.75e9, 0.0), DomainError);
}

TEST(Cavity, EscapeEfficiency) {
  const double esc = escape_efficiency(CavityParams{0.125, 1222.32e-6, 0.08});
  EXPECT_NEAR(esc, 0.99031613426215, 1e-13);
  EXPECT_GE(esc, 0.9905 - 0.0045);
  EXPECT_LE(esc, 0.9905 + 0.0040);
  EXPECT_EQ(escape_efficiency(CavityParams{0.125, 0.0, 0.08}), 1.0);
  EXPECT_EQ(escape_efficiency(CavityParams{0.1, 0.1, 0.08}), 0.5);
  EXPECT_THROW(escape_efficiency(CavityParams{0.6, 0.5, 0.08}), DomainError);
}

TEST(Decibel, Conversions) {
  EXPECT_EQ(db_from_linear(1.0), 0.0);
  EXPECT_NEAR(db_from_linear(0.03162), -15.0, 1e-3);
  EXPECT_THROW(db_from_linear(0.0), DomainError);
  EXPECT_THROW(db_from_linear(-1.0), DomainError);
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  for (int i = 0; i < 1000; ++i) {
    const double v = std::pow(10.0, u(gen) / 10.0);
    EXPECT_NEAR(linear_from_db(db_from_linear(v)), v, 1e-12 * v);
  }
}

TEST(ModelSpectrum, ThreeReferenceCurvesAtThreeMegahertz) {
  const std::vector<double> grid = linear_grid(3e6, 8e6, 501);
  const ModelCurves low = model_spectrum(reference(), 0.08, grid);
  const ModelCurves mid = model_spectrum(reference(), 0.339, grid);
  const ModelCurves high = model_spectrum(reference(), 0.835, grid);
  EXPECT_NEAR(low.v_minus_db.front(), -4.79137156769858, 1e-9);
  EXPECT_NEAR(mid.v_minus_db.front(), -10.2294190128459, 1e-9);
  EXPECT_NEAR(mid.v_plus_db.front(), 11.3485349419577, 1e-9);
  EXPECT_NEAR(high.v_minus_db.front(), -15.3526048031911, 1e-9);
  EXPECT_NEAR(high.v_plus_db.back(), 19.1657599253698, 1e-9);
}

TEST(ModelSpectrum, ZeroPumpIsFlatZero) {
  const ModelCurves c = model_spectrum(reference(), 0.0, linear_grid(3e6, 8e6, 51));
  for (std::size_t i = 0; i < c.frequency_hz.size(); ++i) {
    EXPECT_EQ(c.v_plus_db[i], 0.0);
    EXPECT_EQ(c.v_minus_db[i], 0.0);
  }
}

TEST(ModelSpectrum, SqueezingDegradesWithFrequency) {
  const ModelCurves c = model_spectrum(reference(), 0.835, linear_grid(3e6, 8e6, 501));
  EXPECT_LT(std::abs(c.v_minus_db.back()), std::abs(c.v_minus_db.front()));
  for (std::size_t i = 1; i < c.v_minus_db.size(); ++i) EXPECT_GT(c.v_minus_db[i], c.v_minus_db[i - 1]);
}

TEST(ModelSpectrum, RejectsBadGrids) {
  const std::vector<double> empty;
  const std::vector<double> unsorted{3e6, 2e6};
  EXPECT_THROW(model_spectrum(reference(), 0.5, empty), DomainError);
  EXPECT_THROW(model_spectrum(reference(), 0.5, unsorted), DomainError);
  EXPECT_THROW(linear_grid(1.0, 1.0, 5), DomainError);
  EXPECT_THROW(linear_grid(1.0, 2.0, 1), DomainError);
}

TEST(ModelProperty, UncertaintyProductBoundAndEquality) {
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    const double eta = u(gen);
    const double theta = kPi / 4.0 * u(gen);
    const double lw = 1e5 * std::pow(10.0, 5.0 * u(gen));
    const double x = u(gen) * 0.999999;
    const double f = 1e9 * u(gen) * u(gen);
    const QuadraturePair q = mixed(ModelParams::from_linewidth(eta, theta, lw), x, f);
    EXPECT_GE(q.v_plus * q.v_minus, 1.0 - 1e-12);

    const QuadraturePair pure = quad_variances(ModelParams::from_linewidth(1.0, 0.0, lw), x, f);
    EXPECT_NEAR(pure.v_plus * pure.v_minus, 1.0, 1e-10);
  }
}

TEST(ModelProperty, VariancesAreAffineInEfficiency) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    const double eta = u(gen);
    const double lw = 1e6 + 1e9 * u(gen);
    const double x = 0.999 * u(gen);
    const double f = 5e7 * u(gen);
    const QuadraturePair one = quad_variances(ModelParams::from_linewidth(1.0, 0.0, lw), x, f);
    const QuadraturePair q = quad_variances(ModelParams::from_linewidth(eta, 0.0, lw), x, f);
    EXPECT_NEAR(q.v_plus, 1.0 + eta * (one.v_plus - 1.0), 1e-12 * one.v_plus);
    EXPECT_NEAR(q.v_minus, 1.0 + eta * (one.v_minus - 1.0), 1e-12);
  }
}

TEST(ModelProperty, PhaseNoiseMonotone) {
  for (double x : {0.08, 0.339, 0.835, 0.99}) {
    const QuadraturePair base = quad_variances(reference(0.0), x, 3e6);
    double prev_minus = 0.0;
    double prev_plus = 1e300;
    for (int k = 0; k <= 200; ++k) {
      const QuadraturePair q = apply_phase_noise(base, kPi / 4.0 * k / 200.0);
      EXPECT_GE(q.v_minus, prev_minus);
      EXPECT_LE(q.v_plus, prev_plus);
      prev_minus = q.v_minus;
      prev_plus = q.v_plus;
    }
  }
}

TEST(ModelProperty, HighFrequencyLimitIsVacuum) {
  for (double x : {0.1, 0.5, 0.99}) {
    const QuadraturePair q = mixed(reference(), x, 1e15);
    EXPECT_NEAR(q.v_plus, 1.0, 1e-9);
    EXPECT_NEAR(q.v_minus, 1.0, 1e-9);
  }
}

TEST(ModelProperty, SqueezingStrictlyDeepensWithPump) {
  double prev = 1.0;
  for (int k = 1; k < 1000; ++k) {
    const double v = quad_variances(reference(0.0), k / 1000.0, 0.0).v_minus;
    EXPECT_LT(v, prev);
    prev = v;
  }
}
