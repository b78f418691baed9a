#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <unistd.h>

#include "sqzcal/config.hpp"
#include "sqzcal/io.hpp"
#include "sqzcal/rng.hpp"

using namespace sqzcal;
namespace fs = std::filesystem;

namespace {

std::string replace_line(std::string text, const std::string& prefix, const std::string& replacement) {
  const std::size_t at = text.find("\n" + prefix);
  EXPECT_NE(at, std::string::npos) << prefix;
  const std::size_t end = text.find('\n', at + 1);
  return text.substr(0, at + 1) + replacement + text.substr(end);
}

std::string usage_message(const std::string& text) {
  try {
    parse_config(text, "test.cfg");
  } catch (const UsageError& e) {
    return e.what();
  }
  return {};
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sqzcal_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Config, ShippedFileMatchesBuiltInDefault) {
  std::ifstream in(std::string(SQZCAL_SOURCE_DIR) + "/configs/reference.cfg");
  ASSERT_TRUE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), default_config_text());
  EXPECT_EQ(load_config(std::string(SQZCAL_SOURCE_DIR) + "/configs/reference.cfg"), default_config());
}

TEST(Config, DefaultCarriesReferenceValues) {
  const RunConfig c = default_config();
  EXPECT_EQ(c.model.eta_tot, 0.975);
  EXPECT_EQ(c.model.theta_pn_rad, 0.0017);
  EXPECT_EQ(c.model.linewidth_hz, 84e6);
  EXPECT_EQ(c.model.pump_ratios, (std::vector<double>{0.08, 0.339, 0.835}));
  EXPECT_EQ(c.analyzer.rbw_hz, 300e3);
  EXPECT_EQ(c.analyzer.vbw_hz, 200.0);
  EXPECT_EQ(c.cavity.coupler_transmission, (UncertainValue{0.125, 0.005, 0.005}));
  EXPECT_EQ(c.ledger.escape, (UncertainValue{0.9905, 0.004, 0.0045}));
  EXPECT_EQ(c.calib.eta_tot, (UncertainValue{0.975, 0.001, 0.001}));
  EXPECT_EQ(c.calib.samples, 1'000'000u);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, RoundTripIsIdentity) {
  const RunConfig c = default_config();
  EXPECT_EQ(parse_config(serialize(c)), c);
  EXPECT_EQ(serialize(parse_config(serialize(c))), serialize(c));

  RunConfig odd = c;
  odd.seed = 18446744073709551615ull;
  odd.model.eta_tot = 0.1 + 0.2;
  odd.model.linewidth_hz = 84e6 / 3.0;
  odd.model.pump_ratios = {1.0 / 3.0, 2.0 / 7.0};
  odd.ledger.other.push_back({"fiber", {0.97, 0.01 / 3.0, 0.02}});
  odd.ledger.distribution = Distribution::SplitNormal;
  odd.fit.mode = FitMode::PerCurve;
  odd.fit.options.fixed = {{"theta_pn", 0.0}, {"x_1", 0.3}};
  odd.fit.options.residual_space = ResidualSpace::Linear;
  odd.calib.mode = AccountingMode::Additive;
  odd.analyzer.zero_scatter = true;
  odd.process.subtract = false;
  EXPECT_EQ(parse_config(serialize(odd)), odd);
}

TEST(Config, UnknownKeyNamesKeyAndLine) {
  const std::string text = replace_line(std::string(default_config_text()), "model.eta_tot", "model.eta_tott = 0.975");
  const std::string msg = usage_message(text);
  EXPECT_NE(msg.find("unknown key 'model.eta_tott'"), std::string::npos) << msg;
  EXPECT_NE(msg.find("test.cfg:"), std::string::npos) << msg;
}

TEST(Config, DuplicateKeyIsError) {
  const std::string text = std::string(default_config_text()) + "seed = 2\n";
  EXPECT_NE(usage_message(text).find("seed"), std::string::npos);
}

TEST(Config, MissingPhysicsKeyIsError) {
  const std::string text = replace_line(std::string(default_config_text()), "ledger.lens", "");
  const std::string msg = usage_message(text);
  EXPECT_NE(msg.find("missing"), std::string::npos) << msg;
  EXPECT_NE(msg.find("ledger.lens"), std::string::npos) << msg;
}

TEST(Config, UncertainValuesNeedBothBounds) {
  EXPECT_FALSE(usage_message(replace_line(std::string(default_config_text()), "ledger.lens", "ledger.lens = 0.998"))
                   .empty());
  EXPECT_FALSE(
      usage_message(replace_line(std::string(default_config_text()), "ledger.lens", "ledger.lens = 0.998 +0.0001"))
          .empty());
  EXPECT_EQ(parse_uncertain("0.5 +0.1 -0.2"), (UncertainValue{0.5, 0.1, 0.2}));
  EXPECT_EQ(parse_uncertain(format_uncertain({0.9905, 0.004, 0.0045})), (UncertainValue{0.9905, 0.004, 0.0045}));
  EXPECT_THROW(parse_uncertain("0.5"), UsageError);
  EXPECT_THROW(parse_uncertain("0.5 +x -0.1"), UsageError);
  EXPECT_THROW(parse_uncertain(""), UsageError);
}

TEST(Config, MalformedLinesAndValues) {
  EXPECT_FALSE(usage_message(std::string(default_config_text()) + "this line has no equals\n").empty());
  EXPECT_FALSE(
      usage_message(replace_line(std::string(default_config_text()), "grid.points", "grid.points = many")).empty());
  EXPECT_FALSE(
      usage_message(replace_line(std::string(default_config_text()), "model.eta_tot", "model.eta_tot = 1.5")).empty());
  EXPECT_NE(usage_message(replace_line(std::string(default_config_text()), "calib.samples", "calib.samples = 10"))
                .find("calib.samples"),
            std::string::npos);
}

TEST(Config, EnvironmentVariableSelectsDefaultFile) {
  const fs::path dir = scratch_dir("env");
  const fs::path file = dir / "alt.cfg";
  {
    std::ofstream out(file);
    out << replace_line(std::string(default_config_text()), "seed", "seed = 99");
  }
  ::unsetenv(kConfigEnvVar);
  EXPECT_EQ(resolve_config(std::nullopt).seed, 1u);
  ::setenv(kConfigEnvVar, file.c_str(), 1);
  EXPECT_EQ(resolve_config(std::nullopt).seed, 99u);
  EXPECT_EQ(resolve_config(std::string(SQZCAL_SOURCE_DIR) + "/configs/reference.cfg").seed, 1u);
  ::setenv(kConfigEnvVar, (dir / "missing.cfg").c_str(), 1);
  EXPECT_THROW(resolve_config(std::nullopt), UsageError);
  ::unsetenv(kConfigEnvVar);
  fs::remove_all(dir);
}

TEST(Config, CavitySummaryArithmetic) {
  const CavitySummary s = summarize(default_config().cavity);
  EXPECT_NEAR(s.round_trip_loss, 1222.32e-6, 1e-15);
  EXPECT_NEAR(s.escape_efficiency, 0.99031613426215, 1e-13);
  EXPECT_NEAR(s.escape_lower, 0.985850417573375, 1e-13);
  EXPECT_NEAR(s.escape_upper, 0.994474394273296, 1e-13);
  EXPECT_NEAR(s.linewidth_hz, 75281281.939957, 1e-3);
  EXPECT_NEAR(s.linewidth_from_finesse_hz, 69444444.4444444, 1e-4);
}

TEST(Config, CalibrationInputFromLedger) {
  const CalibrationInput in = default_config().calibration_input();
  EXPECT_EQ(in.ledger.entries().size(), 4u);
  EXPECT_TRUE(in.ledger.contains(LossRole::Escape));
  EXPECT_TRUE(in.ledger.contains(LossRole::Visibility));
  EXPECT_EQ(in.mc.samples, 1'000'000u);
  EXPECT_EQ(in.mc.seed, 1u);
  const CalibrationInput over = default_config().calibration_input({0.98, 0.002, 0.002});
  EXPECT_EQ(over.eta_tot.value, 0.98);
}

TEST(Config, FormatDoubleIsShortestRoundTrip) {
  EXPECT_EQ(format_double(0.975), "0.975");
  EXPECT_EQ(format_double(84e6), "8.4e+07");
  EXPECT_EQ(format_double(501), "501");
  EXPECT_EQ(format_double(5.32e-7), "5.32e-07");
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(gen);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}

TEST(Rng, SplitMixReferenceOutput) {
  EXPECT_EQ(splitmix64(0), 0xE220A8397B1DCDAFULL);
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
}

TEST(Rng, EngineIsStandardMersenneTwister) {
  Rng r(7);
  std::mt19937_64 ref(splitmix64(7));
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(r.bits(), ref());
  std::mt19937_64 known;
  known.discard(9999);
  EXPECT_EQ(known(), 9981545732273789042ull);
}

TEST(Rng, VariateMoments) {
  Rng r(3);
  const int n = 400'000;
  double su = 0, sn = 0, sn2 = 0, sg = 0, sg2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = r.normal();
    sn += z;
    sn2 += z * z;
    const double g = r.gamma(4.0);
    sg += g;
    sg2 += g * g;
  }
  EXPECT_NEAR(su / n, 0.5, 0.003);
  EXPECT_NEAR(sn / n, 0.0, 0.006);
  EXPECT_NEAR(sn2 / n, 1.0, 0.01);
  EXPECT_NEAR(sg / n, 4.0, 0.02);
  EXPECT_NEAR(sg2 / n - (sg / n) * (sg / n), 4.0, 0.08);
}

TEST(TraceCsv, FormatAndRoundTrip) {
  EXPECT_EQ(format_sig12(1.0 / 3.0), "0.333333333333");
  EXPECT_EQ(format_sig12(3e6), "3000000");
  Trace t;
  t.id = "squeezed_0";
  t.kind = TraceKind::Squeezed;
  t.frequency_hz = {3e6, 3.01e6, 3.02e6};
  t.power_db = {-15.35260480319, -15.3, -15.29999999999951};
  t.analyzer = {300e3, 200, 0.295};
  t.normalized = true;
  std::stringstream ss;
  write_trace_csv(ss, t);
  const std::string text = ss.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), kTraceCsvHeader);
  EXPECT_NE(text.find("\n3000000,-15.3526048032,squeezed,300000,200,0.295,1\n"), std::string::npos) << text;
  const Trace back = read_trace_csv(ss, "mem");
  EXPECT_EQ(back.kind, TraceKind::Squeezed);
  EXPECT_EQ(back.frequency_hz, t.frequency_hz);
  EXPECT_TRUE(back.normalized);
  EXPECT_EQ(back.analyzer, t.analyzer);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(back.power_db[i], t.power_db[i], 1e-10);
  std::stringstream again;
  write_trace_csv(again, back);
  EXPECT_EQ(again.str(), text);
}

TEST(TraceCsv, MalformedInputNamesFileAndLine) {
  auto fails_with = [](const std::string& text, const std::string& needle) {
    std::stringstream ss(text);
    try {
      read_trace_csv(ss, "bad.csv");
    } catch (const DataError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
      return;
    }
    ADD_FAILURE() << "no error for: " << text;
  };
  const std::string header = std::string(kTraceCsvHeader) + "\n";
  fails_with("", "bad.csv");
  fails_with("freq,power\n", "bad.csv:1");
  fails_with(header, "no data rows");
  fails_with(header + "3000000,-70,vacuum,300000,200,0.295,0\n3010000,-70,vacuum\n", "bad.csv:3");
  fails_with(header + "3000000,abc,vacuum,300000,200,0.295,0\n", "bad.csv:2");
  fails_with(header + "3000000,-70,light,300000,200,0.295,0\n", "bad.csv:2");
  fails_with(header + "3000000,-70,vacuum,300000,200,0.295,2\n", "bad.csv:2");
  fails_with(header + "3000000,-70,vacuum,300000,200,0.295,0\n3010000,-70,dark,300000,200,0.295,0\n", "bad.csv:3");
  fails_with(header + "3010000,-70,vacuum,300000,200,0.295,0\n3000000,-70,vacuum,300000,200,0.295,0\n", "ascending");
}

TEST(Dataset, WriteReadRoundTrip) {
  AnalyzerSettings s;
  s.grid.points = 21;
  const Dataset raw = synth_dataset(ModelParams::from_linewidth(0.975, 1.7e-3, 84e6),
                                    std::vector<double>{0.08, 0.835}, s, 4);
  const ProcessResult proc = process(raw);
  const fs::path dir = scratch_dir("dataset");
  write_dataset(dir / "raw", raw, DatasetStage::Raw, 4, {{"dark", 11}});
  write_dataset(dir / "proc", proc.dataset, DatasetStage::Processed, 4);

  const DatasetFiles r = read_dataset(dir / "raw");
  EXPECT_EQ(r.stage, DatasetStage::Raw);
  EXPECT_EQ(r.seed, 4u);
  ASSERT_EQ(r.dataset.trace_count(), 6u);
  for (std::size_t k = 0; k < 2; ++k) {
    const Trace& a = *raw.pumps[k].squeezed;
    const Trace& b = *r.dataset.pumps[k].squeezed;
    EXPECT_EQ(b.id, a.id);
    EXPECT_EQ(b.pump_ratio, a.pump_ratio);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b.power_db[i], a.power_db[i], 1e-9);
  }
  const std::string manifest = read_text(dir / "raw" / std::string(kManifestName));
  EXPECT_NE(manifest.find("stage = raw"), std::string::npos);

  const DatasetFiles p = read_dataset(dir / "proc");
  EXPECT_EQ(p.stage, DatasetStage::Processed);
  const Trace& sq = *p.dataset.pumps[1].squeezed;
  EXPECT_TRUE(sq.normalized);
  EXPECT_TRUE(sq.dark_subtracted);
  EXPECT_EQ(sq.reference_id, "vacuum");
  ASSERT_EQ(sq.relative_variance.size(), sq.size());
  for (std::size_t i = 0; i < sq.size(); ++i) {
    EXPECT_NEAR(sq.relative_variance[i], proc.dataset.pumps[1].squeezed->relative_variance[i],
                1e-11 * sq.relative_variance[i]);
  }

  fs::remove(dir / "raw" / "vacuum.csv");
  try {
    read_dataset(dir / "raw");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("vacuum"), std::string::npos) << e.what();
  }
  EXPECT_THROW(read_dataset(dir / "nowhere"), DataError);
  fs::remove_all(dir);
}

TEST(Reports, MachineBlockParsing) {
  Report r;
  r.human = "some table\nwith = signs in it\n";
  r.add("qe", 0.994262174883861);
  r.add("mode", "multiplicative");
  const MachineBlock m = parse_machine_block(r.text());
  EXPECT_EQ(m.size(), 2u);
  EXPECT_EQ(machine_double(m, "qe"), 0.994262174883861);
  EXPECT_EQ(m.at("mode"), "multiplicative");
  EXPECT_THROW(machine_double(m, "missing"), DataError);
  EXPECT_THROW(machine_double(m, "mode"), DataError);
  EXPECT_THROW(parse_machine_block("no block here\n"), DataError);
}
