#pragma once

// File formats: trace CSV, dataset directories with a manifest, and text
// reports carrying a human table followed by a `[machine]` key = value block.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sqzcal/calib.hpp"
#include "sqzcal/fit.hpp"
#include "sqzcal/traces.hpp"

namespace sqzcal {

inline constexpr std::string_view kTraceCsvHeader =
    "frequency_hz,power_db,kind,rbw_hz,vbw_hz,sweep_time_s,normalized";

// Decimal, 12 significant digits.
std::string format_sig12(double v);

void write_trace_csv(std::ostream& os, const Trace& t);
void write_trace_csv(const std::filesystem::path& path, const Trace& t);
// Throws DataError naming the file and line on any malformed content.
Trace read_trace_csv(std::istream& is, const std::string& origin);
Trace read_trace_csv(const std::filesystem::path& path);

enum class DatasetStage { Raw, Processed };

std::string_view to_string(DatasetStage s);

struct DatasetFiles {
  DatasetStage stage = DatasetStage::Raw;
  Dataset dataset;
  std::uint64_t seed = 0;
};

inline constexpr std::string_view kManifestName = "manifest.txt";

// Writes one CSV per trace plus manifest.txt. `trace_seeds` maps trace ids
// to the seed they were generated with (synthetic data only).
void write_dataset(const std::filesystem::path& dir, const Dataset& ds, DatasetStage stage,
                   std::uint64_t seed, const std::map<std::string, std::uint64_t>& trace_seeds = {},
                   const std::vector<std::pair<std::string, std::string>>& extra = {});

DatasetFiles read_dataset(const std::filesystem::path& dir);

// Report = human-readable text, then a line "[machine]", then key = value
// lines. Values never contain newlines.
struct Report {
  std::string human;
  std::vector<std::pair<std::string, std::string>> machine;

  void add(std::string key, std::string value);
  void add(std::string key, double value);
  std::string text() const;
};

using MachineBlock = std::map<std::string, std::string>;

MachineBlock parse_machine_block(std::string_view text);
MachineBlock read_machine_block(const std::filesystem::path& path);
// Throws DataError when the key is absent or not a number.
double machine_double(const MachineBlock& m, const std::string& key);

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

void write_histogram_csv(const std::filesystem::path& path, const Histogram& h);
void write_residual_csv(const std::filesystem::path& path, const std::vector<TraceResidual>& traces);

// Single or joint fit; per-curve results are prefixed "curve<k>.".
Report fit_report(const FitResult& fit, const FitOptions& options, std::string_view title = "joint fit");
void append_fit(Report& r, const FitResult& fit, const std::string& prefix);

Report calibration_report(const CalibrationReport& rep, const CalibrationInput& in);

}  // namespace sqzcal
