#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "argpois/mcmc.hpp"
#include "argpois/model.hpp"
#include "argpois/simulate.hpp"

/// File formats: CSV for tables, JSON for configuration and summaries, and a
/// JSON-lines draw store. Numbers are written in shortest round-trip form and
/// parsed without locale.
namespace argpois::io {

using nlohmann::json;
namespace fs = std::filesystem;

std::string format_double(double v);
double parse_double(std::string_view s, const std::string& where);
std::int64_t parse_int(std::string_view s, const std::string& where);

/// 64-bit FNV-1a as 16 hex digits.
std::string fnv1a_hex(std::string_view data);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a named column, or nullopt.
  std::optional<std::size_t> column(const std::string& name) const;
};

/// Comma-separated, first line is the header, no quoting. Throws ValidationError
/// on ragged rows.
CsvTable read_csv(const fs::path& path);
CsvTable parse_csv(std::string_view text, const std::string& source);

// ---- panel ingestion -----------------------------------------------------

struct DataPaths {
  fs::path counts;                       // date, y_1..y_J, z
  std::vector<fs::path> covariates;      // optional, one per series (empty path = none)
  fs::path global_covariates;            // optional
};

struct Rescale {
  std::vector<double> series;  // one per series, or a single value for all
  double global = 0.001;
};

/// Reads counts and covariates, checks dates align, multiplies counts by the
/// rescale factors and rounds to the nearest integer.
CountPanel read_panel(const DataPaths& paths, const Rescale& rescale);

std::string counts_csv(const CountPanel& panel);
std::string covariates_csv(const std::vector<std::string>& dates, const Eigen::MatrixXd& v);
void write_text(const fs::path& path, std::string_view text);
std::string read_text(const fs::path& path);

/// Hash of the ingested (rescaled) panel including covariates.
std::string data_hash(const CountPanel& panel);

// ---- JSON conversions ----------------------------------------------------

json to_json(const Eigen::VectorXd& v);
json to_json(const Eigen::MatrixXd& m);
Eigen::VectorXd vector_from_json(const json& j);
Eigen::MatrixXd matrix_from_json(const json& j);

json to_json(const ArgParams& a);
ArgParams arg_from_json(const json& j);
json to_json(const StaticParams& theta);
StaticParams static_params_from_json(const json& j);
json to_json(const LatentPaths& p);
LatentPaths paths_from_json(const json& j);

json to_json(const mcmc::HyperParams& h);
/// Starts from defaults and applies any keys present; unknown keys are errors.
mcmc::HyperParams hyper_from_json(const json& j);
json to_json(const mcmc::McmcConfig& c);
mcmc::McmcConfig mcmc_config_from_json(const json& j, mcmc::McmcConfig base = {});

json to_json(const mcmc::GibbsState& st);
mcmc::GibbsState gibbs_state_from_json(const json& j);

json to_json(const mcmc::DrawRecord& r);
mcmc::DrawRecord draw_from_json(const json& j);

sim::SimSpec sim_spec_from_json(const json& j);
json to_json(const sim::SimSpec& spec);

/// Writes `j` with two-space indentation and a trailing newline.
void write_json(const fs::path& path, const json& j);
json read_json(const fs::path& path);

// ---- draw store ----------------------------------------------------------

inline constexpr const char* kDrawFormat = "argpois-draws";
inline constexpr int kDrawVersion = 1;

struct DrawHeader {
  std::string config_hash;
  std::string data_hash;
  std::uint64_t seed = 0;
};

/// Append-only JSON-lines file: a header line then one line per retained sweep.
class DrawWriter {
 public:
  /// Creates the file, or with `keep_records` set reopens an existing store,
  /// verifies its header and truncates it to its first `keep_records` records.
  DrawWriter(const fs::path& path, const DrawHeader& header,
             std::optional<std::size_t> keep_records = std::nullopt);
  void write(const mcmc::DrawRecord& r);
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
};

struct DrawStore {
  DrawHeader header;
  std::vector<mcmc::DrawRecord> records;
};

/// Throws ValidationError if the header is malformed or its config hash
/// differs from `expected_config_hash` (when given).
DrawStore read_draws(const fs::path& path, const std::optional<std::string>& expected_config_hash = std::nullopt);

// ---- run configuration ---------------------------------------------------

/// Everything that determines a fit's draws; hashed into the draw store.
struct FitConfig {
  DataPaths data;
  Rescale rescale;
  mcmc::HyperParams hyper;
  mcmc::McmcConfig mcmc;

  /// Relative data paths are resolved against `base`.
  static FitConfig from_json(const json& j, const fs::path& base);
  json to_json() const;
  /// Hash over the resolved configuration, excluding file locations.
  std::string hash() const;
};

}  // namespace argpois::io
