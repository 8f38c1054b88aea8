#pragma once

#include "nsync/asymptotics.hpp"
#include "nsync/constants.hpp"
#include "nsync/estimator.hpp"
#include "nsync/model.hpp"
#include "nsync/optimize.hpp"
#include "nsync/sampling.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace nsync {

/// Raised when more than 10% of Monte Carlo replications fail.
class RunFailure : public Error {
 public:
  using Error::Error;
};

struct ModelConfig {
  std::string family = "constant";  // "constant" or "periodic"
  DiffusionSpec diffusion;
  DriftSpec drift;
  PeriodicSpec periodic;
  ParamSpace space;
  ModelBounds bounds;
};

struct SamplingConfig {
  SchemeGenerator generator;
  long n = 0;
  double h_n = 0.0;
  std::optional<double> gamma;  // h_n = n^{-gamma} when h_n is not given
};

struct RunConfig {
  int replications = 1;
  std::uint64_t seed = 1;
  int workers = 1;
};

struct ConstantsConfig {
  std::string source = "estimate";  // estimate | inline | file | synchronous | none
  std::string path;
  nlohmann::json inline_value;
  int replications = 200;
  long n = 500;
  double h_n = 0.1;
  std::string windows = "unit";  // unit | random
  std::uint64_t window_seed = 7;
  std::optional<std::uint64_t> seed;  // defaults to the run seed
};

struct AsymptoticsConfig {
  std::optional<int> p_max;  // default: choose_p_max(rho_max)
  AveragingOptions averaging;
  ConstantsConfig constants;
};

struct ExperimentConfig {
  ModelConfig model;
  SamplingConfig sampling;
  RunConfig run;
  AsymptoticsConfig asymptotics;
  OptimizerConfig optimizer;
  std::optional<Vector> lan_u;
  std::string output_dir = "out";
  nlohmann::json source;  // the parsed document, for fingerprinting
};

/// Parses and validates a configuration document; ConfigError messages name the field.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

CoefficientModel build_model(const ModelConfig& cfg);
int resolved_p_max(const ExperimentConfig& cfg);
/// Scheme constants per the asymptotics block; empty when the source is "none".
std::optional<SchemeConstants> obtain_constants(const ExperimentConfig& cfg,
                                                GapDiagnostics* diagnostics = nullptr);

// ---------------------------------------------------------------------------
// Monte Carlo study

struct McRow {
  int replication = 0;
  std::uint64_t scheme_seed = 0;
  std::uint64_t path_seed = 0;
  bool ok = false;
  std::string error;
  std::optional<EstimateReport> report;
  double hy = 0.0, rv1 = 0.0, rv2 = 0.0;
};

struct ErrorSummary {
  std::string name;
  double truth = 0.0;
  double rate = 0.0;  // sqrt(n) or sqrt(T_n)
  double bias = 0.0;
  std::optional<double> empirical_sd;  // of rate * (estimate - truth)
  double theoretical_sd = 0.0;         // sqrt of the diagonal of Gamma^{-1} at the truth
  std::optional<double> sd_ratio;
  double coverage = 0.0;
  double standardized_mean = 0.0;  // of rate * Gamma^{1/2} (estimate - truth)
  std::optional<double> standardized_sd;
  std::optional<double> skewness, excess_kurtosis, ks_distance;
  int count = 0;
};

struct McSummary {
  int replications = 0;
  int failures = 0;
  int boundary_cases = 0;
  Matrix gamma1, gamma2;
  std::vector<ErrorSummary> all;
  std::vector<ErrorSummary> interior;  // boundary-contact replications removed
  std::vector<std::string> warnings;
};

struct McResult {
  std::vector<McRow> rows;
  McSummary summary;
};

McResult run_mc(const ExperimentConfig& cfg, const CoefficientModel& model,
                const SchemeConstants& constants);

void write_mc_csv(std::ostream& os, const McResult& result, const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json to_json(const SchemeConstants& c);
nlohmann::json to_json(const GapDiagnostics& d);
SchemeConstants constants_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EstimateReport& r);
nlohmann::json to_json(const McSummary& s);
nlohmann::json to_json(const LanSummary& s);
std::string fingerprint(const nlohmann::json& doc);

// ---------------------------------------------------------------------------
// Commands. Each returns the process exit code and writes under the output directory.

struct CommandOptions {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> scheme;      // estimate only
  std::optional<std::filesystem::path> increments;  // estimate only
};

int cmd_simulate(const CommandOptions& opts);
int cmd_estimate(const CommandOptions& opts);
int cmd_mc(const CommandOptions& opts);
int cmd_constants(const CommandOptions& opts);
int cmd_lan(const CommandOptions& opts);

/// Runs a command and maps exceptions to exit codes: 2 config, 3 data, 4 run failure, 1 other.
int run_command(const std::string& name, const CommandOptions& opts);

}  // namespace nsync
