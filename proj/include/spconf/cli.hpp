#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "spconf/areal.hpp"
#include "spconf/dataset.hpp"
#include "spconf/inference.hpp"
#include "spconf/metrics.hpp"
#include "spconf/simstudy.hpp"

namespace spconf {

const char* version();

/// Area table exactly as read from disk, before standardisation.
struct AreaTable {
  std::vector<std::string> ids;
  Eigen::VectorXd observed;
  Eigen::VectorXd expected;
  std::vector<std::string> covariate_names;
  Eigen::MatrixXd covariates;  // raw values
  Eigen::MatrixXd coords;      // n x 2 (lon, lat) or n x 0
};

/// Columns: id, observed, expected, covariates..., then optionally lon, lat.
/// Errors name the row and column.
AreaTable read_area_table(std::istream& in);
AreaTable read_area_table(const std::string& path);
void write_area_table(std::ostream& out, const AreaTable& t);

/// Validated, standardised dataset built from the table.
Dataset to_dataset(const AreaTable& t);

struct IngestedData {
  AreaTable table;
  Dataset data;
  AreaGraph graph;
};

/// Reads both files and cross-checks the number of areas.
IngestedData ingest_dataset(const std::string& csv_path, const std::string& adj_path);

/// Study map on user data: x1 is the first (standardised) covariate, e the
/// expected counts, centroids the coordinates when present.
StudyMap study_map_from_data(const IngestedData& in, const std::string& name = "data");

/// "lattice:RxC", e.g. "lattice:10x7": the desk lattice map with its default seed.
StudyMap study_map_from_spec(const std::string& spec);

/// Every setting of every command. Defaults < config file < flags.
struct RunConfig {
  std::string data_path;
  std::string adj_path;
  std::vector<std::string> models = {"Null", "Spatial", "RSR"};
  std::string out_dir = "out";
  std::string in_dir;
  std::string out_csv;

  McmcConfig mcmc;
  PriorSpec prior;
  int workers = 1;

  int scenario = 1;
  double correlation = 0.8;
  int study = 1;
  int K = 100;
  std::string map = "lattice:10x7";
  double beta1 = 0.2;
  double beta2 = 0.3;
  double sigma2 = 0.2;
  X2Mechanism x2_mechanism = X2Mechanism::Mixing;
  bool calibrate_field = true;
  MarbVariant marb = MarbVariant::AbsOfMean;

  /// key=value lines, sorted; the config hash is taken over this text.
  std::string canonical() const;
  std::string hash() const;
  std::vector<ModelSpec> model_specs() const;
};

/// INI file with sections [data], [models], [mcmc], [prior], [simulate],
/// [metrics], [output]. Only keys present in the file are changed.
void apply_config_file(RunConfig& cfg, const std::string& path);

/// Default worker count from SPCONF_WORKERS, else 1.
int default_workers();

/// 64-bit FNV-1a as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

struct CommandResult {
  std::vector<std::string> files;  // written, relative to the output dir
  std::vector<std::string> warnings;
};

/// Fits every model; writes summary.csv, samples_<model>.csv, manifest.json.
CommandResult cmd_fit(const RunConfig& cfg);

/// Runs one scenario; writes summary.csv, summary_wide.csv, replicates.csv,
/// risks.csv, truth.csv, scenario.csv, failures.csv, manifest.json.
CommandResult cmd_simulate(const RunConfig& cfg);

/// Re-aggregates the replicate files under cfg.in_dir (itself or its
/// immediate subdirectories) into cfg.out_csv.
CommandResult cmd_summarize(const RunConfig& cfg);

/// Raw per-replicate files written by cmd_simulate.
void write_replicates_csv(std::ostream& out, const ScenarioSpec& spec, const std::vector<ReplicateRecord>& records);
void write_risks_csv(std::ostream& out, const std::vector<ReplicateRecord>& records);
/// One row per (scenario, subscenario, model) with a column per metric.
void write_summary_wide_csv(std::ostream& out, const StudySummary& s);

}  // namespace spconf
