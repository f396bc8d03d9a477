#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace spconf {

struct ParamEstimate {
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
};

struct ReplicateRecord {
  int replicate = 0;
  std::string model;
  std::map<std::string, ParamEstimate> params;
  Eigen::VectorXd risk;  // posterior mean relative risk per area
  double waic = 0.0;
  bool converged = true;
};

struct SeResult {
  double se_sim = 0.0;  // population sd (1/K) of posterior means
  double se_est = 0.0;  // mean posterior sd
};

struct CoverageResult {
  double coverage = 0.0;  // percent
  double length = 0.0;
};

struct BiasResult {
  double marb = 0.0;
  double mrrmse = 0.0;
};

/// Default: |mean relative bias|. The alternative averages |relative bias|.
enum class MarbVariant { AbsOfMean, MeanOfAbs };

SeResult se_sim_and_est(const std::vector<ParamEstimate>& est);
CoverageResult coverage_and_length(const std::vector<ParamEstimate>& est, double truth);
/// Percentage of intervals excluding zero; truth must be 0.
double type_s_rate(const std::vector<ParamEstimate>& est, double truth = 0.0);
BiasResult marb_mrrmse(const std::vector<ParamEstimate>& est, double truth, MarbVariant v = MarbVariant::AbsOfMean);
/// Per-area relative bias of posterior mean risks against r_true, averaged over areas.
BiasResult risk_marb_mrrmse(const std::vector<Eigen::VectorXd>& risks, const Eigen::VectorXd& r_true,
                            MarbVariant v = MarbVariant::AbsOfMean);

struct SummaryRow {
  std::string scenario;
  std::string subscenario;
  std::string model;
  std::string metric;
  double value = 0.0;
};

struct StudySummary {
  std::vector<SummaryRow> rows;

  /// Throws if absent.
  double value(const std::string& scenario, const std::string& subscenario, const std::string& model,
               const std::string& metric) const;
  bool has(const std::string& scenario, const std::string& subscenario, const std::string& model,
           const std::string& metric) const;
};

/// One block of rows per model: for every parameter with a stated truth, the
/// mean estimate, se_sim, se_est, coverage and interval length, plus MARB and
/// MRRMSE for nonzero truths or the Type-S rate for zero truths; then mean WAIC
/// and risk-level MARB/MRRMSE. Records are sorted by (model, replicate) first.
StudySummary summarize_records(std::vector<ReplicateRecord> records, const std::map<std::string, double>& truth,
                               const Eigen::VectorXd& r_true, const std::string& scenario,
                               const std::string& subscenario, MarbVariant v = MarbVariant::AbsOfMean,
                               int n_failed = 0);

/// Shortest representation that round-trips to the same double.
std::string format_double(double v);

void write_summary_csv(std::ostream& out, const StudySummary& s, bool header = true);
StudySummary read_summary_csv(std::istream& in);

}  // namespace spconf
