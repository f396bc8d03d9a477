#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spconf/inference.hpp"
#include "spconf/metrics.hpp"
#include "spconf/rng.hpp"

namespace spconf {

/// Map, baseline covariate and expected counts a study is run on.
struct StudyMap {
  std::string name;
  MapStructure map;
  Eigen::MatrixXd centroids;  // n x 2
  Eigen::VectorXd x1;         // standardised
  Eigen::VectorXd e;
};

/// 10 x 7 rook lattice (70 areas), x1 = smooth part on the lowest
/// eigenvectors plus iid roughness (smooth_fraction of the variance in the
/// smooth part), e = round(U(50, 500)).
StudyMap desk_map(std::uint64_t seed = 20240101, int rows = 10, int cols = 7, double smooth_fraction = 0.5);

/// How X2 is tied to X1. Mixing is x2 = c x1 + sqrt(1 - c^2) eps with iid eps;
/// Smooth mixes the smooth part of x1 with a smooth random field, so X2 lives
/// in the span of the `smooth_dim` lowest non-null eigenvectors.
enum class X2Mechanism { Mixing, Smooth };

struct ScenarioSpec {
  int scenario = 1;
  double correlation_target = 0.8;
  double beta1 = 0.2;
  double beta2 = 0.3;
  double sigma2 = 0.2;
  double lambda_s1 = 1.22;
  double lambda_s2 = 8.87;
  int K = 100;
  std::uint64_t seed = 20240101;
  int study = 1;
  X2Mechanism x2_mechanism = X2Mechanism::Mixing;
  int smooth_dim = 8;
  /// When set (Scenarios 2 and 3), the shared field S is redrawn until
  /// |cor(x1, S) - target| < 0.05. NaN disables the calibration.
  double field_correlation_target = std::numeric_limits<double>::quiet_NaN();

  /// Study 2 forces beta2 = 0.
  void validate() const;
  std::string scenario_label() const;
  std::string subscenario_label() const;
};

/// Shared draws (X2, S) plus the K replicate count vectors.
struct ScenarioData {
  Eigen::VectorXd x1;
  Eigen::VectorXd x2;
  Eigen::VectorXd S;
  Eigen::VectorXd log_r;
  Eigen::VectorXd r_true;
  double achieved_correlation = 0.0;
  double cor_x1_S = 0.0;
  std::vector<Eigen::VectorXd> y;
};

double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Mixing mechanism with rejection until |cor - target| < 0.05; x2 standardised.
Eigen::VectorXd gen_correlated_covariate(const Eigen::VectorXd& x1, double target, Rng& rng);
/// Smooth mechanism on the given orthonormal basis, same calibration rule.
Eigen::VectorXd gen_smooth_correlated_covariate(const Eigen::VectorXd& x1, const Eigen::MatrixXd& basis,
                                                double target, Rng& rng);

/// Range-space draw with variance sigma2 / lambda_j on every non-null eigenvector.
Eigen::VectorXd gen_icar_field(const SpectralBasis& spectrum, double sigma2, Rng& rng);
Eigen::VectorXd gen_icar_field(const IcarPrecision& qp, double sigma2, Rng& rng);

/// Field correlations of the original study map, used as calibration targets.
double reference_field_correlation(int scenario);

/// Draws X2 and S once, then K count vectors. The sign of S is chosen so that
/// cor(x1, S) >= 0.
ScenarioData gen_scenario(const ScenarioSpec& spec, const StudyMap& map);

struct ReplicateFailure {
  int replicate = 0;
  std::string model;
  std::string message;
};

struct StudyResult {
  ScenarioData data;
  std::vector<ReplicateRecord> records;
  std::vector<ReplicateFailure> failures;
  StudySummary summary;
};

/// Fits every model to every replicate. Study 1 fits see only X1; study 2 fits
/// see X1 and X2. Replicates are spread over `workers` threads, each with its
/// own derived seed, so results do not depend on the worker count. The ICAR
/// spatial fit of a replicate is shared by Spatial, RSR and spatial+.
StudyResult run_study(const ScenarioSpec& spec, const StudyMap& map, const std::vector<ModelSpec>& models,
                      const PriorSpec& prior, const McmcConfig& cfg, int workers = 1,
                      MarbVariant marb = MarbVariant::AbsOfMean);

/// The dataset a study fits for replicate k.
Dataset replicate_dataset(const ScenarioSpec& spec, const StudyMap& map, const ScenarioData& data, int k);

}  // namespace spconf
