#pragma once

#include <Eigen/Dense>

#include "spconf/areal.hpp"
#include "spconf/dataset.hpp"
#include "spconf/inference.hpp"

namespace spconf {

/// Q* = Lambda^{1/2} (D - rho M) Lambda^{1/2} with Lambda = diag((D - rho M)^{-1}),
/// so that Q*^{-1} is a correlation matrix.
struct ScaledCarPrecision {
  double rho = 0.0;
  Eigen::MatrixXd Q_star;
  Eigen::VectorXd lambda;  // diagonal of (D - rho M)^{-1}
  double log_det = 0.0;    // log |Q*|

  int size() const { return static_cast<int>(Q_star.rows()); }
};

/// Scaled precisions of one graph for any rho, from a single eigendecomposition
/// of D^{-1/2} M D^{-1/2}; each evaluation is O(n^2).
class ScaledCarFamily {
 public:
  /// Throws ValidationError for a disconnected graph.
  explicit ScaledCarFamily(const AreaGraph& g);
  /// Throws ValidationError for rho outside [0, 1).
  ScaledCarPrecision at(double rho) const;
  int size() const { return static_cast<int>(degree_.size()); }

 private:
  Eigen::VectorXd degree_;
  Eigen::VectorXd gamma_;  // eigenvalues of D^{-1/2} M D^{-1/2}
  Eigen::MatrixXd u2_;     // U_ik^2 / d_i
  std::vector<std::pair<int, int>> edges_;
};

/// Throws ValidationError for rho outside [0, 1) or a disconnected graph.
ScaledCarPrecision scaled_car_precision(const AreaGraph& g, double rho);

struct GammaMarginalSpec {
  GammaVariant variant = GammaVariant::Scale;
  double upsilon = 1.0;
  Eigen::VectorXd eta;  // linear predictor X beta per area

  /// Gamma shape and scale of area i.
  double shape(Eigen::Index i) const;
  double scale(Eigen::Index i) const;
};

/// Sum of gamma log densities plus the Gaussian copula log density
/// 0.5 log|Q*| - 0.5 z'(Q* - I) z, z_i = Phi^{-1}(F_i(r_i)) with F_i clamped to
/// [1e-14, 1 - 1e-14].
double tgmrf_log_density(const Eigen::VectorXd& r, const GammaMarginalSpec& spec, const ScaledCarPrecision& prec);

/// r_i = F_i^{-1}(Phi(z_i)).
Eigen::VectorXd tgmrf_risk(const Eigen::VectorXd& z, const GammaMarginalSpec& spec);

/// Copula-latent TGMRF fit. theta = (alpha, beta) with normal priors from
/// `prior`; upsilon ~ Gamma(0.01, 0.01); rho ~ U(0, 1). The reported latent
/// draws are z.
PosteriorSummary fit_tgmrf(const Dataset& d, const AreaGraph& g, GammaVariant variant, const PriorSpec& prior,
                           const McmcConfig& cfg);

}  // namespace spconf
