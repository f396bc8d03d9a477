#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spconf/areal.hpp"
#include "spconf/dataset.hpp"
#include "spconf/mcmc.hpp"
#include "spconf/splines.hpp"

namespace spconf {

struct PriorSpec {
  double beta_precision = 0.001;
  /// Upper end of the uniform prior on every spatial standard deviation.
  double sigma_upper = 10.0;
  double alpha_precision = 0.001;

  void validate() const;
};

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
  double rhat = 1.0;
  double ess = 0.0;
};

struct PosteriorSummary {
  std::string model;
  std::vector<ParameterSummary> parameters;
  /// Retained draws, chains stacked in order; one column per parameter.
  Eigen::MatrixXd samples;
  /// Pointwise Poisson log-likelihood per retained draw (draws x n).
  Eigen::MatrixXd loglik;
  /// Spatial contribution to the log risk per retained draw (draws x n); empty
  /// for models without one.
  Eigen::MatrixXd latent;
  Eigen::VectorXd fitted_mu;    // posterior mean of e * r
  Eigen::VectorXd fitted_risk;  // posterior mean of r
  double waic = 0.0;
  double p_waic = 0.0;
  int chains = 0;
  int draws_per_chain = 0;
  bool converged = true;
  std::string warning;
  std::map<std::string, std::string> metadata;

  const ParameterSummary& at(const std::string& name) const;
  bool has(const std::string& name) const;
  int column(const std::string& name) const;
};

struct WaicResult {
  double waic = 0.0;
  double lppd = 0.0;
  double p_waic = 0.0;
};

/// -2 (lppd - p_waic) with p_waic the summed pointwise sample variances of the
/// log-likelihood. Requires at least two draws.
WaicResult waic_components(const Eigen::MatrixXd& loglik);
double waic(const Eigen::MatrixXd& loglik);

enum class Family { Null, SpatialIcar, SpatialPspline, Rsr, SpatialPlus, Tgmrf };
enum class CovariateModelKind { Eigen, Pspline };
enum class FinalSpatial { Icar, Pspline };
enum class GammaVariant { Scale, Shape };

struct SplineDims {
  int n_knots = 11;
  int degree = 3;
};

struct ModelSpec {
  std::string name;
  Family family = Family::Null;
  CovariateModelKind covariate_model = CovariateModelKind::Eigen;
  int k = 0;
  FinalSpatial final_spatial = FinalSpatial::Icar;
  SplineDims spline;
  GammaVariant gamma_variant = GammaVariant::Scale;

  /// Null, Spatial, SpatialP, RSR, SpatPlus<k>, SpatPlusP1, SpatPlusP2, TGMRF1, TGMRF2.
  static ModelSpec from_name(const std::string& name);
  bool needs_spatial_fit() const { return family == Family::Rsr || family == Family::SpatialPlus; }
  bool needs_centroids() const;
};

/// Spatial structure shared by all fits on one map.
struct MapStructure {
  AreaGraph graph;
  IcarPrecision icar;
  SpectralBasis spectrum;

  static MapStructure build(const AreaGraph& g);
};

/// Tensor P-spline spatial term reparameterised as a mixed model: `fixed` holds
/// the unpenalised directions with the constant removed, `random` the
/// penalised ones with prior precision inner/sigma_1^2 + outer/sigma_2^2.
struct PsplineTerm {
  TensorBasis basis;
  Eigen::MatrixXd fixed;
  Eigen::MatrixXd random;
  Eigen::VectorXd inner;
  Eigen::VectorXd outer;
};

/// Tensor B-spline basis on standardised centroids, s1 as the inner factor.
TensorBasis centroid_tensor_basis(const Eigen::MatrixXd& centroids, SplineDims dims = {});

/// Builds the term from centroids (standardised internally). The first
/// coordinate becomes the inner (second) tensor factor so that sigma_1 acts
/// along s1.
PsplineTerm make_pspline_term(const Eigen::MatrixXd& centroids, SplineDims dims = {});

PosteriorSummary fit_null(const Dataset& d, const PriorSpec& prior, const McmcConfig& cfg);
PosteriorSummary fit_spatial(const Dataset& d, const IcarPrecision& qp, const PriorSpec& prior, const McmcConfig& cfg);
PosteriorSummary fit_spatial(const Dataset& d, const MapStructure& map, const PriorSpec& prior, const McmcConfig& cfg);
PosteriorSummary fit_spatial(const Dataset& d, const PsplineTerm& term, const PriorSpec& prior, const McmcConfig& cfg);

/// Weighted projector onto the orthogonal complement of W^{1/2}[1, X].
struct RsrProjection {
  Eigen::MatrixXd projector;  // I - W^{1/2} X* (X*' W X*)^{-1} X*' W^{1/2}
  Eigen::MatrixXd L;          // eigenvectors with unit eigenvalue
  Eigen::VectorXd eigenvalues;
  /// u = W^{-1/2} L L' W^{1/2} xi
  Eigen::MatrixXd effect_map;
};

RsrProjection rsr_projection(const Eigen::MatrixXd& X, const Eigen::VectorXd& w_hat);

/// RSR with weights from a completed spatial fit (posterior mean mu).
PosteriorSummary fit_rsr(const Dataset& d, const MapStructure& map, const Eigen::VectorXd& w_hat,
                         const PriorSpec& prior, const McmcConfig& cfg);
/// Runs the ICAR spatial fit first to obtain the weights.
PosteriorSummary fit_rsr(const Dataset& d, const IcarPrecision& qp, const PriorSpec& prior, const McmcConfig& cfg);

/// Spatial basis for the covariate model of spatial+.
struct CovariateModel {
  CovariateModelKind kind = CovariateModelKind::Eigen;
  Eigen::MatrixXd basis;    // n x m, acts on the weighted covariate
  Eigen::MatrixXd penalty;  // m x m, P-spline only
  /// Fixed smoothing weight; negative selects it by GCV.
  double lambda = -1.0;
  int k = 0;
};

CovariateModel eigen_covariate_model(const SpectralBasis& spectrum, int k);
CovariateModel pspline_covariate_model(const Eigen::MatrixXd& centroids, SplineDims dims = {}, double lambda = -1.0);

/// Residualise covariate j: regress W^{1/2} X_j on the basis, back-transform
/// the residual with W^{-1/2} and standardise it. `selected_lambda` receives
/// the smoothing weight used by the P-spline variant.
Eigen::VectorXd spatial_plus_residualize(const Dataset& d, int j, const Eigen::VectorXd& w_hat,
                                         const CovariateModel& cm, double* selected_lambda = nullptr);

/// Two-stage spatial+: spatial fit (unless `spatial_fit` is supplied), weights,
/// residualised covariates, final ICAR or P-spline model.
PosteriorSummary fit_spatial_plus(const Dataset& d, const MapStructure& map, const ModelSpec& spec,
                                  const PriorSpec& prior, const McmcConfig& cfg,
                                  const PosteriorSummary* spatial_fit = nullptr);

/// Dispatch on spec.family. `spatial_fit` is reused by RSR and spatial+ when given.
PosteriorSummary fit_model(const Dataset& d, const MapStructure& map, const ModelSpec& spec, const PriorSpec& prior,
                           const McmcConfig& cfg, const PosteriorSummary* spatial_fit = nullptr);

/// Sampler input shared by every Poisson log-linear family: linear predictor
/// log e + design * theta, where the first n_fixed coordinates of theta have
/// independent normal priors and the remaining latent coordinates have
/// precision sum_c weights(c, j) / sigma_c^2.
struct LatentPoissonModel {
  std::string name;
  Eigen::VectorXd y;
  Eigen::VectorXd log_offset;
  Eigen::MatrixXd design;
  int n_fixed = 0;
  std::vector<std::string> fixed_names;
  Eigen::VectorXd fixed_precision;
  Eigen::VectorXd fixed_init;
  Eigen::MatrixXd component_weights;  // n_comp x n_latent
  std::vector<std::string> component_names;
  double sigma_upper = 10.0;
  double sigma_init = 0.1;
  /// Maps latent coordinates to the reported spatial effect (n x n_latent).
  Eigen::MatrixXd effect_map;
  /// Component label per area; the reported effect is recentred within each.
  std::vector<int> recentre_groups;
};

PosteriorSummary sample_latent_poisson(const LatentPoissonModel& model, const McmcConfig& cfg);

/// Assemble parameter summaries, diagnostics and WAIC from per-chain draws.
PosteriorSummary summarize_chains(const std::string& model, const std::vector<std::string>& names,
                                  const std::vector<Eigen::MatrixXd>& draws,
                                  const std::vector<Eigen::MatrixXd>& loglik,
                                  const std::vector<Eigen::MatrixXd>& latent, const Eigen::VectorXd& mu_sum,
                                  const Eigen::VectorXd& risk_sum);

/// Poisson log pmf, vectorised.
double poisson_logpmf(double y, double mu);

}  // namespace spconf
