#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "spconf/errors.hpp"
#include "spconf/inference.hpp"
#include "spconf/tgmrf.hpp"

namespace spconf {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// [1, X] with names and the fixed-effect part of the prior.
void add_fixed_block(const Dataset& d, const PriorSpec& prior, LatentPoissonModel& m, Eigen::MatrixXd& fixed) {
  const Eigen::Index n = d.y.size();
  const Eigen::Index p = d.X.cols();
  fixed.resize(n, p + 1);
  fixed.col(0).setOnes();
  if (p > 0) fixed.rightCols(p) = d.X;
  m.n_fixed = static_cast<int>(p + 1);
  m.fixed_names = {"alpha"};
  for (const auto& nm : d.covariate_names) m.fixed_names.push_back(nm);
  m.fixed_precision = Eigen::VectorXd::Constant(p + 1, prior.beta_precision);
  m.fixed_precision(0) = prior.alpha_precision;
  m.fixed_init = Eigen::VectorXd::Zero(p + 1);
  const double sy = d.y.sum();
  const double se = d.e.sum();
  m.fixed_init(0) = std::log((sy > 0.0 ? sy : 0.5) / se);
}

LatentPoissonModel base_model(const std::string& name, const Dataset& d, const PriorSpec& prior,
                              Eigen::MatrixXd& fixed) {
  prior.validate();
  d.validate();
  LatentPoissonModel m;
  m.name = name;
  m.y = d.y;
  m.log_offset = d.e.array().log();
  m.sigma_upper = prior.sigma_upper;
  add_fixed_block(d, prior, m, fixed);
  return m;
}

void note_zero_counts(const Dataset& d, PosteriorSummary& ps) {
  if (d.y.sum() == 0.0) {
    ps.metadata["degenerate"] = "all observed counts are zero";
    ps.warning += std::string(ps.warning.empty() ? "" : "; ") + "all observed counts are zero";
  }
}

PosteriorSummary icar_fit(const std::string& name, const Dataset& d, const IcarPrecision& qp,
                          const SpectralBasis& spectrum, const PriorSpec& prior, const McmcConfig& cfg) {
  if (qp.size() != d.size()) throw ValidationError("adjacency has " + std::to_string(qp.size()) +
                                                   " areas but the dataset has " + std::to_string(d.size()));
  Eigen::MatrixXd fixed;
  LatentPoissonModel m = base_model(name, d, prior, fixed);
  const int nn = spectrum.size() - spectrum.null_dim;
  const Eigen::MatrixXd V = spectrum.vectors.rightCols(nn);
  m.design.resize(d.size(), fixed.cols() + nn);
  m.design << fixed, V;
  m.component_weights = spectrum.eigenvalues.tail(nn).transpose();
  m.component_names = {"sigma"};
  m.effect_map = V;
  m.recentre_groups = qp.component_of;
  PosteriorSummary ps = sample_latent_poisson(m, cfg);
  ps.metadata["spatial"] = "icar";
  ps.metadata["graph_components"] = std::to_string(qp.n_components);
  note_zero_counts(d, ps);
  return ps;
}

// Weighted least squares residual of y on the columns of B with optional
// penalty; returns the residual and writes the trace of the hat matrix.
Eigen::VectorXd penalised_residual(const Eigen::MatrixXd& B, const Eigen::MatrixXd* P, double lambda,
                                   const Eigen::VectorXd& y, double* edf) {
  Eigen::MatrixXd A = B.transpose() * B;
  if (P) A += lambda * *P;
  const double ridge = 1e-10 * std::max(1.0, A.diagonal().mean());
  A.diagonal().array() += ridge;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  const Eigen::VectorXd coef = ldlt.solve(B.transpose() * y);
  if (edf) *edf = (ldlt.solve(B.transpose() * B)).trace();
  return y - B * coef;
}

Eigen::VectorXd standardize_column(const Eigen::VectorXd& z) {
  const double mean = z.mean();
  const double sd = std::sqrt((z.array() - mean).square().sum() / static_cast<double>(std::max<Eigen::Index>(z.size() - 1, 1)));
  if (!(sd > 1e-12)) throw NumericError("residualised covariate has zero variance; the spatial basis absorbs it");
  return ((z.array() - mean) / sd).matrix();
}

}  // namespace

void PriorSpec::validate() const {
  if (!(beta_precision > 0.0) || !(sigma_upper > 0.0) || !(alpha_precision > 0.0)) {
    throw ValidationError("prior precisions and sigma upper bound must be positive");
  }
}

ModelSpec ModelSpec::from_name(const std::string& name) {
  ModelSpec s;
  s.name = name;
  if (name == "Null") {
    s.family = Family::Null;
  } else if (name == "Spatial") {
    s.family = Family::SpatialIcar;
  } else if (name == "SpatialP") {
    s.family = Family::SpatialPspline;
  } else if (name == "RSR") {
    s.family = Family::Rsr;
  } else if (name == "SpatPlusP1" || name == "SpatPlusP2") {
    s.family = Family::SpatialPlus;
    s.covariate_model = CovariateModelKind::Pspline;
    s.final_spatial = name.back() == '1' ? FinalSpatial::Icar : FinalSpatial::Pspline;
  } else if (name.rfind("SpatPlus", 0) == 0 && name.size() > 8 &&
             std::all_of(name.begin() + 8, name.end(), [](unsigned char c) { return std::isdigit(c); })) {
    s.family = Family::SpatialPlus;
    s.covariate_model = CovariateModelKind::Eigen;
    s.k = std::stoi(name.substr(8));
  } else if (name == "TGMRF1" || name == "TGMRF2") {
    s.family = Family::Tgmrf;
    s.gamma_variant = name.back() == '1' ? GammaVariant::Scale : GammaVariant::Shape;
  } else {
    throw ValidationError("unknown model '" + name +
                          "' (expected Null, Spatial, SpatialP, RSR, SpatPlus<k>, SpatPlusP1, SpatPlusP2, TGMRF1, "
                          "TGMRF2)");
  }
  return s;
}

bool ModelSpec::needs_centroids() const {
  return family == Family::SpatialPspline ||
         (family == Family::SpatialPlus &&
          (covariate_model == CovariateModelKind::Pspline || final_spatial == FinalSpatial::Pspline));
}

MapStructure MapStructure::build(const AreaGraph& g) {
  MapStructure m;
  m.graph = g;
  m.icar = icar_precision(g);
  m.spectrum = full_spectrum(m.icar);
  return m;
}

TensorBasis centroid_tensor_basis(const Eigen::MatrixXd& centroids, SplineDims dims) {
  if (centroids.cols() != 2) throw ValidationError("P-spline terms need area centroids (lon, lat)");
  const Eigen::VectorXd c1 = centroids.col(0), c2 = centroids.col(1);
  const auto s1 = standardized(std::span<const double>(c1.data(), static_cast<std::size_t>(c1.size())));
  const auto s2 = standardized(std::span<const double>(c2.data(), static_cast<std::size_t>(c2.size())));
  // s1 is the inner factor
  return tensor_basis(bspline_basis(s2, dims.n_knots, dims.degree), bspline_basis(s1, dims.n_knots, dims.degree));
}

PsplineTerm make_pspline_term(const Eigen::MatrixXd& centroids, SplineDims dims) {
  PsplineTerm t;
  t.basis = centroid_tensor_basis(centroids, dims);
  const PenaltyEigen pe = penalty_eigen(t.basis.k1, t.basis.k2);
  const Eigen::Index n = t.basis.B.rows();

  Eigen::MatrixXd F(n, static_cast<Eigen::Index>(pe.null_columns.size()));
  for (std::size_t j = 0; j < pe.null_columns.size(); ++j) {
    F.col(static_cast<Eigen::Index>(j)) = t.basis.B * pe.U.col(pe.null_columns[j]);
  }
  F.rowwise() -= F.colwise().mean();
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(F, Eigen::ComputeThinU);
  const double smax = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
  int keep = 0;
  for (Eigen::Index j = 0; j < svd.singularValues().size(); ++j)
    if (svd.singularValues()(j) > 1e-8 * smax) ++keep;
  t.fixed = svd.matrixU().leftCols(keep) * std::sqrt(static_cast<double>(n));

  const auto m = static_cast<Eigen::Index>(pe.penalised_columns.size());
  t.random.resize(n, m);
  t.inner.resize(m);
  t.outer.resize(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const int c = pe.penalised_columns[static_cast<std::size_t>(j)];
    t.random.col(j) = t.basis.B * pe.U.col(c);
    t.inner(j) = pe.inner(c);
    t.outer(j) = pe.outer(c);
  }
  return t;
}

PosteriorSummary fit_null(const Dataset& d, const PriorSpec& prior, const McmcConfig& cfg) {
  Eigen::MatrixXd fixed;
  LatentPoissonModel m = base_model("Null", d, prior, fixed);
  m.design = fixed;
  PosteriorSummary ps = sample_latent_poisson(m, cfg);
  note_zero_counts(d, ps);
  return ps;
}

PosteriorSummary fit_spatial(const Dataset& d, const IcarPrecision& qp, const PriorSpec& prior,
                             const McmcConfig& cfg) {
  return icar_fit("Spatial", d, qp, full_spectrum(qp), prior, cfg);
}

PosteriorSummary fit_spatial(const Dataset& d, const MapStructure& map, const PriorSpec& prior,
                             const McmcConfig& cfg) {
  return icar_fit("Spatial", d, map.icar, map.spectrum, prior, cfg);
}

PosteriorSummary fit_spatial(const Dataset& d, const PsplineTerm& term, const PriorSpec& prior,
                             const McmcConfig& cfg) {
  if (term.random.rows() != d.size()) throw ValidationError("P-spline basis rows do not match the dataset");
  Eigen::MatrixXd fixed;
  LatentPoissonModel m = base_model("SpatialP", d, prior, fixed);
  const Eigen::Index nf = term.fixed.cols();
  for (Eigen::Index j = 0; j < nf; ++j) m.fixed_names.push_back("spline_fixed" + std::to_string(j + 1));
  m.fixed_precision.conservativeResize(m.n_fixed + nf);
  m.fixed_precision.tail(nf).setConstant(prior.beta_precision);
  m.fixed_init.conservativeResize(m.n_fixed + nf);
  m.fixed_init.tail(nf).setZero();
  m.n_fixed += static_cast<int>(nf);
  const Eigen::Index nr = term.random.cols();
  m.design.resize(d.size(), fixed.cols() + nf + nr);
  m.design << fixed, term.fixed, term.random;
  m.component_weights.resize(2, nr);
  m.component_weights.row(0) = term.inner.transpose();
  m.component_weights.row(1) = term.outer.transpose();
  m.component_names = {"sigma_s1", "sigma_s2"};
  // reported effect: the whole smooth surface, fixed spline directions included
  m.effect_map = term.random;
  PosteriorSummary ps = sample_latent_poisson(m, cfg);
  if (nf > 0) {
    // add the unpenalised part of the surface to the latent draws
    const Eigen::Index first = ps.column("spline_fixed1");
    ps.latent += ps.samples.middleCols(first, nf) * term.fixed.transpose();
  }
  ps.metadata["spatial"] = "pspline";
  ps.metadata["spline_basis"] = std::to_string(term.basis.k1) + "x" + std::to_string(term.basis.k2);
  note_zero_counts(d, ps);
  return ps;
}

RsrProjection rsr_projection(const Eigen::MatrixXd& X, const Eigen::VectorXd& w_hat) {
  const Eigen::Index n = w_hat.size();
  if (X.rows() != n) throw ValidationError("RSR: covariate rows do not match weights");
  if (!(w_hat.array() > 0.0).all()) throw ValidationError("RSR: weights must be positive");
  Eigen::MatrixXd Xs(n, X.cols() + 1);
  Xs.col(0).setOnes();
  if (X.cols() > 0) Xs.rightCols(X.cols()) = X;
  const Eigen::VectorXd wh = w_hat.array().sqrt();
  const Eigen::MatrixXd Xt = wh.asDiagonal() * Xs;
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xt);
  if (qr.rank() < Xs.cols()) throw ValidationError("RSR: X*' W X* is singular (collinear covariates)");
  const Eigen::MatrixXd Qx = qr.householderQ() * Eigen::MatrixXd::Identity(n, Xs.cols());

  RsrProjection r;
  r.projector = Eigen::MatrixXd::Identity(n, n) - Qx * Qx.transpose();
  r.projector = 0.5 * (r.projector + r.projector.transpose()).eval();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r.projector);
  r.eigenvalues = es.eigenvalues();
  const Eigen::Index keep = n - Xs.cols();
  r.L = es.eigenvectors().rightCols(keep);
  r.effect_map = wh.cwiseInverse().asDiagonal() * (r.L * r.L.transpose()) * wh.asDiagonal();
  return r;
}

PosteriorSummary fit_rsr(const Dataset& d, const MapStructure& map, const Eigen::VectorXd& w_hat,
                         const PriorSpec& prior, const McmcConfig& cfg) {
  if (map.icar.size() != d.size()) throw ValidationError("adjacency size does not match the dataset");
  const RsrProjection proj = rsr_projection(d.X, w_hat);
  Eigen::MatrixXd fixed;
  LatentPoissonModel m = base_model("RSR", d, prior, fixed);
  const int nn = map.spectrum.size() - map.spectrum.null_dim;
  const Eigen::MatrixXd V = map.spectrum.vectors.rightCols(nn);
  const Eigen::MatrixXd AV = proj.effect_map * V;
  m.design.resize(d.size(), fixed.cols() + nn);
  m.design << fixed, AV;
  m.component_weights = map.spectrum.eigenvalues.tail(nn).transpose();
  m.component_names = {"sigma"};
  m.effect_map = AV;
  PosteriorSummary ps = sample_latent_poisson(m, cfg);

  // orthogonality of every retained effect draw to W X*
  const Eigen::MatrixXd WX = w_hat.asDiagonal() * fixed;
  const double wx_norm = (fixed.transpose() * w_hat.asDiagonal()).norm();
  double worst = 0.0;
  for (Eigen::Index s = 0; s < ps.latent.rows(); ++s) {
    const Eigen::VectorXd u = ps.latent.row(s).transpose();
    const double un = u.norm();
    if (un > 0.0) worst = std::max(worst, (WX.transpose() * u).norm() / (wx_norm * un));
  }
  ps.metadata["orthogonality_max"] = fmt(worst);
  if (!(worst < 1e-8)) {
    ps.warning += std::string(ps.warning.empty() ? "" : "; ") + "RSR orthogonality check exceeded tolerance";
  }
  ps.metadata["spatial"] = "rsr";
  note_zero_counts(d, ps);
  return ps;
}

PosteriorSummary fit_rsr(const Dataset& d, const IcarPrecision& qp, const PriorSpec& prior, const McmcConfig& cfg) {
  MapStructure map;
  map.icar = qp;
  map.spectrum = full_spectrum(qp);
  const PosteriorSummary sp = icar_fit("Spatial", d, qp, map.spectrum, prior, cfg);
  return fit_rsr(d, map, sp.fitted_mu, prior, cfg);
}

CovariateModel eigen_covariate_model(const SpectralBasis& spectrum, int k) {
  const int rank = spectrum.size() - spectrum.null_dim;
  if (k < 0 || k > rank) {
    throw ValidationError("spatial+ k=" + std::to_string(k) + " outside [0, rank(Q)=" + std::to_string(rank) + "]");
  }
  CovariateModel cm;
  cm.kind = CovariateModelKind::Eigen;
  cm.k = k;
  cm.basis = k > 0 ? lowest_nonnull(spectrum, k).vectors : Eigen::MatrixXd(spectrum.size(), 0);
  return cm;
}

CovariateModel pspline_covariate_model(const Eigen::MatrixXd& centroids, SplineDims dims, double lambda) {
  CovariateModel cm;
  cm.kind = CovariateModelKind::Pspline;
  const TensorBasis tb = centroid_tensor_basis(centroids, dims);
  cm.basis = tb.B;
  cm.penalty = tensor_penalty(tb.k1, tb.k2, 1.0, 1.0).P;
  cm.lambda = lambda;
  return cm;
}

Eigen::VectorXd spatial_plus_residualize(const Dataset& d, int j, const Eigen::VectorXd& w_hat,
                                         const CovariateModel& cm, double* selected_lambda) {
  if (j < 0 || j >= d.n_covariates()) throw ValidationError("covariate index out of range");
  if (w_hat.size() != d.size() || !(w_hat.array() > 0.0).all()) {
    throw ValidationError("spatial+ weights must be positive and match the dataset");
  }
  if (cm.basis.rows() != d.size()) throw ValidationError("spatial+ basis rows do not match the dataset");
  const Eigen::VectorXd wh = w_hat.array().sqrt();
  const Eigen::VectorXd xt = wh.cwiseProduct(d.X.col(j));
  Eigen::VectorXd zt;
  if (cm.kind == CovariateModelKind::Eigen || cm.basis.cols() == 0) {
    if (cm.basis.cols() == 0) {
      zt = xt;
    } else {
      const Eigen::MatrixXd& B = cm.basis;
      zt = xt - B * (B.transpose() * B).ldlt().solve(B.transpose() * xt);
    }
  } else {
    double lambda = cm.lambda;
    if (lambda < 0.0) {
      // GCV over a log grid
      const double n = static_cast<double>(d.size());
      double best = std::numeric_limits<double>::infinity();
      for (int g = -40; g <= 40; ++g) {
        const double lam = std::pow(10.0, 0.1 * g * 1.5);
        double edf = 0.0;
        const Eigen::VectorXd r = penalised_residual(cm.basis, &cm.penalty, lam, xt, &edf);
        if (n - edf < 1.0) continue;
        const double score = n * r.squaredNorm() / ((n - edf) * (n - edf));
        if (score < best) {
          best = score;
          lambda = lam;
        }
      }
      if (lambda < 0.0) throw NumericError("spatial+ GCV found no admissible smoothing weight");
    }
    if (selected_lambda) *selected_lambda = lambda;
    zt = penalised_residual(cm.basis, &cm.penalty, lambda, xt, nullptr);
  }
  return standardize_column(wh.cwiseInverse().cwiseProduct(zt));
}

PosteriorSummary fit_spatial_plus(const Dataset& d, const MapStructure& map, const ModelSpec& spec,
                                  const PriorSpec& prior, const McmcConfig& cfg, const PosteriorSummary* spatial_fit) {
  if (spec.family != Family::SpatialPlus) throw ValidationError("fit_spatial_plus needs a spatial+ model spec");
  PosteriorSummary own;
  if (!spatial_fit) {
    own = fit_spatial(d, map, prior, cfg);
    spatial_fit = &own;
  }
  const Eigen::VectorXd& w_hat = spatial_fit->fitted_mu;

  CovariateModel cm = spec.covariate_model == CovariateModelKind::Eigen
                          ? eigen_covariate_model(map.spectrum, spec.k)
                          : pspline_covariate_model(d.centroids, spec.spline);
  Eigen::MatrixXd Z(d.size(), d.n_covariates());
  std::map<std::string, std::string> meta;
  for (int j = 0; j < d.n_covariates(); ++j) {
    double lam = -1.0;
    Z.col(j) = spatial_plus_residualize(d, j, w_hat, cm, &lam);
    if (cm.kind == CovariateModelKind::Pspline) meta["lambda_" + d.covariate_names[static_cast<std::size_t>(j)]] = fmt(lam);
  }
  const Dataset dz = with_covariates(d, Z, d.covariate_names);
  PosteriorSummary ps = spec.final_spatial == FinalSpatial::Icar
                            ? icar_fit(spec.name, dz, map.icar, map.spectrum, prior, cfg)
                            : fit_spatial(dz, make_pspline_term(d.centroids, spec.spline), prior, cfg);
  ps.model = spec.name;
  for (auto& [k, v] : meta) ps.metadata[k] = v;
  if (cm.kind == CovariateModelKind::Eigen) {
    ps.metadata["covariate_model"] = "eigen";
    ps.metadata["k"] = std::to_string(spec.k);
  } else {
    ps.metadata["covariate_model"] = "pspline";
    ps.metadata["spline_dims"] = std::to_string(spec.spline.n_knots) + "/" + std::to_string(spec.spline.degree);
  }
  ps.metadata["final_spatial"] = spec.final_spatial == FinalSpatial::Icar ? "icar" : "pspline";
  return ps;
}

PosteriorSummary fit_model(const Dataset& d, const MapStructure& map, const ModelSpec& spec, const PriorSpec& prior,
                           const McmcConfig& cfg, const PosteriorSummary* spatial_fit) {
  if (spec.needs_centroids() && !d.has_centroids()) {
    throw ValidationError("model " + spec.name + " needs area centroids (lon, lat columns)");
  }
  PosteriorSummary ps;
  switch (spec.family) {
    case Family::Null:
      ps = fit_null(d, prior, cfg);
      break;
    case Family::SpatialIcar:
      ps = fit_spatial(d, map, prior, cfg);
      break;
    case Family::SpatialPspline:
      ps = fit_spatial(d, make_pspline_term(d.centroids, spec.spline), prior, cfg);
      break;
    case Family::Rsr: {
      PosteriorSummary own;
      if (!spatial_fit) {
        own = fit_spatial(d, map, prior, cfg);
        spatial_fit = &own;
      }
      ps = fit_rsr(d, map, spatial_fit->fitted_mu, prior, cfg);
      break;
    }
    case Family::SpatialPlus:
      ps = fit_spatial_plus(d, map, spec, prior, cfg, spatial_fit);
      break;
    case Family::Tgmrf:
      ps = fit_tgmrf(d, map.graph, spec.gamma_variant, prior, cfg);
      break;
  }
  ps.model = spec.name;
  return ps;
}

}  // namespace spconf
