#include <boost/math/distributions/chi_squared.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>

#include "doctest.h"
#include "oracles.hpp"
#include "spconf/errors.hpp"
#include "spconf/inference.hpp"
#include "spconf/rng.hpp"

using namespace spconf;

namespace {

McmcConfig desk() {
  McmcConfig c;
  c.chains = 2;
  c.iterations = 2000;
  c.burn_in = 500;
  c.thin = 5;
  c.seed = 11;
  return c;
}

Eigen::VectorXd poisson_draw(const Eigen::VectorXd& mu, Rng& rng) {
  Eigen::VectorXd y(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    boost::random::poisson_distribution<long, double> p(mu(i));
    y(i) = static_cast<double>(p(rng));
  }
  return y;
}

Eigen::VectorXd normals(Eigen::Index n, Rng& rng) {
  return Eigen::VectorXd::NullaryExpr(n, [&] { return std_normal(rng); });
}

}  // namespace

TEST_CASE("null model, intercept only") {
  Rng rng(1);
  const Eigen::VectorXd e = Eigen::VectorXd::Constant(30, 20.0);
  const Eigen::VectorXd y = poisson_draw(e * 1.3, rng);
  const Dataset d = make_dataset(y, e, Eigen::MatrixXd(30, 0));
  const PosteriorSummary ps = fit_null(d, PriorSpec{}, desk());
  const double mle = std::log(y.sum() / e.sum());
  CHECK(std::abs(ps.at("alpha").mean - mle) < 2.0 * ps.at("alpha").sd);
  CHECK(ps.fitted_risk.size() == 30);
}

TEST_CASE("null model against IRLS") {
  Rng rng(2);
  const int n = 200;
  const Eigen::VectorXd x = normals(n, rng);
  const Eigen::VectorXd e = Eigen::VectorXd::Constant(n, 1000.0);
  const Dataset d0 = make_dataset(poisson_draw((e.array() * (0.5 * x.array()).exp()).matrix(), rng), e, x);
  const PosteriorSummary ps = fit_null(d0, PriorSpec{}, desk());
  Eigen::MatrixXd X(n, 2);
  X.col(0).setOnes();
  X.col(1) = d0.X.col(0);
  const oracle::GlmFit mle = oracle::irls_poisson(X, d0.y, d0.e.array().log());
  const auto& b = ps.at(d0.covariate_names[0]);
  CHECK(std::abs(b.mean - mle.beta(1)) < 2.0 * b.sd);
  CHECK(b.sd == doctest::Approx(std::sqrt(mle.cov(1, 1))).epsilon(0.15));
  // back on the raw scale the truth 0.5 is recovered
  CHECK(std::abs(b.mean / d0.covariate_sds[0] - 0.5) < 2.0 * b.sd / d0.covariate_sds[0]);
}

TEST_CASE("same seed, same chains") {
  Rng rng(3);
  const Eigen::VectorXd e = Eigen::VectorXd::Constant(20, 50.0);
  const Eigen::VectorXd x = normals(20, rng);
  const Dataset d = make_dataset(poisson_draw(e, rng), e, x);
  const PosteriorSummary a = fit_null(d, PriorSpec{}, desk());
  const PosteriorSummary b = fit_null(d, PriorSpec{}, desk());
  CHECK((a.samples - b.samples).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("spatial model without a field") {
  Rng rng(4);
  const AreaGraph g = lattice_graph(6, 5);
  const int n = g.size();
  const Eigen::VectorXd x = normals(n, rng);
  const Eigen::VectorXd e = Eigen::VectorXd::Constant(n, 400.0);
  const Dataset d = make_dataset(poisson_draw((e.array() * (0.3 * x.array()).exp()).matrix(), rng), e, x);
  const PosteriorSummary ps = fit_spatial(d, icar_precision(g), PriorSpec{}, desk());
  Eigen::MatrixXd X(n, 2);
  X.col(0).setOnes();
  X.col(1) = d.X.col(0);
  const oracle::GlmFit mle = oracle::irls_poisson(X, d.y, d.e.array().log());
  const auto& b = ps.at(d.covariate_names[0]);
  CHECK(std::abs(b.mean - mle.beta(1)) < 2.0 * b.sd);
  CHECK(ps.at("sigma").mean < 0.1);
}

TEST_CASE("spatial effect is recentred within every component") {
  Rng rng(5);
  const AreaGraph g = AreaGraph::from_edges(7, {{0, 1}, {1, 2}, {2, 3}, {4, 5}, {5, 6}});
  const Eigen::VectorXd e = Eigen::VectorXd::Constant(7, 30.0);
  const Dataset d = make_dataset(poisson_draw(e, rng), e, normals(7, rng));
  McmcConfig c = desk();
  c.iterations = 600;
  c.burn_in = 100;
  const PosteriorSummary ps = fit_spatial(d, icar_precision(g), PriorSpec{}, c);
  REQUIRE(ps.latent.rows() > 0);
  double worst = 0.0;
  for (Eigen::Index s = 0; s < ps.latent.rows(); ++s) {
    worst = std::max(worst, std::abs(ps.latent.row(s).head(4).sum()));
    worst = std::max(worst, std::abs(ps.latent.row(s).tail(3).sum()));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("RSR projector algebra") {
  Rng rng(6);
  const int n = 12, p = 2;
  const Eigen::MatrixXd X = Eigen::MatrixXd::NullaryExpr(n, p, [&] { return std_normal(rng); });
  const Eigen::VectorXd w = (normals(n, rng).array() * 0.3).exp() * 20.0;
  const RsrProjection rp = rsr_projection(X, w);
  const Eigen::MatrixXd& P = rp.projector;
  CHECK((P * P - P).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((P - P.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P);
  int zeros = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = es.eigenvalues()(i);
    CHECK((std::abs(v) < 1e-9 || std::abs(v - 1.0) < 1e-9));
    zeros += std::abs(v) < 1e-9 ? 1 : 0;
  }
  CHECK(zeros == p + 1);

  Eigen::MatrixXd Xs(n, p + 1);
  Xs.col(0).setOnes();
  Xs.rightCols(p) = X;
  for (int rep = 0; rep < 5; ++rep) {
    const Eigen::VectorXd xi = normals(rp.effect_map.cols(), rng) * 10.0;
    const Eigen::VectorXd u = rp.effect_map * xi;
    CHECK((Xs.transpose() * w.asDiagonal() * u).norm() < 1e-8 * (Xs.norm() * w.maxCoeff() * u.norm()));
  }
}

TEST_CASE("RSR stays close to the null model") {
  Rng rng(7);
  const AreaGraph g = lattice_graph(7, 6);
  const int n = g.size();
  const MapStructure map = MapStructure::build(g);
  const Eigen::VectorXd x = normals(n, rng);
  Eigen::VectorXd field = map.spectrum.vectors.col(map.spectrum.null_dim) * 3.0;
  const Eigen::VectorXd e = Eigen::VectorXd::Constant(n, 100.0);
  const Dataset d =
      make_dataset(poisson_draw((e.array() * (0.3 * x.array() + 0.4 * field.array()).exp()).matrix(), rng), e, x);
  const PosteriorSummary nul = fit_null(d, PriorSpec{}, desk());
  const PosteriorSummary sp = fit_spatial(d, map, PriorSpec{}, desk());
  const PosteriorSummary rsr = fit_rsr(d, map, sp.fitted_mu, PriorSpec{}, desk());
  const std::string nm = d.covariate_names[0];
  CHECK(std::abs(rsr.at(nm).mean - nul.at(nm).mean) < 0.1 * std::abs(nul.at(nm).mean));
  CHECK(std::stod(rsr.metadata.at("orthogonality_max")) < 1e-8);
}

TEST_CASE("spatial+ residualiser") {
  Rng rng(8);
  const AreaGraph g = lattice_graph(1, 6);
  const MapStructure map = MapStructure::build(g);
  const Eigen::VectorXd e = Eigen::VectorXd::Constant(6, 10.0);
  const Dataset d = make_dataset(poisson_draw(e, rng), e, normals(6, rng));
  const Eigen::VectorXd w = (normals(6, rng).array() * 0.5).exp() * 8.0;

  const Eigen::VectorXd z0 = spatial_plus_residualize(d, 0, w, eigen_covariate_model(map.spectrum, 0));
  CHECK((z0 - oracle::standardize(d.X.col(0))).cwiseAbs().maxCoeff() < 1e-12);

  const CovariateModel cm = eigen_covariate_model(map.spectrum, 2);
  const Eigen::VectorXd z = spatial_plus_residualize(d, 0, w, cm);
  // dense weighted least squares on the two smallest non-null eigenvectors of Q
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(icar_precision(g).dense());
  const Eigen::MatrixXd B = es.eigenvectors().middleCols(1, 2);
  const Eigen::VectorXd wh = w.array().sqrt();
  const Eigen::VectorXd zt = oracle::ls_residual(B, wh.cwiseProduct(d.X.col(0)));
  CHECK((B.transpose() * zt).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((z - oracle::standardize(zt.cwiseQuotient(wh))).cwiseAbs().maxCoeff() < 1e-10);

  CHECK_THROWS_AS(eigen_covariate_model(map.spectrum, 6), ValidationError);
}

TEST_CASE("WAIC") {
  Eigen::MatrixXd same = Eigen::MatrixXd::Constant(10, 3, -1.5);
  CHECK(waic(same) == doctest::Approx(9.0).epsilon(1e-14));
  CHECK(waic_components(same).p_waic == 0.0);
  Eigen::MatrixXd two(2, 1);
  two << std::log(0.5), std::log(0.5);
  CHECK(waic(two) == doctest::Approx(-2.0 * std::log(0.5)));

  Rng rng(9);
  const Eigen::MatrixXd ll = Eigen::MatrixXd::NullaryExpr(50, 10, [&] { return -2.0 + std_normal(rng); });
  CHECK(std::abs(waic(ll) - oracle::waic(ll)) < 1e-12 * std::abs(oracle::waic(ll)));
  CHECK_THROWS_AS(waic(Eigen::MatrixXd::Zero(1, 3)), ValidationError);
}

TEST_CASE("random-walk Metropolis on a conjugate normal posterior") {
  Rng rng(10);
  const Eigen::VectorXd y = normals(15, rng).array() + 1.0;
  const double tau2 = 100.0;
  const double post_var = 1.0 / (15.0 + 1.0 / tau2);
  const double post_mean = post_var * y.sum();
  const LogDensity f = [&](const Eigen::VectorXd& t) {
    return -0.5 * (y.array() - t(0)).square().sum() - 0.5 * t(0) * t(0) / tau2;
  };
  McmcConfig c;
  c.chains = 4;
  c.iterations = 12000;
  c.burn_in = 2000;
  c.thin = 1;
  c.seed = 5;
  const ChainSet cs = run_block_metropolis(f, Eigen::VectorXd::Zero(1), {{0}}, c);
  std::vector<Eigen::VectorXd> chains;
  for (const auto& m : cs.chains) chains.push_back(m.col(0));
  const Eigen::VectorXd all = cs.stacked().col(0);
  const double ess = effective_sample_size(chains);
  const double mean = all.mean();
  const double var = (all.array() - mean).square().sum() / static_cast<double>(all.size() - 1);
  CHECK(std::abs(mean - post_mean) < 3.0 * std::sqrt(post_var / ess));
  CHECK(std::abs(var - post_var) < 3.0 * post_var * std::sqrt(2.0 / ess));
  CHECK(split_rhat(chains) < 1.01);
}

TEST_CASE("HMC on a correlated Gaussian") {
  Eigen::Matrix2d prec;
  prec << 2.0, 1.2, 1.2, 1.0;
  const Eigen::Vector2d mu(0.5, -1.0);
  const GradLogDensity f = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    const Eigen::VectorXd d = x - mu;
    if (g) *g = -prec * d;
    return -0.5 * d.dot(prec * d);
  };
  HmcKernel hmc;
  hmc.set_metric(prec);
  Rng rng(12);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(2), g;
  double lp = f(x, &g);
  const int N = 20000;
  Eigen::MatrixXd D(N, 2);
  for (int i = 0; i < 1000; ++i) hmc.step(f, x, lp, g, rng, true);
  hmc.finish_adaptation();
  for (int i = 0; i < N; ++i) {
    hmc.step(f, x, lp, g, rng, false);
    D.row(i) = x.transpose();
  }
  const Eigen::MatrixXd cov = oracle::sample_cov(D);
  const Eigen::Matrix2d want = prec.inverse();
  CHECK((D.colwise().mean().transpose() - mu).cwiseAbs().maxCoeff() < 0.05);
  CHECK((cov - want).cwiseAbs().maxCoeff() < 0.05 * want.cwiseAbs().maxCoeff());
}

TEST_CASE("simulation-based calibration, Poisson-gamma") {
  // lambda ~ Gamma(3, rate 2), y_i ~ Poisson(e_i lambda); sampler on log lambda
  const double a = 3.0, b = 2.0;
  const Eigen::VectorXd e = (Eigen::VectorXd(4) << 1.0, 2.0, 0.5, 1.5).finished();
  const int reps = 200, L = 19, bins = 10;
  std::vector<int> hist(bins, 0);
  Rng rng(2024);
  for (int r = 0; r < reps; ++r) {
    boost::random::gamma_distribution<double> gd(a, 1.0 / b);
    const double lam = gd(rng);
    const Eigen::VectorXd y = poisson_draw(e * lam, rng);
    const double sy = y.sum(), se = e.sum();
    const LogDensity f = [&](const Eigen::VectorXd& t) {
      return (a + sy) * t(0) - (b + se) * std::exp(t(0));
    };
    McmcConfig c;
    c.chains = 1;
    c.burn_in = 500;
    c.thin = 25;
    c.iterations = c.burn_in + L * c.thin;
    c.seed = derive_seed(77, {static_cast<std::uint64_t>(r)});
    const ChainSet cs = run_block_metropolis(f, Eigen::VectorXd::Constant(1, std::log((sy + 0.5) / se)), {{0}}, c);
    int rank = 0;
    for (Eigen::Index s = 0; s < cs.chains[0].rows(); ++s) rank += std::exp(cs.chains[0](s, 0)) < lam ? 1 : 0;
    ++hist[static_cast<std::size_t>(rank * bins / (L + 1))];
  }
  double chi2 = 0.0;
  const double expect = static_cast<double>(reps) / bins;
  for (int h : hist) chi2 += (h - expect) * (h - expect) / expect;
  const double p = boost::math::cdf(boost::math::complement(boost::math::chi_squared(bins - 1), chi2));
  CHECK(p > 0.01);
}
