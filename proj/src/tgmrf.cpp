#include "spconf/tgmrf.hpp"

#include <cmath>
#include <limits>
#include <thread>
#include <vector>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/erf.hpp>

#include "spconf/errors.hpp"

namespace spconf {

namespace {

using QuietPolicy = boost::math::policies::policy<
    boost::math::policies::domain_error<boost::math::policies::errno_on_error>,
    boost::math::policies::overflow_error<boost::math::policies::errno_on_error>,
    boost::math::policies::underflow_error<boost::math::policies::ignore_error>,
    boost::math::policies::evaluation_error<boost::math::policies::errno_on_error>>;

constexpr double kClamp = 1e-14;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double clamp_u(double u) { return std::min(std::max(u, kClamp), 1.0 - kClamp); }

double norm_quantile(double u) { return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * u, QuietPolicy()); }

// Standard gamma quantile at Phi(z), evaluated on the tail that keeps precision.
struct StdQuantile {
  double q = 0.0;
  bool clamped = false;
};

StdQuantile std_gamma_quantile(double a, double z) {
  StdQuantile out;
  double q;
  if (z <= 0.0) {
    const double p = 0.5 * std::erfc(-z / std::sqrt(2.0));
    out.clamped = p < kClamp;
    q = boost::math::gamma_p_inv(a, clamp_u(p), QuietPolicy());
  } else {
    const double p = 0.5 * std::erfc(z / std::sqrt(2.0));
    out.clamped = p < kClamp;
    q = boost::math::gamma_q_inv(a, clamp_u(p), QuietPolicy());
  }
  if (!(q > 1e-300) || !std::isfinite(q)) {
    out.clamped = true;
    q = std::isfinite(q) ? std::max(q, 1e-300) : 1e300;
  }
  out.q = q;
  return out;
}

// d log q / dz = phi(z) / (q f(q; a))
double dlogq_dz(double a, double q, double z) {
  const double lphi = -0.5 * z * z - kLogSqrt2Pi;
  return std::exp(lphi - a * std::log(q) + q + std::lgamma(a));
}

// log of the standard gamma quantile at Phi(z) for one shape, as a cubic
// Hermite table on [-6, 6] built from exact values and slopes. Used inside
// the HMC target, where every area shares the shape; out of range is exact.
class LogQuantileTable {
 public:
  static constexpr double kHalfWidth = 6.0;
  static constexpr int kIntervals = 240;

  double shape() const { return a_; }

  void build(double a) {
    a_ = a;
    h_ = 2.0 * kHalfWidth / kIntervals;
    v_.resize(kIntervals + 1);
    d_.resize(kIntervals + 1);
    ok_ = true;
    for (int j = 0; j <= kIntervals; ++j) {
      const double z = -kHalfWidth + j * h_;
      const StdQuantile q = std_gamma_quantile(a, z);
      ok_ = ok_ && !q.clamped;
      v_[j] = std::log(q.q);
      d_[j] = dlogq_dz(a, q.q, z);
    }
  }

  // false when z is off the table; then the caller evaluates exactly
  bool eval(double z, double& logq, double& slope) const {
    if (!ok_ || !(z > -kHalfWidth && z < kHalfWidth)) return false;
    const double x = (z + kHalfWidth) / h_;
    const int j = std::min(static_cast<int>(x), kIntervals - 1);
    const double t = x - j, t2 = t * t, t3 = t2 * t;
    const double p0 = v_[j], p1 = v_[j + 1], m0 = d_[j] * h_, m1 = d_[j + 1] * h_;
    logq = (2 * t3 - 3 * t2 + 1) * p0 + (t3 - 2 * t2 + t) * m0 + (-2 * t3 + 3 * t2) * p1 + (t3 - t2) * m1;
    slope = ((6 * t2 - 6 * t) * p0 + (3 * t2 - 4 * t + 1) * m0 + (-6 * t2 + 6 * t) * p1 + (3 * t2 - 2 * t) * m1) / h_;
    return true;
  }

 private:
  double a_ = std::numeric_limits<double>::quiet_NaN();
  double h_ = 0.0;
  bool ok_ = false;
  std::vector<double> v_, d_;
};

double gamma_logpdf(double r, double shape, double scale) {
  return (shape - 1.0) * std::log(r) - r / scale - std::lgamma(shape) - shape * std::log(scale);
}

double gamma_cdf(double r, double shape, double scale) {
  return boost::math::gamma_p(shape, r / scale, QuietPolicy());
}

}  // namespace

ScaledCarFamily::ScaledCarFamily(const AreaGraph& g) {
  const int n = g.size();
  if (n < 1) throw ValidationError("graph has no areas");
  if (n > 1 && !g.connected()) {
    throw ValidationError("proper CAR scaling needs a connected graph (graph has " + std::to_string(g.n_components()) +
                          " components)");
  }
  degree_.resize(n);
  for (int i = 0; i < n; ++i) degree_(i) = g.degree(i);
  edges_ = g.edges();
  if (n == 1) return;
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(n, n);
  for (const auto& [i, j] : edges_) {
    const double v = 1.0 / std::sqrt(degree_(i) * degree_(j));
    C(i, j) = v;
    C(j, i) = v;
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
  gamma_ = es.eigenvalues();
  u2_ = degree_.cwiseInverse().asDiagonal() * es.eigenvectors().array().square().matrix();
}

ScaledCarPrecision ScaledCarFamily::at(double rho) const {
  if (!(rho >= 0.0) || !(rho < 1.0)) throw ValidationError("rho must lie in [0, 1)");
  const Eigen::Index n = degree_.size();
  ScaledCarPrecision p;
  p.rho = rho;
  if (n == 1) {
    p.Q_star = Eigen::MatrixXd::Identity(1, 1);
    p.lambda = Eigen::VectorXd::Ones(1);
    return p;
  }
  const Eigen::ArrayXd one_minus = 1.0 - rho * gamma_.array();
  if (!(one_minus > 0.0).all()) throw NumericError("D - rho M is not positive definite");
  // (D - rho M)^{-1} = D^{-1/2} U diag(1 / (1 - rho gamma)) U' D^{-1/2}
  p.lambda = u2_ * one_minus.inverse().matrix();
  const Eigen::VectorXd s = p.lambda.array().sqrt();
  p.Q_star = Eigen::MatrixXd::Zero(n, n);
  p.Q_star.diagonal() = p.lambda.cwiseProduct(degree_);
  for (const auto& [i, j] : edges_) {
    const double v = -rho * s(i) * s(j);
    p.Q_star(i, j) = v;
    p.Q_star(j, i) = v;
  }
  // |Q*| = |Lambda| |D| prod(1 - rho gamma)
  p.log_det = p.lambda.array().log().sum() + degree_.array().log().sum() + one_minus.log().sum();
  return p;
}

ScaledCarPrecision scaled_car_precision(const AreaGraph& g, double rho) { return ScaledCarFamily(g).at(rho); }

double GammaMarginalSpec::shape(Eigen::Index i) const {
  return variant == GammaVariant::Scale ? 1.0 / upsilon : std::exp(eta(i)) / upsilon;
}

double GammaMarginalSpec::scale(Eigen::Index i) const {
  return variant == GammaVariant::Scale ? upsilon * std::exp(eta(i)) : upsilon;
}

double tgmrf_log_density(const Eigen::VectorXd& r, const GammaMarginalSpec& spec, const ScaledCarPrecision& prec) {
  const Eigen::Index n = r.size();
  if (spec.eta.size() != n || prec.size() != n) throw ValidationError("TGMRF density: dimension mismatch");
  if (!(spec.upsilon > 0.0)) throw ValidationError("upsilon must be positive");
  Eigen::VectorXd z(n);
  double lp = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(r(i) > 0.0) || !std::isfinite(r(i))) throw ValidationError("TGMRF density needs positive risks");
    const double a = spec.shape(i), s = spec.scale(i);
    lp += gamma_logpdf(r(i), a, s);
    const double u = gamma_cdf(r(i), a, s);
    z(i) = norm_quantile(clamp_u(u));
  }
  const double quad = z.dot(prec.Q_star * z) - z.squaredNorm();
  return lp + 0.5 * prec.log_det - 0.5 * quad;
}

Eigen::VectorXd tgmrf_risk(const Eigen::VectorXd& z, const GammaMarginalSpec& spec) {
  if (spec.eta.size() != z.size()) throw ValidationError("TGMRF risk: dimension mismatch");
  Eigen::VectorXd r(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) r(i) = spec.scale(i) * std_gamma_quantile(spec.shape(i), z(i)).q;
  return r;
}

namespace {

struct TgmrfChainOutput {
  Eigen::MatrixXd draws, loglik, latent;
  Eigen::VectorXd mu_sum, risk_sum;
  long clamped = 0;
};

class TgmrfChain {
 public:
  TgmrfChain(const Dataset& d, const AreaGraph& g, GammaVariant variant, const PriorSpec& prior,
             const McmcConfig& cfg)
      : d_(d), family_(g), variant_(variant), cfg_(cfg) {
    n_ = d.size();
    nf_ = d.n_covariates() + 1;
    F_.resize(n_, nf_);
    F_.col(0).setOnes();
    if (d.n_covariates() > 0) F_.rightCols(d.n_covariates()) = d.X;
    prec_ = Eigen::VectorXd::Constant(nf_, prior.beta_precision);
    prec_(0) = prior.alpha_precision;
    log_e_ = d.e.array().log();
  }

  TgmrfChainOutput run(int chain) {
    Rng rng(cfg_.seed + static_cast<std::uint64_t>(chain));
    const Eigen::Index dim = nf_ + n_;
    x_ = Eigen::VectorXd::Zero(dim);
    const double sy = d_.y.sum();
    x_(0) = std::log((sy > 0.0 ? sy : 0.5) / d_.e.sum());
    upsilon_ = 1.0;
    car_ = family_.at(0.5);

    Eigen::VectorXd grad(dim);
    double lp = log_post(x_, &grad, nullptr);
    if (!std::isfinite(lp)) throw NumericError("TGMRF: log posterior is not finite at the initial state");

    Eigen::VectorXd jz, jeta, mu;
    local_terms(x_, jz, jeta, mu);
    ref_jz_ = jz;
    ref_jeta_ = jeta;
    ref_w_ = mu;
    HmcKernel hmc(0.8, 1.5, 64);
    hmc.set_step_size(0.2);
    hmc.set_metric(mass());
    double metric_rho = car_.rho;
    hmc.restart_adaptation();

    AdaptiveBlockMetropolis ups_nc({{0}}, 0.35, cfg_.adaptation_window);
    AdaptiveBlockMetropolis ups_c({{0}}, 0.35, cfg_.adaptation_window);
    AdaptiveBlockMetropolis rho_rw({{0}}, 0.35, cfg_.adaptation_window);
    ups_nc.set_initial_scale(0, 0.2);
    ups_c.set_initial_scale(0, 0.2);
    rho_rw.set_initial_scale(0, 0.5);

    Eigen::VectorXd mu_acc = Eigen::VectorXd::Zero(n_);
    long acc_count = 0;

    TgmrfChainOutput out;
    const int keep = cfg_.retained_per_chain();
    out.draws.resize(keep, nf_ + 2);
    out.loglik.resize(keep, n_);
    out.latent.resize(keep, n_);
    out.mu_sum = Eigen::VectorXd::Zero(n_);
    out.risk_sum = Eigen::VectorXd::Zero(n_);
    int kept = 0;

    for (int it = 0; it < cfg_.iterations; ++it) {
      const bool adapt = it < cfg_.burn_in;
      if (car_.rho != metric_rho) {
        hmc.set_metric(mass());
        metric_rho = car_.rho;
      }
      hmc.step([this](const Eigen::VectorXd& v, Eigen::VectorXd* gr) { return log_post(v, gr, nullptr); }, x_, lp,
               grad, rng, adapt);

      update_upsilon_noncentred(ups_nc, rng, adapt);
      update_upsilon_centred(ups_c, rng, adapt);
      update_rho(rho_rw, rng, adapt);
      lp = log_post(x_, &grad, nullptr);

      if (adapt) {
        local_terms(x_, jz, jeta, mu);
        mu_acc += mu;
        ++acc_count;
        if ((it + 1) % cfg_.adaptation_window == 0 && it + 1 < cfg_.burn_in) {
          ref_w_ = mu_acc / static_cast<double>(acc_count);
          ref_jz_ = jz;
          ref_jeta_ = jeta;
          mu_acc.setZero();
          acc_count = 0;
          hmc.set_metric(mass());
          metric_rho = car_.rho;
          hmc.restart_adaptation();
        }
        if (it + 1 == cfg_.burn_in) hmc.finish_adaptation();
      }

      if (cfg_.retain(it) && kept < keep) {
        long cl = 0;
        const Eigen::VectorXd r = risk(x_, upsilon_, &cl);
        out.clamped += cl;
        out.draws.row(kept).head(nf_) = x_.head(nf_).transpose();
        out.draws(kept, nf_) = upsilon_;
        out.draws(kept, nf_ + 1) = car_.rho;
        for (Eigen::Index i = 0; i < n_; ++i) out.loglik(kept, i) = poisson_logpmf(d_.y(i), d_.e(i) * r(i));
        out.latent.row(kept) = x_.tail(n_).transpose();
        out.mu_sum += d_.e.cwiseProduct(r);
        out.risk_sum += r;
        ++kept;
      }
    }
    return out;
  }

 private:
  GammaMarginalSpec spec_for(const Eigen::VectorXd& x, double ups) const {
    GammaMarginalSpec s;
    s.variant = variant_;
    s.upsilon = ups;
    s.eta = F_ * x.head(nf_);
    return s;
  }

  Eigen::VectorXd risk(const Eigen::VectorXd& x, double ups, long* clamped) const {
    const GammaMarginalSpec s = spec_for(x, ups);
    Eigen::VectorXd r(n_);
    for (Eigen::Index i = 0; i < n_; ++i) {
      const StdQuantile q = std_gamma_quantile(s.shape(i), x(nf_ + i));
      if (clamped && q.clamped) ++*clamped;
      r(i) = s.scale(i) * q.q;
    }
    return r;
  }

  // d log r / dz, d log r / d eta and mu = e r at x.
  void local_terms(const Eigen::VectorXd& x, Eigen::VectorXd& jz, Eigen::VectorXd& jeta, Eigen::VectorXd& mu) const {
    const GammaMarginalSpec s = spec_for(x, upsilon_);
    jz.resize(n_);
    jeta.resize(n_);
    mu.resize(n_);
    for (Eigen::Index i = 0; i < n_; ++i) {
      const double a = s.shape(i), z = x(nf_ + i);
      const StdQuantile q = std_gamma_quantile(a, z);
      mu(i) = d_.e(i) * s.scale(i) * q.q;
      jz(i) = q.clamped ? 0.0 : dlogq_dz(a, q.q, z);
      if (variant_ == GammaVariant::Scale) {
        jeta(i) = 1.0;
      } else {
        // shape a = exp(eta)/upsilon: d log q / d log a by central differences
        const double h = 1e-5;
        const double qp = std_gamma_quantile(a * std::exp(h), z).q;
        const double qm = std_gamma_quantile(a * std::exp(-h), z).q;
        jeta(i) = (std::log(qp) - std::log(qm)) / (2.0 * h);
      }
    }
  }

  double log_post(const Eigen::VectorXd& x, Eigen::VectorXd* grad, long* clamped) const {
    const GammaMarginalSpec s = spec_for(x, upsilon_);
    const Eigen::VectorXd z = x.tail(n_);
    const Eigen::VectorXd Qz = car_.Q_star * z;
    double lp = -0.5 * z.dot(Qz) - 0.5 * (prec_.array() * x.head(nf_).array().square()).sum();
    const bool tabled = variant_ == GammaVariant::Scale;
    if (tabled && table_.shape() != s.shape(0)) table_.build(s.shape(0));
    Eigen::VectorXd sz(n_), se(n_);
    for (Eigen::Index i = 0; i < n_; ++i) {
      const double a = s.shape(i), zi = z(i);
      double logq, slope;
      if (!tabled || !table_.eval(zi, logq, slope)) {
        const StdQuantile q = std_gamma_quantile(a, zi);
        if (clamped && q.clamped) ++*clamped;
        logq = std::log(q.q);
        slope = q.clamped || !grad ? 0.0 : dlogq_dz(a, q.q, zi);
      }
      const double logr = std::log(s.scale(i)) + logq;
      const double mu = std::exp(log_e_(i) + logr);
      lp += d_.y(i) * (log_e_(i) + logr) - mu;
      if (grad) {
        const double res = d_.y(i) - mu;
        sz(i) = res * slope;
        if (variant_ == GammaVariant::Scale) {
          se(i) = res;
        } else {
          const double h = 1e-5;
          const double qp = std_gamma_quantile(a * std::exp(h), zi).q;
          const double qm = std_gamma_quantile(a * std::exp(-h), zi).q;
          se(i) = res * (std::log(qp) - std::log(qm)) / (2.0 * h);
        }
      }
    }
    if (grad) {
      grad->resize(nf_ + n_);
      grad->head(nf_) = F_.transpose() * se - prec_.cwiseProduct(x.head(nf_));
      grad->tail(n_) = sz - Qz;
    }
    return std::isfinite(lp) ? lp : -std::numeric_limits<double>::infinity();
  }

  Eigen::MatrixXd mass() const {
    const Eigen::Index dim = nf_ + n_;
    Eigen::MatrixXd G(n_, dim);
    G.leftCols(nf_) = ref_jeta_.asDiagonal() * F_;
    G.rightCols(n_) = ref_jz_.asDiagonal();
    const Eigen::VectorXd w = ref_w_.array().max(1e-6);
    Eigen::MatrixXd M = G.transpose() * w.asDiagonal() * G;
    M.diagonal().head(nf_) += prec_;
    M.bottomRightCorner(n_, n_) += car_.Q_star;
    return M;
  }

  double poisson_part(const Eigen::VectorXd& r) const {
    return (d_.y.array() * (log_e_.array() + r.array().log()) - d_.e.array() * r.array()).sum();
  }

  // upsilon ~ Gamma(0.01, rate 0.01), on the log scale with its Jacobian
  static double log_prior_log_upsilon(double lu) { return 0.01 * lu - 0.01 * std::exp(lu); }

  void update_upsilon_noncentred(AdaptiveBlockMetropolis& rw, Rng& rng, bool adapt) {
    auto f = [this](const Eigen::VectorXd& v) {
      const Eigen::VectorXd r = risk(x_, std::exp(v(0)), nullptr);
      if (!r.allFinite() || !(r.array() > 0.0).all()) return -std::numeric_limits<double>::infinity();
      return poisson_part(r) + log_prior_log_upsilon(v(0));
    };
    Eigen::VectorXd v(1);
    v(0) = std::log(upsilon_);
    double lp = f(v);
    rw.update_block(0, f, v, lp, rng, adapt);
    upsilon_ = std::exp(v(0));
  }

  // Holds the risks fixed and moves upsilon; z follows deterministically.
  void update_upsilon_centred(AdaptiveBlockMetropolis& rw, Rng& rng, bool adapt) {
    long cl = 0;
    const Eigen::VectorXd r = risk(x_, upsilon_, &cl);
    if (cl > 0) return;
    const Eigen::VectorXd eta = F_ * x_.head(nf_);
    auto f = [&](const Eigen::VectorXd& v) {
      GammaMarginalSpec s;
      s.variant = variant_;
      s.upsilon = std::exp(v(0));
      s.eta = eta;
      const double lp = log_density_unclamped(r, s);
      return std::isfinite(lp) ? lp + log_prior_log_upsilon(v(0)) : lp;
    };
    Eigen::VectorXd v(1);
    v(0) = std::log(upsilon_);
    double lp = f(v);
    if (!std::isfinite(lp)) return;
    if (rw.update_block(0, f, v, lp, rng, adapt)) {
      upsilon_ = std::exp(v(0));
      GammaMarginalSpec s = spec_for(x_, upsilon_);
      for (Eigen::Index i = 0; i < n_; ++i) {
        x_(nf_ + i) = norm_quantile(gamma_cdf(r(i), s.shape(i), s.scale(i)));
      }
    }
  }

  // tgmrf_log_density, or -inf when any F_i(r_i) falls in the clamped tails.
  double log_density_unclamped(const Eigen::VectorXd& r, const GammaMarginalSpec& s) const {
    Eigen::VectorXd z(n_);
    double lp = 0.0;
    for (Eigen::Index i = 0; i < n_; ++i) {
      const double a = s.shape(i), sc = s.scale(i);
      const double u = gamma_cdf(r(i), a, sc);
      if (!(u > kClamp && u < 1.0 - kClamp)) return -std::numeric_limits<double>::infinity();
      lp += gamma_logpdf(r(i), a, sc);
      z(i) = norm_quantile(u);
    }
    return lp + 0.5 * car_.log_det - 0.5 * (z.dot(car_.Q_star * z) - z.squaredNorm());
  }

  void update_rho(AdaptiveBlockMetropolis& rw, Rng& rng, bool adapt) {
    const Eigen::VectorXd z = x_.tail(n_);
    ScaledCarPrecision cand;
    auto f = [&](const Eigen::VectorXd& v) {
      const double rho = 1.0 / (1.0 + std::exp(-v(0)));
      if (!(rho < 1.0) || !(rho > 0.0)) return -std::numeric_limits<double>::infinity();
      const ScaledCarPrecision& p = rho == car_.rho ? car_ : (cand = family_.at(rho));
      return 0.5 * p.log_det - 0.5 * z.dot(p.Q_star * z) + std::log(rho) + std::log1p(-rho);
    };
    Eigen::VectorXd v(1);
    v(0) = std::log(car_.rho / (1.0 - car_.rho));
    double lp = f(v);
    if (rw.update_block(0, f, v, lp, rng, adapt)) car_ = std::move(cand);
  }

  const Dataset& d_;
  ScaledCarFamily family_;
  GammaVariant variant_;
  const McmcConfig& cfg_;
  Eigen::Index n_ = 0, nf_ = 0;
  Eigen::MatrixXd F_;
  Eigen::VectorXd prec_, log_e_;
  Eigen::VectorXd x_;
  double upsilon_ = 1.0;
  ScaledCarPrecision car_;
  Eigen::VectorXd ref_jz_, ref_jeta_, ref_w_;
  mutable LogQuantileTable table_;
};

}  // namespace

PosteriorSummary fit_tgmrf(const Dataset& d, const AreaGraph& g, GammaVariant variant, const PriorSpec& prior,
                           const McmcConfig& cfg) {
  cfg.validate();
  prior.validate();
  d.validate();
  if (g.size() != d.size()) throw ValidationError("adjacency has " + std::to_string(g.size()) +
                                                  " areas but the dataset has " + std::to_string(d.size()));
  if (!g.connected()) throw ValidationError("TGMRF needs a connected adjacency graph (graph has " +
                                            std::to_string(g.n_components()) + " components)");

  std::vector<TgmrfChainOutput> outs(static_cast<std::size_t>(cfg.chains));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.chains));
  auto run_one = [&](int c) {
    try {
      TgmrfChain chain(d, g, variant, prior, cfg);
      outs[static_cast<std::size_t>(c)] = chain.run(c);
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  };
  const int workers = std::min(cfg.workers, cfg.chains);
  if (workers <= 1) {
    for (int c = 0; c < cfg.chains; ++c) run_one(c);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (int c = w; c < cfg.chains; c += workers) run_one(c);
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<std::string> names = {"alpha"};
  for (const auto& nm : d.covariate_names) names.push_back(nm);
  names.push_back("upsilon");
  names.push_back("rho");
  std::vector<Eigen::MatrixXd> draws, ll, lat;
  Eigen::VectorXd mu_sum = Eigen::VectorXd::Zero(d.size()), risk_sum = Eigen::VectorXd::Zero(d.size());
  long clamped = 0;
  for (auto& o : outs) {
    draws.push_back(std::move(o.draws));
    ll.push_back(std::move(o.loglik));
    lat.push_back(std::move(o.latent));
    mu_sum += o.mu_sum;
    risk_sum += o.risk_sum;
    clamped += o.clamped;
  }
  const std::string name = variant == GammaVariant::Scale ? "TGMRF1" : "TGMRF2";
  PosteriorSummary ps = summarize_chains(name, names, draws, ll, lat, mu_sum, risk_sum);
  ps.metadata["clamped_quantiles"] = std::to_string(clamped);
  if (clamped > 0) {
    ps.warning += std::string(ps.warning.empty() ? "" : "; ") + std::to_string(clamped) +
                  " clamped quantile inversions";
  }
  return ps;
}

}  // namespace spconf
