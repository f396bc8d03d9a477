#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include <boost/math/distributions/gamma.hpp>

#include "spconf/errors.hpp"
#include "spconf/inference.hpp"

namespace spconf {

double poisson_logpmf(double y, double mu) {
  if (mu <= 0.0) return y == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
  return y * std::log(mu) - mu - std::lgamma(y + 1.0);
}

WaicResult waic_components(const Eigen::MatrixXd& loglik) {
  const Eigen::Index s = loglik.rows();
  if (s < 2) throw ValidationError("WAIC needs at least two draws");
  if (!loglik.allFinite()) throw ValidationError("WAIC input contains non-finite log-likelihood values");
  WaicResult r;
  for (Eigen::Index i = 0; i < loglik.cols(); ++i) {
    const auto col = loglik.col(i);
    const double mx = col.maxCoeff();
    const double lme = mx + std::log((col.array() - mx).exp().sum() / static_cast<double>(s));
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / static_cast<double>(s - 1);
    r.lppd += lme;
    r.p_waic += var;
  }
  r.waic = -2.0 * (r.lppd - r.p_waic);
  return r;
}

double waic(const Eigen::MatrixXd& loglik) { return waic_components(loglik).waic; }

const ParameterSummary& PosteriorSummary::at(const std::string& name) const {
  for (const auto& p : parameters)
    if (p.name == name) return p;
  throw ValidationError("posterior summary of model '" + model + "' has no parameter '" + name + "'");
}

bool PosteriorSummary::has(const std::string& name) const {
  return std::any_of(parameters.begin(), parameters.end(), [&](const auto& p) { return p.name == name; });
}

int PosteriorSummary::column(const std::string& name) const {
  for (std::size_t k = 0; k < parameters.size(); ++k)
    if (parameters[k].name == name) return static_cast<int>(k);
  throw ValidationError("posterior summary of model '" + model + "' has no parameter '" + name + "'");
}

PosteriorSummary summarize_chains(const std::string& model, const std::vector<std::string>& names,
                                  const std::vector<Eigen::MatrixXd>& draws,
                                  const std::vector<Eigen::MatrixXd>& loglik,
                                  const std::vector<Eigen::MatrixXd>& latent, const Eigen::VectorXd& mu_sum,
                                  const Eigen::VectorXd& risk_sum) {
  PosteriorSummary ps;
  ps.model = model;
  ps.chains = static_cast<int>(draws.size());
  ps.draws_per_chain = draws.empty() ? 0 : static_cast<int>(draws.front().rows());
  ChainSet cs{draws};
  ps.samples = cs.stacked();
  ps.loglik = ChainSet{loglik}.stacked();
  if (!latent.empty() && latent.front().cols() > 0) ps.latent = ChainSet{latent}.stacked();
  const double total = static_cast<double>(ps.samples.rows());
  ps.fitted_mu = mu_sum / total;
  ps.fitted_risk = risk_sum / total;

  std::string gate_fail;
  for (std::size_t k = 0; k < names.size(); ++k) {
    const auto col = static_cast<Eigen::Index>(k);
    ParameterSummary p;
    p.name = names[k];
    const Eigen::VectorXd all = ps.samples.col(col);
    p.mean = all.mean();
    p.sd = all.size() > 1 ? std::sqrt((all.array() - p.mean).square().sum() / static_cast<double>(all.size() - 1)) : 0.0;
    p.q025 = quantile(all, 0.025);
    p.q975 = quantile(all, 0.975);
    std::vector<Eigen::VectorXd> per_chain;
    for (const auto& c : draws) per_chain.emplace_back(c.col(col));
    p.rhat = split_rhat(per_chain);
    p.ess = effective_sample_size(per_chain);
    if (!(p.rhat < 1.05) || !(p.ess > 400.0)) gate_fail += (gate_fail.empty() ? "" : ",") + p.name;
    ps.parameters.push_back(std::move(p));
  }
  if (!gate_fail.empty()) {
    ps.converged = false;
    ps.warning = "rhat>=1.05 or ess<=400: " + gate_fail;
  }
  const WaicResult w = waic_components(ps.loglik);
  ps.waic = w.waic;
  ps.p_waic = w.p_waic;
  return ps;
}

namespace {

struct ChainOutput {
  Eigen::MatrixXd draws;
  Eigen::MatrixXd loglik;
  Eigen::MatrixXd latent;
  Eigen::VectorXd mu_sum;
  Eigen::VectorXd risk_sum;
};

class LatentPoissonChain {
 public:
  LatentPoissonChain(const LatentPoissonModel& m, const McmcConfig& cfg) : m_(m), cfg_(cfg) {
    n_ = m.y.size();
    d_ = m.design.cols();
    n_lat_ = d_ - m.n_fixed;
    n_comp_ = n_lat_ > 0 ? m.component_weights.rows() : 0;
    if (n_comp_ > 0) {
      rank_.resize(n_comp_);
      for (Eigen::Index c = 0; c < n_comp_; ++c) rank_(c) = (m.component_weights.row(c).array() > 0.0).count();
    }
  }

  ChainOutput run(int chain) {
    Rng rng(cfg_.seed + static_cast<std::uint64_t>(chain));
    theta_ = Eigen::VectorXd::Zero(d_);
    theta_.head(m_.n_fixed) = m_.fixed_init;
    sigma_ = Eigen::VectorXd::Constant(n_comp_, m_.sigma_init);

    Eigen::VectorXd grad(d_);
    double lp = log_post(theta_, &grad);
    if (!std::isfinite(lp)) throw NumericError(m_.name + ": log posterior is not finite at the initial state");

    Eigen::VectorXd w_bar = eta_mu(theta_);
    set_weights(w_bar);
    HmcKernel hmc(0.8, 1.5, 64);
    hmc.set_step_size(0.3);
    hmc.set_metric(mass());
    hmc.restart_adaptation();

    AdaptiveBlockMetropolis sigma_rwm({index_range(n_comp_)}, 0.35, cfg_.adaptation_window);
    double log_rescale_sd = -1.0;
    long rescale_steps = 0;

    Eigen::VectorXd mu_acc = Eigen::VectorXd::Zero(n_);
    long acc_count = 0;

    ChainOutput out;
    const int keep = cfg_.retained_per_chain();
    const Eigen::Index n_params = m_.n_fixed + n_comp_;
    out.draws.resize(keep, n_params);
    out.loglik.resize(keep, n_);
    if (n_lat_ > 0) out.latent.resize(keep, n_);
    out.mu_sum = Eigen::VectorXd::Zero(n_);
    out.risk_sum = Eigen::VectorXd::Zero(n_);
    int kept = 0;

    for (int it = 0; it < cfg_.iterations; ++it) {
      const bool adapt = it < cfg_.burn_in;
      if (n_comp_ > 0) hmc.set_metric(mass());
      hmc.step([this](const Eigen::VectorXd& x, Eigen::VectorXd* g) { return log_post(x, g); }, theta_, lp, grad,
               rng, adapt);

      if (n_comp_ > 0) {
        update_sigma(rng, sigma_rwm, adapt);
        // Joint rescaling of (latent, sigma) moves along the prior funnel.
        const double step = std::exp(log_rescale_sd) * std_normal(rng);
        const double c = std::exp(step);
        if ((sigma_.array() * c).maxCoeff() < m_.sigma_upper) {
          Eigen::VectorXd prop = theta_;
          prop.tail(n_lat_) *= c;
          const double log_ratio = loglik_total(prop) - loglik_total(theta_) + static_cast<double>(n_comp_) * step;
          const bool accept = std::isfinite(log_ratio) && std::log(uniform01(rng)) < log_ratio;
          if (accept) {
            theta_ = std::move(prop);
            sigma_ *= c;
          }
          if (adapt) {
            ++rescale_steps;
            log_rescale_sd += std::pow(static_cast<double>(rescale_steps) + 1.0, -0.6) * ((accept ? 1.0 : 0.0) - 0.35);
          }
        } else if (adapt) {
          ++rescale_steps;
          log_rescale_sd += std::pow(static_cast<double>(rescale_steps) + 1.0, -0.6) * (0.0 - 0.35);
        }
        lp = log_post(theta_, &grad);
      }

      if (adapt) {
        mu_acc += eta_mu(theta_);
        ++acc_count;
        if ((it + 1) % cfg_.adaptation_window == 0 && it + 1 < cfg_.burn_in) {
          set_weights(mu_acc / static_cast<double>(acc_count));
          mu_acc.setZero();
          acc_count = 0;
          hmc.set_metric(mass());
          hmc.restart_adaptation();
        }
        if (it + 1 == cfg_.burn_in) hmc.finish_adaptation();
      }

      if (cfg_.retain(it) && kept < keep) {
        const Eigen::VectorXd eta = m_.log_offset + m_.design * theta_;
        const Eigen::VectorXd mu = eta.array().exp();
        out.draws.row(kept).head(m_.n_fixed) = theta_.head(m_.n_fixed).transpose();
        if (n_comp_ > 0) out.draws.row(kept).tail(n_comp_) = sigma_.transpose();
        for (Eigen::Index i = 0; i < n_; ++i) out.loglik(kept, i) = poisson_logpmf(m_.y(i), mu(i));
        if (n_lat_ > 0) {
          Eigen::VectorXd u = m_.effect_map * theta_.tail(n_lat_);
          recentre(u);
          out.latent.row(kept) = u.transpose();
        }
        out.mu_sum += mu;
        out.risk_sum += (eta - m_.log_offset).array().exp().matrix();
        ++kept;
      }
    }
    return out;
  }

 private:
  static std::vector<int> index_range(Eigen::Index k) {
    std::vector<int> v(static_cast<std::size_t>(k));
    for (Eigen::Index i = 0; i < k; ++i) v[static_cast<std::size_t>(i)] = static_cast<int>(i);
    return v;
  }

  Eigen::VectorXd eta_mu(const Eigen::VectorXd& th) const {
    return (m_.log_offset + m_.design * th).array().exp().matrix();
  }

  void set_weights(const Eigen::VectorXd& w) {
    const Eigen::VectorXd ww = w.array().max(1e-6).matrix();
    gram_ = m_.design.transpose() * ww.asDiagonal() * m_.design;
  }

  Eigen::VectorXd prior_precision() const {
    Eigen::VectorXd prec(d_);
    prec.head(m_.n_fixed) = m_.fixed_precision;
    if (n_lat_ > 0) {
      Eigen::VectorXd lat = Eigen::VectorXd::Zero(n_lat_);
      for (Eigen::Index c = 0; c < n_comp_; ++c) {
        lat += m_.component_weights.row(c).transpose() / (sigma_(c) * sigma_(c));
      }
      prec.tail(n_lat_) = lat;
    }
    return prec;
  }

  Eigen::MatrixXd mass() const {
    Eigen::MatrixXd M = gram_;
    M.diagonal() += prior_precision();
    return M;
  }

  double loglik_total(const Eigen::VectorXd& th) const {
    const Eigen::VectorXd eta = m_.log_offset + m_.design * th;
    return (m_.y.array() * eta.array() - eta.array().exp()).sum();
  }

  double log_post(const Eigen::VectorXd& th, Eigen::VectorXd* grad) const {
    const Eigen::VectorXd eta = m_.log_offset + m_.design * th;
    const Eigen::ArrayXd mu = eta.array().exp();
    const Eigen::VectorXd prec = prior_precision();
    const double lp =
        (m_.y.array() * eta.array() - mu).sum() - 0.5 * (prec.array() * th.array().square()).sum();
    if (grad) *grad = m_.design.transpose() * (m_.y.array() - mu).matrix() - prec.cwiseProduct(th);
    return lp;
  }

  double log_sigma_conditional(const Eigen::VectorXd& log_sigma) const {
    const Eigen::VectorXd s = log_sigma.array().exp();
    if (s.maxCoeff() >= m_.sigma_upper) return -std::numeric_limits<double>::infinity();
    const Eigen::VectorXd w = theta_.tail(n_lat_);
    Eigen::VectorXd prec = Eigen::VectorXd::Zero(n_lat_);
    for (Eigen::Index c = 0; c < n_comp_; ++c) prec += m_.component_weights.row(c).transpose() / (s(c) * s(c));
    double lp = 0.0;
    for (Eigen::Index j = 0; j < n_lat_; ++j) {
      if (prec(j) > 0.0) lp += 0.5 * std::log(prec(j)) - 0.5 * prec(j) * w(j) * w(j);
    }
    // uniform prior on sigma, sampled on the log scale
    return lp + log_sigma.sum();
  }

  void update_sigma(Rng& rng, AdaptiveBlockMetropolis& rwm, bool adapt) {
    if (n_comp_ == 1 && rank_(0) >= 2) {
      const Eigen::VectorXd w = theta_.tail(n_lat_);
      const double ss = (m_.component_weights.row(0).transpose().array() * w.array().square()).sum();
      if (!(ss > 1e-300)) return;
      // tau = 1/sigma^2 | w ~ Gamma((r-1)/2, rate ss/2) truncated to tau > 1/U^2
      const boost::math::gamma_distribution<double> dist(0.5 * (static_cast<double>(rank_(0)) - 1.0), 2.0 / ss);
      const double tau_min = 1.0 / (m_.sigma_upper * m_.sigma_upper);
      const double upper_mass = boost::math::cdf(boost::math::complement(dist, tau_min));
      double u = uniform01(rng);
      while (u <= 0.0) u = uniform01(rng);
      const double tau = boost::math::quantile(boost::math::complement(dist, u * upper_mass));
      if (std::isfinite(tau) && tau > 0.0) sigma_(0) = 1.0 / std::sqrt(tau);
      return;
    }
    Eigen::VectorXd ls = sigma_.array().log();
    double lp = log_sigma_conditional(ls);
    rwm.update_block(0, [this](const Eigen::VectorXd& v) { return log_sigma_conditional(v); }, ls, lp, rng, adapt);
    sigma_ = ls.array().exp();
  }

  void recentre(Eigen::VectorXd& u) const {
    if (m_.recentre_groups.empty()) return;
    const int g = *std::max_element(m_.recentre_groups.begin(), m_.recentre_groups.end()) + 1;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(g), cnt = Eigen::VectorXd::Zero(g);
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      sum(m_.recentre_groups[static_cast<std::size_t>(i)]) += u(i);
      cnt(m_.recentre_groups[static_cast<std::size_t>(i)]) += 1.0;
    }
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      const int k = m_.recentre_groups[static_cast<std::size_t>(i)];
      u(i) -= sum(k) / cnt(k);
    }
  }

  const LatentPoissonModel& m_;
  const McmcConfig& cfg_;
  Eigen::Index n_ = 0, d_ = 0, n_lat_ = 0, n_comp_ = 0;
  Eigen::VectorXi rank_;
  Eigen::MatrixXd gram_;
  Eigen::VectorXd theta_;
  Eigen::VectorXd sigma_;
};

}  // namespace

PosteriorSummary sample_latent_poisson(const LatentPoissonModel& m, const McmcConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = m.y.size();
  if (m.design.rows() != n || m.log_offset.size() != n) throw ValidationError(m.name + ": design dimension mismatch");
  if (m.fixed_precision.size() != m.n_fixed || m.fixed_init.size() != m.n_fixed) {
    throw ValidationError(m.name + ": fixed-effect prior dimension mismatch");
  }
  const Eigen::Index n_lat = m.design.cols() - m.n_fixed;
  if (n_lat > 0 && (m.component_weights.cols() != n_lat || m.component_weights.rows() < 1)) {
    throw ValidationError(m.name + ": latent prior weights do not match the latent block");
  }
  if (n_lat > 0 && (m.effect_map.rows() != n || m.effect_map.cols() != n_lat)) {
    throw ValidationError(m.name + ": effect map dimension mismatch");
  }

  std::vector<ChainOutput> outs(static_cast<std::size_t>(cfg.chains));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.chains));
  auto run_one = [&](int c) {
    try {
      LatentPoissonChain chain(m, cfg);
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

  std::vector<std::string> names = m.fixed_names;
  if (n_lat > 0) names.insert(names.end(), m.component_names.begin(), m.component_names.end());
  std::vector<Eigen::MatrixXd> draws, ll, lat;
  Eigen::VectorXd mu_sum = Eigen::VectorXd::Zero(n), risk_sum = Eigen::VectorXd::Zero(n);
  for (auto& o : outs) {
    draws.push_back(std::move(o.draws));
    ll.push_back(std::move(o.loglik));
    if (n_lat > 0) lat.push_back(std::move(o.latent));
    mu_sum += o.mu_sum;
    risk_sum += o.risk_sum;
  }
  return summarize_chains(m.name, names, draws, ll, lat, mu_sum, risk_sum);
}

}  // namespace spconf
