#include "spconf/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "spconf/errors.hpp"

namespace spconf {

void McmcConfig::validate() const {
  if (chains < 1) throw ValidationError("chains must be >= 1");
  if (iterations < 1) throw ValidationError("iterations must be >= 1");
  if (burn_in < 0 || burn_in >= iterations) throw ValidationError("burn_in must lie in [0, iterations)");
  if (thin < 1) throw ValidationError("thin must be >= 1");
  if (retained_per_chain() < 1) throw ValidationError("configuration retains no draws");
  if (adaptation_window < 1) throw ValidationError("adaptation_window must be >= 1");
  if (workers < 1) throw ValidationError("workers must be >= 1");
}

AdaptiveBlockMetropolis::AdaptiveBlockMetropolis(std::vector<std::vector<int>> blocks, double target_acceptance,
                                                 int adaptation_window)
    : target_(target_acceptance), window_(adaptation_window) {
  for (auto& idx : blocks) {
    Block b;
    const auto d = static_cast<Eigen::Index>(idx.size());
    b.idx = std::move(idx);
    b.log_scale = std::log(2.38 / std::sqrt(static_cast<double>(d)) * 0.1);
    b.chol = Eigen::MatrixXd::Identity(d, d);
    b.mean = Eigen::VectorXd::Zero(d);
    b.m2 = Eigen::MatrixXd::Zero(d, d);
    blocks_.push_back(std::move(b));
  }
}

void AdaptiveBlockMetropolis::set_initial_scale(std::size_t b, double scale) {
  blocks_.at(b).log_scale = std::log(scale);
}

double AdaptiveBlockMetropolis::acceptance_rate(std::size_t b) const {
  const auto& blk = blocks_.at(b);
  return blk.attempts ? static_cast<double>(blk.accepts) / static_cast<double>(blk.attempts) : 0.0;
}

bool AdaptiveBlockMetropolis::update_block(std::size_t bi, const LogDensity& f, Eigen::VectorXd& x, double& logp,
                                           Rng& rng, bool adapt) {
  Block& b = blocks_[bi];
  const auto d = static_cast<Eigen::Index>(b.idx.size());
  Eigen::VectorXd z(d);
  for (Eigen::Index k = 0; k < d; ++k) z(k) = std_normal(rng);
  const Eigen::VectorXd step = std::exp(b.log_scale) * Eigen::VectorXd(b.chol.triangularView<Eigen::Lower>() * z);
  Eigen::VectorXd prop = x;
  for (Eigen::Index k = 0; k < d; ++k) prop(b.idx[static_cast<std::size_t>(k)]) += step(k);
  const double lp = f(prop);
  const double log_u = std::log(uniform01(rng));
  const bool accept = std::isfinite(lp) && log_u < lp - logp;
  if (accept) {
    x = std::move(prop);
    logp = lp;
  }
  ++b.attempts;
  if (accept) ++b.accepts;

  if (adapt) {
    ++b.adapt_steps;
    const double gamma = std::pow(static_cast<double>(b.adapt_steps) + 1.0, -0.6);
    b.log_scale += gamma * ((accept ? 1.0 : 0.0) - target_);
    // Welford moments of the block coordinates for the proposal shape.
    Eigen::VectorXd cur(d);
    for (Eigen::Index k = 0; k < d; ++k) cur(k) = x(b.idx[static_cast<std::size_t>(k)]);
    ++b.n_seen;
    const Eigen::VectorXd delta = cur - b.mean;
    b.mean += delta / static_cast<double>(b.n_seen);
    b.m2 += delta * (cur - b.mean).transpose();
    if (d > 1 && b.adapt_steps % window_ == 0 && b.n_seen > 2 * d + 10) {
      Eigen::MatrixXd cov = b.m2 / static_cast<double>(b.n_seen - 1);
      const double ridge = 1e-8 * std::max(cov.trace() / static_cast<double>(d), 1e-300);
      cov.diagonal().array() += ridge;
      Eigen::LLT<Eigen::MatrixXd> llt(cov);
      if (llt.info() == Eigen::Success) {
        const bool first = b.chol.isIdentity();
        b.chol = llt.matrixL();
        if (first) b.log_scale = std::log(2.38 / std::sqrt(static_cast<double>(d)));
      }
    } else if (d == 1 && b.adapt_steps % window_ == 0 && b.n_seen > 20) {
      const double var = b.m2(0, 0) / static_cast<double>(b.n_seen - 1);
      if (var > 0.0 && b.chol(0, 0) == 1.0) {
        b.chol(0, 0) = std::sqrt(var);
        b.log_scale = std::log(2.38);
      }
    }
  }
  return accept;
}

void AdaptiveBlockMetropolis::sweep(const LogDensity& f, Eigen::VectorXd& x, double& logp, Rng& rng, bool adapt) {
  for (std::size_t b = 0; b < blocks_.size(); ++b) update_block(b, f, x, logp, rng, adapt);
}

Eigen::MatrixXd ChainSet::stacked() const {
  Eigen::Index rows = 0;
  for (const auto& c : chains) rows += c.rows();
  const Eigen::Index cols = chains.empty() ? 0 : chains.front().cols();
  Eigen::MatrixXd out(rows, cols);
  Eigen::Index r = 0;
  for (const auto& c : chains) {
    out.middleRows(r, c.rows()) = c;
    r += c.rows();
  }
  return out;
}

ChainSet run_block_metropolis(const LogDensity& f, const Eigen::VectorXd& init,
                              const std::vector<std::vector<int>>& blocks, const McmcConfig& cfg,
                              const std::vector<double>& initial_scales) {
  cfg.validate();
  const double lp0 = f(init);
  if (!std::isfinite(lp0)) throw NumericError("log posterior is not finite at the initial state");

  ChainSet out;
  out.chains.resize(static_cast<std::size_t>(cfg.chains));
  auto run_chain = [&](int c) {
    Rng rng(cfg.seed + static_cast<std::uint64_t>(c));
    AdaptiveBlockMetropolis sampler(blocks, 0.35, cfg.adaptation_window);
    for (std::size_t b = 0; b < initial_scales.size() && b < sampler.n_blocks(); ++b) {
      sampler.set_initial_scale(b, initial_scales[b]);
    }
    Eigen::VectorXd x = init;
    double lp = lp0;
    Eigen::MatrixXd draws(cfg.retained_per_chain(), init.size());
    int kept = 0;
    for (int it = 0; it < cfg.iterations; ++it) {
      sampler.sweep(f, x, lp, rng, it < cfg.burn_in);
      if (cfg.retain(it) && kept < draws.rows()) draws.row(kept++) = x.transpose();
    }
    out.chains[static_cast<std::size_t>(c)] = std::move(draws);
  };

  const int workers = std::min(cfg.workers, cfg.chains);
  if (workers <= 1) {
    for (int c = 0; c < cfg.chains; ++c) run_chain(c);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int c = w; c < cfg.chains; c += workers) run_chain(c);
      });
    }
    for (auto& t : pool) t.join();
  }
  return out;
}

HmcKernel::HmcKernel(double target_acceptance, double trajectory_length, int max_steps)
    : target_(target_acceptance), trajectory_(trajectory_length), max_steps_(max_steps) {
  restart_adaptation();
}

void HmcKernel::set_metric(const Eigen::MatrixXd& mass) {
  llt_.compute(mass);
  if (llt_.info() != Eigen::Success) throw NumericError("HMC mass matrix is not positive definite");
  chol_l_ = llt_.matrixL();
}

void HmcKernel::restart_adaptation() {
  mu_ = std::log(10.0 * step_size_);
  hbar_ = 0.0;
  log_eps_bar_ = std::log(step_size_);
  da_t_ = 0;
}

void HmcKernel::finish_adaptation() { step_size_ = std::exp(log_eps_bar_); }

bool HmcKernel::step(const GradLogDensity& f, Eigen::VectorXd& x, double& logp, Eigen::VectorXd& grad, Rng& rng,
                     bool adapt) {
  const Eigen::Index d = x.size();
  Eigen::VectorXd z(d);
  for (Eigen::Index k = 0; k < d; ++k) z(k) = std_normal(rng);
  Eigen::VectorXd p = chol_l_.triangularView<Eigen::Lower>() * z;
  const double k0 = 0.5 * z.squaredNorm();

  const double eps = step_size_ * (0.9 + 0.2 * uniform01(rng));
  const int n_steps = std::clamp(static_cast<int>(std::ceil(trajectory_ / step_size_)), 1, max_steps_);

  Eigen::VectorXd xn = x;
  Eigen::VectorXd g = grad;
  double lp = logp;
  bool ok = true;
  p += 0.5 * eps * g;
  for (int s = 0; s < n_steps; ++s) {
    xn += eps * llt_.solve(p);
    lp = f(xn, &g);
    if (!std::isfinite(lp) || !g.allFinite()) {
      ok = false;
      break;
    }
    p += (s + 1 == n_steps ? 0.5 : 1.0) * eps * g;
  }

  double accept_prob = 0.0;
  bool accepted = false;
  if (ok) {
    const Eigen::VectorXd w = chol_l_.triangularView<Eigen::Lower>().solve(p);
    const double k1 = 0.5 * w.squaredNorm();
    const double log_ratio = (lp - k1) - (logp - k0);
    accept_prob = std::isfinite(log_ratio) ? std::min(1.0, std::exp(std::min(0.0, log_ratio))) : 0.0;
    if (std::isfinite(log_ratio) && std::log(uniform01(rng)) < log_ratio) {
      x = std::move(xn);
      logp = lp;
      grad = std::move(g);
      accepted = true;
    }
  }
  ++attempts_;
  accept_sum_ += accept_prob;

  if (adapt) {
    constexpr double gamma = 0.05, t0 = 10.0, kappa = 0.75;
    ++da_t_;
    const double t = static_cast<double>(da_t_);
    const double eta = 1.0 / (t + t0);
    hbar_ = (1.0 - eta) * hbar_ + eta * (target_ - accept_prob);
    const double log_eps = mu_ - std::sqrt(t) / gamma * hbar_;
    step_size_ = std::clamp(std::exp(log_eps), 1e-6, 2.0 * trajectory_);
    const double w = std::pow(t, -kappa);
    log_eps_bar_ = w * std::log(step_size_) + (1.0 - w) * log_eps_bar_;
  }
  return accepted;
}

double split_rhat(const std::vector<Eigen::VectorXd>& chains) {
  std::vector<Eigen::VectorXd> halves;
  for (const auto& c : chains) {
    const Eigen::Index h = c.size() / 2;
    if (h < 2) continue;
    halves.emplace_back(c.head(h));
    halves.emplace_back(c.tail(h));
  }
  if (halves.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double n = static_cast<double>(halves.front().size());
  const double m = static_cast<double>(halves.size());
  Eigen::VectorXd means(halves.size());
  double w = 0.0;
  for (std::size_t k = 0; k < halves.size(); ++k) {
    const Eigen::VectorXd& c = halves[k];
    means(static_cast<Eigen::Index>(k)) = c.mean();
    w += (c.array() - c.mean()).square().sum() / (n - 1.0);
  }
  w /= m;
  const double b = n * (means.array() - means.mean()).square().sum() / (m - 1.0);
  if (!(w > 0.0)) return b > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  const double var_plus = (n - 1.0) / n * w + b / n;
  // Values below one carry no information beyond "no detectable disagreement".
  return std::max(1.0, std::sqrt(var_plus / w));
}

double effective_sample_size(const std::vector<Eigen::VectorXd>& chains) {
  if (chains.empty()) return 0.0;
  Eigen::Index n = chains.front().size();
  for (const auto& c : chains) n = std::min(n, c.size());
  const double m = static_cast<double>(chains.size());
  if (n < 4) return m * static_cast<double>(n);
  const double nd = static_cast<double>(n);

  std::vector<Eigen::VectorXd> acov(chains.size());
  Eigen::VectorXd means(static_cast<Eigen::Index>(chains.size()));
  double w = 0.0;
  for (std::size_t k = 0; k < chains.size(); ++k) {
    const Eigen::VectorXd c = chains[k].head(n);
    const double mu = c.mean();
    means(static_cast<Eigen::Index>(k)) = mu;
    const Eigen::VectorXd dev = c.array() - mu;
    acov[k].resize(n);
    for (Eigen::Index lag = 0; lag < n; ++lag) {
      acov[k](lag) = dev.head(n - lag).dot(dev.tail(n - lag)) / nd;
    }
    w += acov[k](0) * nd / (nd - 1.0);
  }
  w /= m;
  if (!(w > 0.0)) return m * nd;
  const double b = chains.size() > 1 ? nd * (means.array() - means.mean()).square().sum() / (m - 1.0) : 0.0;
  const double var_plus = (nd - 1.0) / nd * w + b / nd;

  auto rho = [&](Eigen::Index lag) {
    double s = 0.0;
    for (const auto& a : acov) s += a(lag);
    s /= m;
    return 1.0 - (w - s) / var_plus;
  };
  // Geyer initial monotone positive sequence on paired autocorrelations.
  double tau = -1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (Eigen::Index t = 0; t + 1 < n; t += 2) {
    double pair = rho(t) + rho(t + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    tau += 2.0 * pair;
  }
  tau = std::max(tau, 1.0 / std::log10(m * nd));
  return m * nd / tau;
}

double quantile(Eigen::VectorXd values, double p) {
  const Eigen::Index n = values.size();
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.data(), values.data() + n);
  const double h = (static_cast<double>(n) - 1.0) * p;
  const auto lo = static_cast<Eigen::Index>(std::floor(h));
  const Eigen::Index hi = std::min(lo + 1, n - 1);
  return values(lo) + (h - static_cast<double>(lo)) * (values(hi) - values(lo));
}

}  // namespace spconf
