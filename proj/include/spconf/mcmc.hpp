#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "spconf/rng.hpp"

namespace spconf {

struct McmcConfig {
  int chains = 3;
  int iterations = 10000;
  int burn_in = 2000;
  int thin = 20;
  std::uint64_t seed = 20240101;
  /// Iterations between proposal re-estimates during burn-in.
  int adaptation_window = 250;
  /// Threads used to run chains concurrently.
  int workers = 1;

  void validate() const;
  int retained_per_chain() const { return (iterations - burn_in) / thin; }
  bool retain(int iter) const { return iter >= burn_in && (iter - burn_in + 1) % thin == 0; }
};

using LogDensity = std::function<double(const Eigen::VectorXd&)>;
/// Returns log density and writes the gradient when `grad` is non-null.
using GradLogDensity = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd* grad)>;

/// Random-walk Metropolis over fixed coordinate blocks. Each block carries a
/// Gaussian proposal whose scale is tuned towards the target acceptance rate,
/// and whose shape follows the block's empirical covariance at the end of every
/// adaptation window. Adaptation only happens while `adapt` is passed as true.
class AdaptiveBlockMetropolis {
 public:
  explicit AdaptiveBlockMetropolis(std::vector<std::vector<int>> blocks, double target_acceptance = 0.35,
                                   int adaptation_window = 250);

  /// One systematic sweep over all blocks. `logp` must hold f(x) on entry.
  void sweep(const LogDensity& f, Eigen::VectorXd& x, double& logp, Rng& rng, bool adapt);

  /// Single-block update, for use inside Metropolis-within-Gibbs schemes.
  bool update_block(std::size_t b, const LogDensity& f, Eigen::VectorXd& x, double& logp, Rng& rng, bool adapt);

  std::size_t n_blocks() const { return blocks_.size(); }
  double scale(std::size_t b) const { return blocks_[b].log_scale; }
  double acceptance_rate(std::size_t b) const;
  void set_initial_scale(std::size_t b, double scale);

 private:
  struct Block {
    std::vector<int> idx;
    double log_scale = 0.0;
    Eigen::MatrixXd chol;  // proposal shape
    long attempts = 0;
    long accepts = 0;
    long adapt_steps = 0;
    // running moments for the shape estimate
    long n_seen = 0;
    Eigen::VectorXd mean;
    Eigen::MatrixXd m2;
  };
  std::vector<Block> blocks_;
  double target_;
  int window_;
};

/// Draws retained from each chain, rows = draws.
struct ChainSet {
  std::vector<Eigen::MatrixXd> chains;
  Eigen::MatrixXd stacked() const;
};

/// Adaptive block random-walk Metropolis run over cfg.chains chains; chain c is
/// seeded with cfg.seed + c. Throws NumericError if f(init) is not finite.
ChainSet run_block_metropolis(const LogDensity& f, const Eigen::VectorXd& init,
                              const std::vector<std::vector<int>>& blocks, const McmcConfig& cfg,
                              const std::vector<double>& initial_scales = {});

/// Hamiltonian Monte Carlo with a dense Euclidean metric given as a precision
/// matrix (kinetic energy p' M^{-1} p / 2 with M the supplied matrix), step size
/// tuned by dual averaging while adapting.
class HmcKernel {
 public:
  explicit HmcKernel(double target_acceptance = 0.8, double trajectory_length = 1.5, int max_steps = 64);

  /// Set the mass matrix. Leaves the step-size adaptation state untouched.
  void set_metric(const Eigen::MatrixXd& mass);
  /// Restart dual averaging around the current step size (after a metric change).
  void restart_adaptation();
  /// Freeze the step size at its adapted average.
  void finish_adaptation();

  /// One transition. On entry logp/grad must match x.
  bool step(const GradLogDensity& f, Eigen::VectorXd& x, double& logp, Eigen::VectorXd& grad, Rng& rng, bool adapt);

  double step_size() const { return step_size_; }
  void set_step_size(double eps) { step_size_ = eps; }
  double mean_acceptance() const { return attempts_ ? accept_sum_ / static_cast<double>(attempts_) : 0.0; }

 private:
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::MatrixXd chol_l_;
  double step_size_ = 0.25;
  double target_;
  double trajectory_;
  int max_steps_;
  // dual averaging
  double mu_ = 0.0;
  double hbar_ = 0.0;
  double log_eps_bar_ = 0.0;
  long da_t_ = 0;
  long attempts_ = 0;
  double accept_sum_ = 0.0;
};

/// Split-chain potential scale reduction (floored at 1) and bulk effective
/// sample size (Geyer initial monotone sequence) for one scalar quantity.
double split_rhat(const std::vector<Eigen::VectorXd>& chains);
double effective_sample_size(const std::vector<Eigen::VectorXd>& chains);

/// Type-7 (linear interpolation) sample quantile.
double quantile(Eigen::VectorXd values, double p);

}  // namespace spconf
