#include "spconf/simstudy.hpp"

#include <cmath>
#include <thread>

#include <boost/random/poisson_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include "spconf/errors.hpp"
#include "spconf/tgmrf.hpp"

namespace spconf {

namespace {

Eigen::VectorXd standardize(const Eigen::VectorXd& v) {
  const double m = v.mean();
  const double sd = std::sqrt((v.array() - m).square().sum() / static_cast<double>(std::max<Eigen::Index>(v.size() - 1, 1)));
  if (!(sd > 0.0)) throw NumericError("cannot standardise a constant vector");
  return ((v.array() - m) / sd).matrix();
}

Eigen::VectorXd normal_vector(Eigen::Index n, Rng& rng) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = std_normal(rng);
  return v;
}

constexpr int kMaxCalibrationTries = 100000;

}  // namespace

double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size() || a.size() < 2) throw ValidationError("correlation needs equal-length vectors");
  const Eigen::ArrayXd da = a.array() - a.mean(), db = b.array() - b.mean();
  const double den = std::sqrt(da.square().sum() * db.square().sum());
  return den > 0.0 ? (da * db).sum() / den : 0.0;
}

StudyMap desk_map(std::uint64_t seed, int rows, int cols, double smooth_fraction) {
  StudyMap m;
  m.name = "lattice:" + std::to_string(rows) + "x" + std::to_string(cols);
  m.map = MapStructure::build(lattice_graph(rows, cols));
  const int n = rows * cols;
  m.centroids.resize(n, 2);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      m.centroids(r * cols + c, 0) = c;
      m.centroids(r * cols + c, 1) = r;
    }
  Rng rng(derive_seed(seed, {0x6465736bULL}));
  // smooth part on the 10 lowest non-null eigenvectors, sd ~ lambda^{-1/2}
  const SpectralBasis low = lowest_nonnull(m.map.spectrum, 10);
  Eigen::VectorXd smooth = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < low.size(); ++j) smooth += low.vectors.col(j) * std_normal(rng) / std::sqrt(low.eigenvalues(j));
  const Eigen::VectorXd rough = normal_vector(n, rng);
  const double f = smooth_fraction;
  if (!(f >= 0.0 && f <= 1.0)) throw ValidationError("smooth fraction must lie in [0, 1]");
  m.x1 = standardize(std::sqrt(f) * standardize(smooth) + std::sqrt(1.0 - f) * standardize(rough));
  if (correlation(m.x1, m.centroids.col(1)) < 0.0) m.x1 = -m.x1;
  boost::random::uniform_real_distribution<double> u(50.0, 500.0);
  m.e.resize(n);
  for (int i = 0; i < n; ++i) m.e(i) = std::round(u(rng));
  return m;
}

void ScenarioSpec::validate() const {
  if (scenario < 1 || scenario > 4) throw ValidationError("scenario must be 1, 2, 3 or 4");
  if (!(std::abs(correlation_target) <= 1.0)) throw ValidationError("correlation target must lie in [-1, 1]");
  if (study != 1 && study != 2) throw ValidationError("study must be 1 or 2");
  if (study == 2 && beta2 != 0.0) throw ValidationError("study 2 requires beta2 = 0");
  if (K < 1) throw ValidationError("K must be at least 1");
  if (!(sigma2 > 0.0)) throw ValidationError("sigma2 must be positive");
  if (!(lambda_s1 > 0.0) || !(lambda_s2 > 0.0)) throw ValidationError("spline smoothing weights must be positive");
  if (smooth_dim < 1) throw ValidationError("smooth_dim must be positive");
}

double reference_field_correlation(int scenario) {
  switch (scenario) {
    case 2:
      return 0.5865;
    case 3:
      return 0.1998;
    default:
      return std::numeric_limits<double>::quiet_NaN();
  }
}

std::string ScenarioSpec::scenario_label() const { return std::to_string(scenario); }
std::string ScenarioSpec::subscenario_label() const { return format_double(correlation_target); }

Eigen::VectorXd gen_correlated_covariate(const Eigen::VectorXd& x1, double target, Rng& rng) {
  if (!(std::abs(target) <= 1.0)) throw ValidationError("correlation target must lie in [-1, 1]");
  if (target == 1.0) return x1;
  if (target == -1.0) return -x1;
  const double s = std::sqrt(1.0 - target * target);
  for (int t = 0; t < kMaxCalibrationTries; ++t) {
    const Eigen::VectorXd x2 = standardize(target * x1 + s * normal_vector(x1.size(), rng));
    if (std::abs(correlation(x1, x2) - target) < 0.05) return x2;
  }
  throw NumericError("could not reach the correlation target within tolerance");
}

Eigen::VectorXd gen_smooth_correlated_covariate(const Eigen::VectorXd& x1, const Eigen::MatrixXd& basis,
                                                double target, Rng& rng) {
  if (!(std::abs(target) < 1.0)) throw ValidationError("correlation target must lie in (-1, 1)");
  const Eigen::VectorXd smooth = basis * (basis.transpose() * x1);
  const double c0 = correlation(x1, smooth);
  const double a = target / c0;
  if (!(std::abs(a) < 1.0)) {
    throw ValidationError("target correlation exceeds what the smooth part of x1 allows (" + format_double(c0) + ")");
  }
  const Eigen::VectorXd xs = standardize(smooth);
  for (int t = 0; t < kMaxCalibrationTries; ++t) {
    Eigen::VectorXd eps = basis * normal_vector(basis.cols(), rng);
    eps -= xs * (xs.dot(eps) / xs.squaredNorm());
    const Eigen::VectorXd x2 = standardize(a * xs + std::sqrt(1.0 - a * a) * standardize(eps));
    if (std::abs(correlation(x1, x2) - target) < 0.05) return x2;
  }
  throw NumericError("could not reach the correlation target within tolerance");
}

Eigen::VectorXd gen_icar_field(const SpectralBasis& spectrum, double sigma2, Rng& rng) {
  if (!(sigma2 > 0.0)) throw ValidationError("sigma2 must be positive");
  const int n = spectrum.size();
  Eigen::VectorXd xi = Eigen::VectorXd::Zero(n);
  for (int j = spectrum.null_dim; j < n; ++j) {
    xi += spectrum.vectors.col(j) * (std_normal(rng) * std::sqrt(sigma2 / spectrum.eigenvalues(j)));
  }
  return xi;
}

Eigen::VectorXd gen_icar_field(const IcarPrecision& qp, double sigma2, Rng& rng) {
  return gen_icar_field(full_spectrum(qp), sigma2, rng);
}

ScenarioData gen_scenario(const ScenarioSpec& spec, const StudyMap& map) {
  spec.validate();
  const Eigen::Index n = map.x1.size();
  if (map.e.size() != n || map.map.icar.size() != n) throw ValidationError("study map dimensions disagree");
  const auto cor_key = static_cast<std::uint64_t>(std::llround(spec.correlation_target * 1e6) + 10000000);
  // S is shared by every correlation level and study of a scenario; the X2 noise
  // stream by every scenario and study.
  const std::uint64_t base = derive_seed(spec.seed, {static_cast<std::uint64_t>(spec.scenario), cor_key,
                                                     static_cast<std::uint64_t>(spec.study)});
  ScenarioData out;
  out.x1 = map.x1;
  Rng rng_x2(derive_seed(spec.seed, {1}));
  if (spec.x2_mechanism == X2Mechanism::Mixing) {
    out.x2 = gen_correlated_covariate(map.x1, spec.correlation_target, rng_x2);
  } else {
    out.x2 = gen_smooth_correlated_covariate(map.x1, lowest_nonnull(map.map.spectrum, spec.smooth_dim).vectors,
                                             spec.correlation_target, rng_x2);
  }
  out.achieved_correlation = correlation(out.x1, out.x2);

  Rng rng_s(derive_seed(spec.seed, {static_cast<std::uint64_t>(spec.scenario), 2}));
  auto draw_field = [&]() -> Eigen::VectorXd {
    switch (spec.scenario) {
      case 2:
        return gen_icar_field(map.map.spectrum, spec.sigma2, rng_s);
      case 3: {
        if (map.centroids.cols() != 2) throw ValidationError("scenario 3 needs centroids");
        const TensorBasis tb = centroid_tensor_basis(map.centroids);
        const TensorPenalty pen = tensor_penalty(tb.k1, tb.k2, spec.lambda_s1, spec.lambda_s2);
        return tb.B * sample_penalized_coefficients(pen, rng_s);
      }
      case 4:
        return normal_vector(n, rng_s) * std::sqrt(spec.sigma2);
      default:
        return Eigen::VectorXd::Zero(n);
    }
  };
  out.S = draw_field();
  if (spec.scenario != 1) {
    const bool calibrate = !std::isnan(spec.field_correlation_target) && spec.scenario != 4;
    for (int t = 0;; ++t) {
      if (correlation(out.x1, out.S) < 0.0) out.S = -out.S;
      if (!calibrate || std::abs(correlation(out.x1, out.S) - spec.field_correlation_target) < 0.05) break;
      if (t >= kMaxCalibrationTries) throw NumericError("could not reach the field correlation target");
      out.S = draw_field();
    }
  }
  out.cor_x1_S = spec.scenario == 1 ? 0.0 : correlation(out.x1, out.S);
  out.log_r = spec.beta1 * out.x1 + spec.beta2 * out.x2 + out.S;
  out.r_true = out.log_r.array().exp();

  out.y.reserve(static_cast<std::size_t>(spec.K));
  for (int k = 0; k < spec.K; ++k) {
    Rng rng_y(derive_seed(base, {3, static_cast<std::uint64_t>(k)}));
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      boost::random::poisson_distribution<long, double> pois(map.e(i) * out.r_true(i));
      y(i) = static_cast<double>(pois(rng_y));
    }
    out.y.push_back(std::move(y));
  }
  return out;
}

Dataset replicate_dataset(const ScenarioSpec& spec, const StudyMap& map, const ScenarioData& data, int k) {
  Eigen::MatrixXd X(data.x1.size(), spec.study == 2 ? 2 : 1);
  X.col(0) = data.x1;
  std::vector<std::string> names = {"x1"};
  if (spec.study == 2) {
    X.col(1) = data.x2;
    names.push_back("x2");
  }
  return make_dataset(data.y[static_cast<std::size_t>(k)], map.e, X, names, map.centroids);
}

StudyResult run_study(const ScenarioSpec& spec, const StudyMap& map, const std::vector<ModelSpec>& models,
                      const PriorSpec& prior, const McmcConfig& cfg, int workers, MarbVariant marb) {
  spec.validate();
  cfg.validate();
  if (models.empty()) throw ValidationError("no models to fit");
  StudyResult res;
  res.data = gen_scenario(spec, map);
  const std::uint64_t fit_base = derive_seed(spec.seed, {0x666974ULL, static_cast<std::uint64_t>(spec.scenario),
                                                         static_cast<std::uint64_t>(std::llround(spec.correlation_target * 1e6) + 10000000),
                                                         static_cast<std::uint64_t>(spec.study)});
  bool need_spatial = false;
  for (const auto& m : models) need_spatial |= m.needs_spatial_fit() || m.family == Family::SpatialIcar;

  struct Slot {
    std::vector<ReplicateRecord> records;
    std::vector<ReplicateFailure> failures;
  };
  std::vector<Slot> slots(static_cast<std::size_t>(spec.K));

  auto run_replicate = [&](int k) {
    Slot& slot = slots[static_cast<std::size_t>(k)];
    McmcConfig c = cfg;
    c.workers = 1;
    c.seed = derive_seed(fit_base, {static_cast<std::uint64_t>(k)});
    Dataset d;
    try {
      d = replicate_dataset(spec, map, res.data, k);
    } catch (const std::exception& e) {
      for (const auto& m : models) slot.failures.push_back({k, m.name, e.what()});
      return;
    }
    // structural guard on what the fitted models see
    if ((spec.study == 1 && d.n_covariates() != 1) || (spec.study == 2 && d.n_covariates() != 2)) {
      throw std::logic_error("study covariate set violated");
    }
    PosteriorSummary spatial;
    bool have_spatial = false;
    std::string spatial_error;
    if (need_spatial) {
      try {
        spatial = fit_spatial(d, map.map, prior, c);
        have_spatial = true;
      } catch (const std::exception& e) {
        spatial_error = e.what();
      }
    }
    for (const auto& m : models) {
      try {
        PosteriorSummary ps;
        if (m.family == Family::SpatialIcar || m.needs_spatial_fit()) {
          if (!have_spatial) throw NumericError("spatial fit failed: " + spatial_error);
          ps = m.family == Family::SpatialIcar ? spatial : fit_model(d, map.map, m, prior, c, &spatial);
        } else {
          ps = fit_model(d, map.map, m, prior, c);
        }
        ReplicateRecord r;
        r.replicate = k;
        r.model = m.name;
        for (const auto& p : ps.parameters) r.params[p.name] = {p.mean, p.sd, p.q025, p.q975};
        r.risk = ps.fitted_risk;
        r.waic = ps.waic;
        r.converged = ps.converged;
        slot.records.push_back(std::move(r));
      } catch (const std::exception& e) {
        slot.failures.push_back({k, m.name, e.what()});
      }
    }
  };

  workers = std::max(1, std::min(workers, spec.K));
  if (workers == 1) {
    for (int k = 0; k < spec.K; ++k) run_replicate(k);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (int k = w; k < spec.K; k += workers) run_replicate(k);
      });
    for (auto& t : pool) t.join();
  }
  for (auto& s : slots) {
    for (auto& r : s.records) res.records.push_back(std::move(r));
    for (auto& f : s.failures) res.failures.push_back(std::move(f));
  }
  std::map<std::string, double> truth = {{"x1", spec.beta1}};
  if (spec.study == 2) truth["x2"] = 0.0;
  res.summary = summarize_records(res.records, truth, res.data.r_true, spec.scenario_label(),
                                  spec.subscenario_label(), marb, static_cast<int>(res.failures.size()));
  return res;
}

}  // namespace spconf
