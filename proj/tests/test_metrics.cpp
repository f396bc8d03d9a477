#include <algorithm>
#include <sstream>

#include "doctest.h"
#include "spconf/errors.hpp"
#include "spconf/metrics.hpp"
#include "spconf/rng.hpp"

using namespace spconf;

namespace {

ParamEstimate est(double mean, double lo, double hi, double sd = 0.1) { return {mean, sd, lo, hi}; }

std::vector<ParamEstimate> random_records(int K, double centre, Rng& rng) {
  std::vector<ParamEstimate> v;
  for (int k = 0; k < K; ++k) {
    const double m = centre + 0.3 * std_normal(rng);
    const double s = 0.05 + 0.1 * uniform01(rng);
    v.push_back({m, s, m - 1.96 * s, m + 1.96 * s});
  }
  return v;
}

}  // namespace

TEST_CASE("se_sim and se_est") {
  CHECK(se_sim_and_est({est(1, 0, 2), est(1, 0, 2), est(1, 0, 2)}).se_sim == 0.0);
  CHECK(se_sim_and_est({est(0, -1, 1), est(1, 0, 2)}).se_sim == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(se_sim_and_est({est(0, -1, 1)}), ValidationError);

  Rng rng(1);
  auto v = random_records(100, 0.4, rng);
  double m = 0.0, sds = 0.0;
  for (const auto& r : v) {
    m += r.mean;
    sds += r.sd;
  }
  m /= 100.0;
  double ss = 0.0;
  for (const auto& r : v) ss += (r.mean - m) * (r.mean - m);
  const SeResult got = se_sim_and_est(v);
  CHECK(std::abs(got.se_sim - std::sqrt(ss / 100.0)) < 1e-12);
  CHECK(std::abs(got.se_est - sds / 100.0) < 1e-12);

  std::reverse(v.begin(), v.end());
  CHECK(std::abs(se_sim_and_est(v).se_sim - got.se_sim) < 1e-15);
}

TEST_CASE("coverage and interval length") {
  std::vector<ParamEstimate> all(5, est(0.2, 0.0, 0.5));
  CHECK(coverage_and_length(all, 0.2).coverage == 100.0);
  CHECK(coverage_and_length(all, 0.2).length == doctest::Approx(0.5));
  CHECK(coverage_and_length(all, 0.9).coverage == 0.0);
  std::vector<ParamEstimate> half;
  for (int k = 0; k < 10; ++k) half.push_back(k % 2 ? est(0.0, -1.0, 1.0) : est(3.0, 2.0, 4.0));
  CHECK(coverage_and_length(half, 0.0).coverage == 50.0);
}

TEST_CASE("Type-S rate") {
  std::vector<ParamEstimate> v(100, est(0.0, -0.5, 0.5));
  CHECK(type_s_rate(v) == 0.0);
  for (int k = 0; k < 7; ++k) v[static_cast<std::size_t>(k * 13)] = est(0.6, 0.1, 1.1);
  CHECK(type_s_rate(v) == doctest::Approx(7.0));
  CHECK_THROWS_AS(type_s_rate(v, 0.2), ValidationError);
  // complementary to coverage at a zero truth
  Rng rng(2);
  const auto r = random_records(60, 0.1, rng);
  CHECK(type_s_rate(r) + coverage_and_length(r, 0.0).coverage == doctest::Approx(100.0));
}

TEST_CASE("MARB and MRRMSE") {
  std::vector<ParamEstimate> exact(4, est(0.3, 0.1, 0.5));
  const BiasResult z = marb_mrrmse(exact, 0.3);
  CHECK(z.marb == 0.0);
  CHECK(z.mrrmse == 0.0);
  std::vector<ParamEstimate> dbl(4, est(0.6, 0.1, 0.9));
  CHECK(marb_mrrmse(dbl, 0.3).marb == doctest::Approx(1.0));
  CHECK(marb_mrrmse(dbl, 0.3).mrrmse == doctest::Approx(1.0));
  CHECK_THROWS_AS(marb_mrrmse(dbl, 0.0), ValidationError);

  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const auto v = random_records(37, 0.25, rng);
    const double truth = 0.2;
    double sum = 0.0, sum_abs = 0.0, sq = 0.0;
    for (const auto& r : v) {
      const double rb = (r.mean - truth) / truth;
      sum += rb;
      sum_abs += std::abs(rb);
      sq += rb * rb;
    }
    const BiasResult a = marb_mrrmse(v, truth);
    CHECK(std::abs(a.marb - std::abs(sum / 37.0)) < 1e-12);
    CHECK(std::abs(a.mrrmse - std::sqrt(sq / 37.0)) < 1e-12);
    CHECK(a.mrrmse >= a.marb);
    const BiasResult b = marb_mrrmse(v, truth, MarbVariant::MeanOfAbs);
    CHECK(std::abs(b.marb - sum_abs / 37.0) < 1e-12);
    CHECK(b.mrrmse >= b.marb);
  }
}

TEST_CASE("risk-level bias") {
  const Eigen::Vector3d truth(1.0, 2.0, 0.5);
  const std::vector<Eigen::VectorXd> same(3, truth);
  CHECK(risk_marb_mrrmse(same, truth).marb == 0.0);
  const std::vector<Eigen::VectorXd> dbl(2, Eigen::VectorXd(2.0 * truth));
  CHECK(risk_marb_mrrmse(dbl, truth).marb == doctest::Approx(1.0));
  CHECK(risk_marb_mrrmse(dbl, truth).mrrmse == doctest::Approx(1.0));
}

TEST_CASE("summary table") {
  Rng rng(4);
  std::vector<ReplicateRecord> recs;
  for (const char* m : {"Spatial", "Null"}) {
    for (int k = 3; k >= 0; --k) {
      ReplicateRecord r;
      r.replicate = k;
      r.model = m;
      const auto e1 = random_records(1, 0.2, rng)[0];
      const auto e2 = random_records(1, 0.0, rng)[0];
      r.params["beta1"] = e1;
      r.params["beta2"] = e2;
      r.risk = Eigen::Vector2d(1.0 + 0.1 * std_normal(rng), 0.9);
      r.waic = 100.0 + k;
      recs.push_back(r);
    }
  }
  const std::map<std::string, double> truth = {{"beta1", 0.2}, {"beta2", 0.0}};
  const StudySummary s = summarize_records(recs, truth, Eigen::Vector2d(1.0, 1.0), "Scenario 2", "cor=0.8");
  CHECK(s.has("Scenario 2", "cor=0.8", "Null", "beta2.type_s"));
  CHECK_FALSE(s.has("Scenario 2", "cor=0.8", "Null", "beta2.marb"));
  CHECK(s.value("Scenario 2", "cor=0.8", "Null", "waic") == doctest::Approx(101.5));
  for (const auto& row : s.rows) {
    if (row.metric.find("coverage") != std::string::npos || row.metric.find("type_s") != std::string::npos) {
      CHECK(row.value >= 0.0);
      CHECK(row.value <= 100.0);
    }
  }
  // order of the input does not matter
  std::reverse(recs.begin(), recs.end());
  const StudySummary t = summarize_records(recs, truth, Eigen::Vector2d(1.0, 1.0), "Scenario 2", "cor=0.8");
  std::ostringstream a, b;
  write_summary_csv(a, s);
  write_summary_csv(b, t);
  CHECK(a.str() == b.str());
  std::istringstream in(a.str());
  std::ostringstream c;
  write_summary_csv(c, read_summary_csv(in));
  CHECK(c.str() == a.str());
}

TEST_CASE("shortest round-trip formatting") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-17, 12345.678, 0.0}) CHECK(std::stod(format_double(v)) == v);
  CHECK(format_double(0.5) == "0.5");
}
