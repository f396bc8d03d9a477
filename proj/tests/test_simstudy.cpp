#include "doctest.h"
#include "oracles.hpp"
#include "spconf/errors.hpp"
#include "spconf/simstudy.hpp"

using namespace spconf;

namespace {

McmcConfig quick() {
  McmcConfig c;
  c.chains = 2;
  c.iterations = 1000;
  c.burn_in = 300;
  c.thin = 5;
  c.seed = 17;
  return c;
}

}  // namespace

TEST_CASE("correlated covariate") {
  Rng rng(1);
  const Eigen::VectorXd x1 = oracle::standardize(Eigen::VectorXd::NullaryExpr(1000, [&] { return std_normal(rng); }));
  const Eigen::VectorXd same = gen_correlated_covariate(x1, 1.0, rng);
  CHECK((same - x1).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::abs(correlation(x1, gen_correlated_covariate(x1, 0.0, rng))) < 0.05);
  for (double target : {0.8, 0.5, 0.2}) {
    const Eigen::VectorXd x2 = gen_correlated_covariate(x1.head(70), target, rng);
    CHECK(std::abs(correlation(x1.head(70), x2) - target) < 0.05);
    CHECK(std::abs(x2.mean()) < 1e-12);
  }
  CHECK_THROWS_AS(gen_correlated_covariate(x1, 1.5, rng), ValidationError);
}

TEST_CASE("ICAR field draws") {
  Rng rng(2);
  const AreaGraph g = AreaGraph::from_edges(7, {{0, 1}, {1, 2}, {2, 3}, {4, 5}, {5, 6}});
  const IcarPrecision qp = icar_precision(g);
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::VectorXd s = gen_icar_field(qp, 0.7, rng);
    CHECK(std::abs(s.head(4).sum()) < 1e-10);
    CHECK(std::abs(s.tail(3).sum()) < 1e-10);
  }

  // covariance on a path of four is sigma2 * pinv(Q)
  const AreaGraph path = AreaGraph::from_edges(4, {{0, 1}, {1, 2}, {2, 3}});
  const SpectralBasis sp = full_spectrum(icar_precision(path));
  const int N = 40000;
  Eigen::MatrixXd D(N, 4);
  for (int i = 0; i < N; ++i) D.row(i) = gen_icar_field(sp, 2.0, rng).transpose();
  const Eigen::MatrixXd want = 2.0 * oracle::pinv(icar_precision(path).dense());
  CHECK((oracle::sample_cov(D) - want).cwiseAbs().maxCoeff() < 0.05 * want.cwiseAbs().maxCoeff());
}

TEST_CASE("scenario generation") {
  const StudyMap map = desk_map();
  CHECK(map.x1.size() == 70);
  CHECK(std::abs(map.x1.mean()) < 1e-12);
  CHECK((map.e.array() >= 50.0).all());
  CHECK((map.e.array() <= 500.0).all());

  ScenarioSpec s1;
  s1.scenario = 1;
  s1.K = 3;
  const ScenarioData d1 = gen_scenario(s1, map);
  CHECK(d1.S.cwiseAbs().maxCoeff() == 0.0);
  CHECK(d1.y.size() == 3);
  const Eigen::VectorXd lr = s1.beta1 * map.x1 + s1.beta2 * d1.x2;
  CHECK((d1.log_r - lr).cwiseAbs().maxCoeff() < 1e-12);

  // counts are Poisson with mean e * r
  ScenarioSpec big = s1;
  big.K = 400;
  const ScenarioData db = gen_scenario(big, map);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(70);
  for (const auto& y : db.y) mean += y;
  mean /= 400.0;
  const Eigen::VectorXd mu = map.e.cwiseProduct(db.r_true);
  double worst = 0.0;
  for (int i = 0; i < 70; ++i) worst = std::max(worst, std::abs(mean(i) - mu(i)) / std::sqrt(mu(i) / 400.0));
  CHECK(worst < 4.5);

  ScenarioSpec s2;
  s2.scenario = 2;
  s2.K = 2;
  s2.field_correlation_target = reference_field_correlation(2);
  const ScenarioData d2 = gen_scenario(s2, map);
  CHECK(std::abs(d2.S.sum()) < 1e-9);
  CHECK(d2.cor_x1_S >= 0.0);
  CHECK(std::abs(d2.cor_x1_S - reference_field_correlation(2)) < 0.05);
  CHECK(std::abs(d2.achieved_correlation - 0.8) < 0.05);

  ScenarioSpec st2 = s2;
  st2.study = 2;
  st2.beta2 = 0.3;
  CHECK_THROWS_AS(st2.validate(), ValidationError);
}

TEST_CASE("study run, small") {
  const StudyMap map = desk_map();
  ScenarioSpec spec;
  spec.scenario = 1;
  spec.K = 4;
  const std::vector<ModelSpec> models = {ModelSpec::from_name("Null")};
  const StudyResult one = run_study(spec, map, models, PriorSpec{}, quick(), 1);
  CHECK(one.records.size() == 4);
  CHECK(one.failures.empty());
  // Scenario 1 puts the omitted x2 (cor 0.8, beta 0.3) into beta1
  const double b1 = one.summary.value(spec.scenario_label(), spec.subscenario_label(), "Null", "x1.mean");
  CHECK(b1 >= 0.40);
  CHECK(b1 <= 0.51);

  const StudyResult many = run_study(spec, map, models, PriorSpec{}, quick(), 3);
  REQUIRE(many.records.size() == one.records.size());
  for (std::size_t i = 0; i < one.records.size(); ++i) {
    CHECK(many.records[i].replicate == one.records[i].replicate);
    CHECK(many.records[i].params.at("x1").mean == one.records[i].params.at("x1").mean);
    CHECK(many.records[i].waic == one.records[i].waic);
  }

  spec.K = 1;
  const StudyResult k1 = run_study(spec, map, models, PriorSpec{}, quick(), 1);
  CHECK(k1.records.size() == 1);
  CHECK_FALSE(k1.summary.has(spec.scenario_label(), spec.subscenario_label(), "Null", "x1.se_sim"));
}
