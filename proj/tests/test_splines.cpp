#include <numeric>

#include "doctest.h"
#include "oracles.hpp"
#include "spconf/rng.hpp"
#include "spconf/splines.hpp"

using namespace spconf;

TEST_CASE("B-spline basis dimension and partition of unity") {
  std::vector<double> x(40);
  Rng rng(1);
  for (auto& v : x) v = 10.0 * uniform01(rng) - 3.0;
  const BasisEvaluation b = bspline_basis(x, 11, 3);
  CHECK(b.matrix.cols() == 13);
  CHECK((b.matrix.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-10);
  CHECK(b.matrix.minCoeff() >= 0.0);
}

TEST_CASE("B-spline values match the Cox-de Boor recursion") {
  const std::vector<double> x = {0.0, 0.25, 0.5, 0.75, 1.0};
  for (int degree : {1, 3}) {
    const BasisEvaluation b = bspline_basis(x, 5, degree);
    const double probes[] = {0.0, 0.25, 0.3, 0.5, 0.9};
    for (double p : probes) {
      const Eigen::RowVectorXd row = b.basis.evaluate(p);
      for (int i = 0; i < b.basis.n_basis; ++i) CHECK(row(i) == doctest::Approx(oracle::cox_de_boor(b.basis.knots, i, degree, p)).epsilon(1e-12));
    }
  }
  // degree 1 at an interior knot is an indicator
  const BasisEvaluation b1 = bspline_basis(x, 5, 1);
  const Eigen::RowVectorXd at = b1.basis.evaluate(0.5);
  CHECK(at(2) == doctest::Approx(1.0));
  CHECK(at.sum() == doctest::Approx(1.0));
}

TEST_CASE("tensor basis") {
  Eigen::MatrixXd b1(2, 2), b2(2, 2);
  b1 << 1, 2, 3, 4;
  b2 << 5, 6, 7, 8;
  const TensorBasis t = tensor_basis(b1, b2);
  Eigen::MatrixXd want(2, 4);
  want << 5, 6, 10, 12, 21, 24, 28, 32;
  CHECK((t.B - want).cwiseAbs().maxCoeff() == 0.0);

  const TensorBasis id = tensor_basis(b1, Eigen::MatrixXd::Ones(2, 1));
  CHECK((id.B - b1).cwiseAbs().maxCoeff() == 0.0);

  std::vector<double> x(30);
  std::iota(x.begin(), x.end(), 0.0);
  const TensorBasis big = tensor_basis(bspline_basis(x, 11, 3), bspline_basis(x, 11, 3));
  CHECK(big.B.cols() == 169);
}

TEST_CASE("difference and tensor penalties") {
  Eigen::MatrixXd want(2, 4);
  want << 1, -2, 1, 0, 0, 1, -2, 1;
  CHECK((difference_matrix(4, 2) - want).cwiseAbs().maxCoeff() == 0.0);
  CHECK(tensor_penalty(4, 4, 0.0, 0.0).P.cwiseAbs().maxCoeff() == 0.0);

  const TensorPenalty p = tensor_penalty(4, 4, 1.0, 1.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p.P);
  int zeros = 0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) zeros += es.eigenvalues()(i) < 1e-9 ? 1 : 0;
  CHECK(zeros == 4);
  CHECK(penalty_eigen(4, 4).null_columns.size() == 4);
  CHECK(penalty_eigen(13, 13).null_columns.size() == 4);

  // joint eigenbasis reproduces both terms
  const PenaltyEigen pe = penalty_eigen(5, 4);
  const TensorPenalty a = tensor_penalty(5, 4, 1.0, 0.0), b = tensor_penalty(5, 4, 0.0, 1.0);
  CHECK((pe.U * pe.inner.asDiagonal() * pe.U.transpose() - a.P).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((pe.U * pe.outer.asDiagonal() * pe.U.transpose() - b.P).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("penalised coefficient draws") {
  const TensorPenalty pen = tensor_penalty(4, 4, 1.0, 2.0);
  const Eigen::MatrixXd Pp = oracle::pinv(pen.P);
  const Eigen::MatrixXd null_proj = Eigen::MatrixXd::Identity(16, 16) - pen.P * Pp;

  Rng a(99), b(99);
  CHECK((sample_penalized_coefficients(pen, a) - sample_penalized_coefficients(pen, b)).norm() == 0.0);

  Rng rng(5);
  const int N = 10000;
  Eigen::MatrixXd D(N, 16);
  for (int s = 0; s < N; ++s) {
    const Eigen::VectorXd th = sample_penalized_coefficients(pen, rng);
    if (s < 20) CHECK((null_proj * th).norm() < 1e-10);
    D.row(s) = th.transpose();
  }
  const Eigen::MatrixXd C = oracle::sample_cov(D);
  // 5% of the largest range-space variance, entrywise
  CHECK((C - Pp).cwiseAbs().maxCoeff() < 0.05 * Pp.diagonal().maxCoeff());
}
