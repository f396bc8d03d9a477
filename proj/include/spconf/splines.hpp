#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "spconf/rng.hpp"

namespace spconf {

/// Equally spaced B-spline basis. `n_internal_knots` counts the knots placed on
/// [lo, hi] including both ends, so 11 knots with cubic pieces give 13 columns.
struct MarginalBasis {
  std::vector<double> knots;  // full knot vector including exterior knots
  int degree = 3;
  int n_basis = 0;
  double lo = 0.0;
  double hi = 1.0;

  /// Cox-de Boor evaluation; x outside [lo, hi] is allowed (polynomial extension).
  Eigen::MatrixXd evaluate(std::span<const double> x) const;
  Eigen::RowVectorXd evaluate(double x) const;
};

struct BasisEvaluation {
  MarginalBasis basis;
  Eigen::MatrixXd matrix;  // rows = points, cols = basis functions
};

BasisEvaluation bspline_basis(std::span<const double> x, int n_internal_knots, int degree);

/// Row-wise Kronecker product: column index = i1 * k2 + i2.
struct TensorBasis {
  Eigen::MatrixXd B;
  int k1 = 0;
  int k2 = 0;
  MarginalBasis marginal_1;
  MarginalBasis marginal_2;
};

TensorBasis tensor_basis(const BasisEvaluation& b1, const BasisEvaluation& b2);
TensorBasis tensor_basis(const Eigen::MatrixXd& b1, const Eigen::MatrixXd& b2);

/// Difference operator of the given order on k coefficients, (k - order) x k.
Eigen::MatrixXd difference_matrix(int k, int order = 2);

/// P = lambda1 (I_k1 kron D1'D1) + lambda2 (D2'D2 kron I_k2), with D1 acting
/// on the k2 inner coefficients and D2 on the k1 outer ones. Under the
/// column layout of TensorBasis, lambda1 therefore smooths along the second
/// marginal and lambda2 along the first.
struct TensorPenalty {
  Eigen::MatrixXd P;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  Eigen::MatrixXd D1;
  Eigen::MatrixXd D2;
  int k1 = 0;
  int k2 = 0;
};

TensorPenalty tensor_penalty(int k1, int k2, double lambda1, double lambda2);

/// Joint eigenbasis of the two penalty terms: for unit weights,
/// I kron D1'D1 = U diag(inner) U' and D2'D2 kron I = U diag(outer) U'.
/// Columns with inner == outer == 0 span the unpenalised space.
struct PenaltyEigen {
  Eigen::MatrixXd U;
  Eigen::VectorXd inner;
  Eigen::VectorXd outer;
  std::vector<int> null_columns;
  std::vector<int> penalised_columns;
};

PenaltyEigen penalty_eigen(int k1, int k2);

/// Draw theta ~ N(0, P^+) restricted to range(P); null-space components are zero.
Eigen::VectorXd sample_penalized_coefficients(const TensorPenalty& pen, Rng& rng);

/// Zero-mean, unit-variance copy (population variance).
std::vector<double> standardized(std::span<const double> x);

}  // namespace spconf
