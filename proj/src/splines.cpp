#include "spconf/splines.hpp"

#include <algorithm>
#include <cmath>

#include "spconf/errors.hpp"

namespace spconf {

Eigen::RowVectorXd MarginalBasis::evaluate(double x) const {
  const int order = degree + 1;
  // Locate span t_s <= x < t_{s+1} within the valid range [t_degree, t_{n_basis}].
  int s = degree;
  if (x >= knots[static_cast<std::size_t>(n_basis)]) {
    s = n_basis - 1;
  } else if (x > knots[static_cast<std::size_t>(degree)]) {
    auto it = std::upper_bound(knots.begin() + degree, knots.begin() + n_basis + 1, x);
    s = static_cast<int>(it - knots.begin()) - 1;
  }
  // Cox-de Boor triangular scheme for the order nonzero functions on span s.
  std::vector<double> N(static_cast<std::size_t>(order), 0.0);
  std::vector<double> left(static_cast<std::size_t>(order), 0.0), right(static_cast<std::size_t>(order), 0.0);
  N[0] = 1.0;
  for (int j = 1; j <= degree; ++j) {
    left[static_cast<std::size_t>(j)] = x - knots[static_cast<std::size_t>(s + 1 - j)];
    right[static_cast<std::size_t>(j)] = knots[static_cast<std::size_t>(s + j)] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[static_cast<std::size_t>(r + 1)] + left[static_cast<std::size_t>(j - r)];
      const double temp = N[static_cast<std::size_t>(r)] / denom;
      N[static_cast<std::size_t>(r)] = saved + right[static_cast<std::size_t>(r + 1)] * temp;
      saved = left[static_cast<std::size_t>(j - r)] * temp;
    }
    N[static_cast<std::size_t>(j)] = saved;
  }
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n_basis);
  for (int r = 0; r <= degree; ++r) row(s - degree + r) = N[static_cast<std::size_t>(r)];
  return row;
}

Eigen::MatrixXd MarginalBasis::evaluate(std::span<const double> x) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(x.size()), n_basis);
  for (std::size_t i = 0; i < x.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = evaluate(x[i]);
  return out;
}

BasisEvaluation bspline_basis(std::span<const double> x, int n_internal_knots, int degree) {
  if (x.empty()) throw ValidationError("cannot build a B-spline basis on zero points");
  if (degree < 1) throw ValidationError("B-spline degree must be at least 1");
  if (n_internal_knots < 2) throw ValidationError("need at least 2 knots on the data range");
  const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
  const double lo = *mn, hi = *mx;
  if (!(hi > lo)) throw ValidationError("B-spline coordinate is constant (zero-width domain)");

  MarginalBasis b;
  b.degree = degree;
  b.lo = lo;
  b.hi = hi;
  b.n_basis = n_internal_knots + degree - 1;
  const double h = (hi - lo) / (n_internal_knots - 1);
  const int total = n_internal_knots + 2 * degree;
  b.knots.resize(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) b.knots[static_cast<std::size_t>(i)] = lo + (i - degree) * h;
  // Pin the interior end points exactly so x == hi falls on the boundary knot.
  b.knots[static_cast<std::size_t>(degree)] = lo;
  b.knots[static_cast<std::size_t>(degree + n_internal_knots - 1)] = hi;

  BasisEvaluation out;
  out.matrix = b.evaluate(x);
  out.basis = std::move(b);
  return out;
}

TensorBasis tensor_basis(const Eigen::MatrixXd& b1, const Eigen::MatrixXd& b2) {
  if (b1.rows() != b2.rows()) {
    throw ValidationError("tensor basis factors have different row counts (" + std::to_string(b1.rows()) +
                          " vs " + std::to_string(b2.rows()) + ")");
  }
  TensorBasis tb;
  tb.k1 = static_cast<int>(b1.cols());
  tb.k2 = static_cast<int>(b2.cols());
  tb.B.resize(b1.rows(), b1.cols() * b2.cols());
  for (Eigen::Index i = 0; i < b1.rows(); ++i) {
    for (Eigen::Index a = 0; a < b1.cols(); ++a) {
      tb.B.row(i).segment(a * b2.cols(), b2.cols()) = b1(i, a) * b2.row(i);
    }
  }
  return tb;
}

TensorBasis tensor_basis(const BasisEvaluation& b1, const BasisEvaluation& b2) {
  TensorBasis tb = tensor_basis(b1.matrix, b2.matrix);
  tb.marginal_1 = b1.basis;
  tb.marginal_2 = b2.basis;
  return tb;
}

Eigen::MatrixXd difference_matrix(int k, int order) {
  if (order < 0 || k <= order) {
    throw ValidationError("difference of order " + std::to_string(order) + " needs more than " +
                          std::to_string(order) + " coefficients, got " + std::to_string(k));
  }
  Eigen::MatrixXd d = Eigen::MatrixXd::Identity(k, k);
  for (int o = 0; o < order; ++o) {
    Eigen::MatrixXd next(d.rows() - 1, k);
    for (Eigen::Index r = 0; r + 1 < d.rows(); ++r) next.row(r) = d.row(r + 1) - d.row(r);
    d = std::move(next);
  }
  return d;
}

namespace {

Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

}  // namespace

TensorPenalty tensor_penalty(int k1, int k2, double lambda1, double lambda2) {
  if (k1 < 3 || k2 < 3) throw ValidationError("order-2 penalties need at least 3 coefficients per margin");
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw ValidationError("smoothing weights must be nonnegative");
  TensorPenalty pen;
  pen.k1 = k1;
  pen.k2 = k2;
  pen.lambda1 = lambda1;
  pen.lambda2 = lambda2;
  pen.D1 = difference_matrix(k2, 2);
  pen.D2 = difference_matrix(k1, 2);
  pen.P = lambda1 * kron(Eigen::MatrixXd::Identity(k1, k1), pen.D1.transpose() * pen.D1) +
          lambda2 * kron(pen.D2.transpose() * pen.D2, Eigen::MatrixXd::Identity(k2, k2));
  return pen;
}

PenaltyEigen penalty_eigen(int k1, int k2) {
  const Eigen::MatrixXd d1 = difference_matrix(k2, 2);
  const Eigen::MatrixXd d2 = difference_matrix(k1, 2);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e1(d1.transpose() * d1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e2(d2.transpose() * d2);
  Eigen::VectorXd v1 = e1.eigenvalues(), v2 = e2.eigenvalues();
  // Order-2 differences annihilate exactly two directions per margin.
  for (Eigen::Index i = 0; i < 2; ++i) {
    v1(i) = 0.0;
    v2(i) = 0.0;
  }
  PenaltyEigen pe;
  pe.U = kron(e2.eigenvectors(), e1.eigenvectors());
  pe.inner.resize(k1 * k2);
  pe.outer.resize(k1 * k2);
  for (int a = 0; a < k1; ++a) {
    for (int b = 0; b < k2; ++b) {
      const int col = a * k2 + b;
      pe.inner(col) = v1(b);
      pe.outer(col) = v2(a);
      if (v1(b) == 0.0 && v2(a) == 0.0) {
        pe.null_columns.push_back(col);
      } else {
        pe.penalised_columns.push_back(col);
      }
    }
  }
  return pe;
}

Eigen::VectorXd sample_penalized_coefficients(const TensorPenalty& pen, Rng& rng) {
  if (!(pen.lambda1 > 0.0) || !(pen.lambda2 > 0.0)) {
    throw ValidationError("penalised sampling needs strictly positive smoothing weights");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(pen.P);
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double thresh = 1e-9 * ev.maxCoeff();
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(pen.P.rows());
  for (Eigen::Index j = 0; j < ev.size(); ++j) {
    if (ev(j) <= thresh) continue;
    theta += std_normal(rng) / std::sqrt(ev(j)) * es.eigenvectors().col(j);
  }
  return theta;
}

std::vector<double> standardized(std::span<const double> x) {
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);
  if (!(sd > 0.0)) throw ValidationError("cannot standardise a constant vector");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) / sd;
  return out;
}

}  // namespace spconf
