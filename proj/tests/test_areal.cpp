#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "spconf/areal.hpp"
#include "spconf/errors.hpp"
#include "spconf/rng.hpp"

using namespace spconf;

namespace {

AreaGraph edges(const std::string& text) {
  std::istringstream in(text);
  return parse_edge_list(in);
}

}  // namespace

TEST_CASE("edge list parsing") {
  const AreaGraph path = edges("n=3\n1 2\n2 3\n");
  CHECK(path.size() == 3);
  CHECK(path.edges().size() == 2);
  CHECK(path.connected());

  const AreaGraph c4 = edges("n=4\n1 2\n2 4\n4 3\n3 1\n");
  CHECK(c4.n_components() == 1);
  for (int i = 0; i < 4; ++i) CHECK(c4.degree(i) == 2);

  CHECK_THROWS_AS(edges("n=3\n1 5\n"), Error);
  CHECK_THROWS_AS(edges("n=3\n1 1\n"), Error);
  // duplicates in either orientation merge
  CHECK(edges("n=2\n1 2\n2 1\n").edges().size() == 1);
}

TEST_CASE("GAL round trip keeps islands") {
  const AreaGraph g = AreaGraph::from_edges(5, {{0, 1}, {1, 2}, {3, 4}});
  std::ostringstream out;
  write_gal(out, g);
  std::istringstream in(out.str());
  const AreaGraph back = parse_gal(in);
  CHECK(back.edges() == g.edges());

  std::istringstream island("0 3 x id\n1 1\n2\n2 1\n1\n3 0\n");
  const AreaGraph gi = parse_gal(island);
  CHECK(gi.n_components() == 2);
  CHECK(gi.degree(2) == 0);

  // one-sided listings are symmetrised
  std::istringstream asym("3\n1 1\n2\n2 0\n3 0\n");
  const AreaGraph ga = parse_gal(asym);
  CHECK(ga.degree(1) == 1);
}

TEST_CASE("lattice graphs") {
  CHECK(lattice_graph(1, 1).size() == 1);
  CHECK(lattice_graph(1, 1).edges().empty());
  CHECK(lattice_graph(2, 2).edges().size() == 4);
  const AreaGraph g = lattice_graph(10, 7);
  CHECK(g.size() == 70);
  CHECK(g.edges().size() == static_cast<std::size_t>(10 * 6 + 7 * 9));
}

TEST_CASE("ICAR precision") {
  const IcarPrecision p3 = icar_precision(edges("n=3\n1 2\n2 3\n"));
  Eigen::Matrix3d want;
  want << 1, -1, 0, -1, 2, -1, 0, -1, 1;
  CHECK((p3.dense() - want).cwiseAbs().maxCoeff() == 0.0);
  CHECK(p3.rank == 2);

  const IcarPrecision two = icar_precision(AreaGraph::from_edges(4, {{0, 1}, {2, 3}}));
  CHECK(two.rank == 2);
  CHECK(two.n_components == 2);
}

TEST_CASE("ICAR invariants on random graphs") {
  Rng rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 2 + static_cast<int>(rng() % 29);
    std::vector<std::pair<int, int>> e;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (uniform01(rng) < 0.15) e.push_back({i, j});
    const AreaGraph g = AreaGraph::from_edges(n, e);
    const IcarPrecision qp = icar_precision(g);
    const Eigen::MatrixXd Q = qp.dense();
    CHECK(Q.rowwise().sum().cwiseAbs().maxCoeff() < 1e-12);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Q);
    int rank = 0;
    for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) rank += svd.singularValues()(i) > 1e-9 ? 1 : 0;
    CHECK(rank == n - g.n_components());
    CHECK(qp.rank == rank);
  }
}

TEST_CASE("lowest non-null eigenvectors") {
  const IcarPrecision p3 = icar_precision(edges("n=3\n1 2\n2 3\n"));
  const SpectralBasis b = eigen_lowest_nonnull(p3, 1);
  CHECK(b.eigenvalues(0) == doctest::Approx(1.0).epsilon(1e-12));
  const Eigen::Vector3d v = b.vectors.col(0);
  CHECK(std::abs(std::abs(v(0)) - 1.0 / std::sqrt(2.0)) < 1e-12);
  CHECK(std::abs(v(1)) < 1e-12);
  CHECK(std::abs(v(0) + v(2)) < 1e-12);

  CHECK(eigen_lowest_nonnull(p3, 0).vectors.cols() == 0);

  const IcarPrecision c4 = icar_precision(edges("n=4\n1 2\n2 4\n4 3\n3 1\n"));
  const SpectralBasis b4 = eigen_lowest_nonnull(c4, 2);
  CHECK(b4.eigenvalues(0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(b4.eigenvalues(1) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK((b4.vectors.transpose() * b4.vectors - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
  // brute force: Q v = 2 v
  CHECK((c4.dense() * b4.vectors - 2.0 * b4.vectors).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("canonical eigenspace basis depends only on the span") {
  Rng rng(3);
  Eigen::MatrixXd A = Eigen::MatrixXd::NullaryExpr(6, 2, [&] { return std_normal(rng); });
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
  const Eigen::MatrixXd Q1 = qr.householderQ() * Eigen::MatrixXd::Identity(6, 2);
  const double t = 0.7;
  Eigen::Matrix2d R;
  R << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
  const Eigen::MatrixXd Q2 = Q1 * R;
  CHECK((canonical_eigenspace_basis(Q1) - canonical_eigenspace_basis(Q2)).cwiseAbs().maxCoeff() < 1e-12);
}
