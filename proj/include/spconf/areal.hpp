#pragma once

#include <istream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace spconf {

/// Binary contiguity structure over n areas. Area indices are 0-based
/// internally; the text formats are 1-based.
class AreaGraph {
 public:
  AreaGraph() = default;

  /// Validates and normalises an undirected edge set. Duplicate pairs (in
  /// either orientation) are merged; self-edges and out-of-range indices throw.
  static AreaGraph from_edges(int n, const std::vector<std::pair<int, int>>& edges);

  int size() const noexcept { return n_; }
  /// Edges as (i, j) with i < j, sorted lexicographically.
  const std::vector<std::pair<int, int>>& edges() const noexcept { return edges_; }
  const std::vector<int>& neighbours(int i) const { return adjacency_.at(static_cast<std::size_t>(i)); }
  int degree(int i) const { return static_cast<int>(neighbours(i).size()); }
  /// Component label per area, labelled 0.. in order of first appearance.
  const std::vector<int>& component_of() const noexcept { return component_; }
  int n_components() const noexcept { return n_components_; }
  bool connected() const noexcept { return n_components_ == 1; }

 private:
  int n_ = 0;
  std::vector<std::pair<int, int>> edges_;
  std::vector<std::vector<int>> adjacency_;
  std::vector<int> component_;
  int n_components_ = 0;
};

/// "n=<count>" header followed by 1-based "i j" pairs.
AreaGraph parse_edge_list(std::istream& in);
/// GeoDa GAL: header "0 n <name> <name>" (or just "n"), then per area an
/// "id degree" line followed by a line listing the neighbour ids.
AreaGraph parse_gal(std::istream& in);
/// Dispatches on the first non-blank line: "n=..." selects the edge-list parser.
AreaGraph load_graph(const std::string& path);

void write_edge_list(std::ostream& out, const AreaGraph& g);
void write_gal(std::ostream& out, const AreaGraph& g, const std::string& name = "areas");

/// Rook adjacency on a rows x cols grid, row-major numbering.
AreaGraph lattice_graph(int rows, int cols);

/// Intrinsic CAR precision: degree on the diagonal, -1 between neighbours.
struct IcarPrecision {
  Eigen::SparseMatrix<double> Q;
  int rank = 0;
  int n_components = 0;
  std::vector<int> component_of;

  int size() const { return static_cast<int>(Q.rows()); }
  Eigen::MatrixXd dense() const { return Eigen::MatrixXd(Q); }
};

IcarPrecision icar_precision(const AreaGraph& g);

/// Eigenpairs of a precision matrix, ascending.
struct SpectralBasis {
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd vectors;
  int null_dim = 0;

  int size() const { return static_cast<int>(eigenvalues.size()); }
};

/// Full spectrum of Q with canonicalised degenerate eigenspaces. null_dim is
/// the number of eigenvalues below 1e-9 * lambda_max.
SpectralBasis full_spectrum(const IcarPrecision& qp);

/// The k eigenvectors with the smallest strictly positive eigenvalues.
SpectralBasis eigen_lowest_nonnull(const IcarPrecision& qp, int k);
/// Same selection from an already computed spectrum.
SpectralBasis lowest_nonnull(const SpectralBasis& spectrum, int k);

/// Orthonormalise a degenerate eigenspace into a representation that depends
/// only on its projector: Gram-Schmidt over P e_1, P e_2, ..., then the first
/// nonzero entry of every vector is made positive.
Eigen::MatrixXd canonical_eigenspace_basis(const Eigen::MatrixXd& basis);

}  // namespace spconf
