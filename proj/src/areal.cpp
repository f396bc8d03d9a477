#include "spconf/areal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "spconf/errors.hpp"

namespace spconf {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream ss(s);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

bool parse_int(const std::string& tok, long long& out) {
  if (tok.empty()) return false;
  std::size_t pos = 0;
  try {
    out = std::stoll(tok, &pos);
  } catch (const std::exception&) {
    return false;
  }
  return pos == tok.size();
}

}  // namespace

AreaGraph AreaGraph::from_edges(int n, const std::vector<std::pair<int, int>>& edges) {
  if (n < 1) throw ValidationError("graph must have at least one area");
  AreaGraph g;
  g.n_ = n;
  g.edges_.reserve(edges.size());
  for (auto [a, b] : edges) {
    if (a < 0 || a >= n || b < 0 || b >= n) {
      throw ValidationError("edge (" + std::to_string(a + 1) + ", " + std::to_string(b + 1) +
                            ") references an area outside 1.." + std::to_string(n));
    }
    if (a == b) throw ValidationError("self-edge on area " + std::to_string(a + 1));
    g.edges_.emplace_back(std::min(a, b), std::max(a, b));
  }
  std::sort(g.edges_.begin(), g.edges_.end());
  g.edges_.erase(std::unique(g.edges_.begin(), g.edges_.end()), g.edges_.end());

  g.adjacency_.assign(static_cast<std::size_t>(n), {});
  for (auto [a, b] : g.edges_) {
    g.adjacency_[static_cast<std::size_t>(a)].push_back(b);
    g.adjacency_[static_cast<std::size_t>(b)].push_back(a);
  }
  for (auto& nb : g.adjacency_) std::sort(nb.begin(), nb.end());

  g.component_.assign(static_cast<std::size_t>(n), -1);
  int label = 0;
  std::vector<int> stack;
  for (int s = 0; s < n; ++s) {
    if (g.component_[static_cast<std::size_t>(s)] >= 0) continue;
    stack.push_back(s);
    g.component_[static_cast<std::size_t>(s)] = label;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (int w : g.adjacency_[static_cast<std::size_t>(v)]) {
        if (g.component_[static_cast<std::size_t>(w)] < 0) {
          g.component_[static_cast<std::size_t>(w)] = label;
          stack.push_back(w);
        }
      }
    }
    ++label;
  }
  g.n_components_ = label;
  return g;
}

AreaGraph parse_edge_list(std::istream& in) {
  std::string line;
  int line_no = 0;
  long long n = -1;
  std::vector<std::pair<int, int>> edges;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (n < 0) {
      if (t.rfind("n=", 0) != 0 || !parse_int(trim(t.substr(2)), n) || n < 1) {
        throw ParseError("expected header 'n=<count>'", line_no);
      }
      continue;
    }
    const auto tok = split_ws(t);
    long long a = 0, b = 0;
    if (tok.size() != 2 || !parse_int(tok[0], a) || !parse_int(tok[1], b)) {
      throw ParseError("expected 'i j' pair, got '" + t + "'", line_no);
    }
    if (a < 1 || a > n || b < 1 || b > n) {
      throw ValidationError("line " + std::to_string(line_no) + ": area index out of range 1.." +
                            std::to_string(n) + " in '" + t + "'");
    }
    if (a == b) throw ValidationError("line " + std::to_string(line_no) + ": self-edge on area " + tok[0]);
    edges.emplace_back(static_cast<int>(a - 1), static_cast<int>(b - 1));
  }
  if (n < 0) throw ParseError("empty edge list: missing 'n=<count>' header", line_no);
  return AreaGraph::from_edges(static_cast<int>(n), edges);
}

AreaGraph parse_gal(std::istream& in) {
  std::string line;
  int line_no = 0;
  auto next_line = [&](std::string& out) {
    while (std::getline(in, line)) {
      ++line_no;
      out = trim(line);
      if (!out.empty()) return true;
    }
    return false;
  };

  std::string header;
  if (!next_line(header)) throw ParseError("empty GAL file", line_no);
  const auto htok = split_ws(header);
  long long n = 0;
  // Either "0 n name key" (GeoDa) or a bare count.
  const std::size_t count_pos = htok.size() >= 2 ? 1 : 0;
  if (htok.empty() || !parse_int(htok[count_pos], n) || n < 1) {
    throw ParseError("bad GAL header '" + header + "'", line_no);
  }

  struct Record {
    std::string id;
    std::vector<std::string> neighbours;
    int line;
  };
  std::vector<Record> records;
  records.reserve(static_cast<std::size_t>(n));
  std::string rec_line, nb_line;
  while (next_line(rec_line)) {
    const auto tok = split_ws(rec_line);
    long long deg = 0;
    if (tok.size() != 2 || !parse_int(tok[1], deg) || deg < 0) {
      throw ParseError("expected 'id degree', got '" + rec_line + "'", line_no);
    }
    Record r{tok[0], {}, line_no};
    if (deg > 0) {
      if (!next_line(nb_line)) throw ParseError("missing neighbour line for area " + tok[0], line_no);
      r.neighbours = split_ws(nb_line);
      if (static_cast<long long>(r.neighbours.size()) != deg) {
        throw ParseError("area " + tok[0] + " declares " + std::to_string(deg) + " neighbours but lists " +
                             std::to_string(r.neighbours.size()),
                         line_no);
      }
    }
    records.push_back(std::move(r));
  }
  if (static_cast<long long>(records.size()) != n) {
    throw ParseError("header declares " + std::to_string(n) + " areas but file has " +
                         std::to_string(records.size()) + " records",
                     line_no);
  }

  // Integer ids covering 1..n index areas directly; otherwise record order does.
  std::map<std::string, int> index;
  bool numeric = true;
  for (const auto& r : records) {
    long long v = 0;
    if (!parse_int(r.id, v) || v < 1 || v > n) numeric = false;
  }
  for (std::size_t k = 0; k < records.size(); ++k) {
    long long v = 0;
    const int idx = numeric && parse_int(records[k].id, v) ? static_cast<int>(v - 1) : static_cast<int>(k);
    if (!index.emplace(records[k].id, idx).second) {
      throw ValidationError("duplicate GAL record for area " + records[k].id);
    }
  }
  if (numeric) {
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    for (const auto& [id, idx] : index) seen[static_cast<std::size_t>(idx)] = 1;
    if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
      throw ValidationError("GAL ids do not cover 1.." + std::to_string(n));
    }
  }

  std::vector<std::pair<int, int>> edges;
  for (const auto& r : records) {
    const int a = index.at(r.id);
    for (const auto& nb : r.neighbours) {
      auto it = index.find(nb);
      if (it == index.end()) {
        throw ValidationError("line " + std::to_string(r.line) + ": neighbour '" + nb + "' of area " + r.id +
                              " is not a known area (index out of range)");
      }
      if (it->second == a) throw ValidationError("line " + std::to_string(r.line) + ": self-edge on area " + r.id);
      edges.emplace_back(a, it->second);
    }
  }
  return AreaGraph::from_edges(static_cast<int>(n), edges);
}

AreaGraph load_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open adjacency file '" + path + "'");
  std::string line, first;
  while (std::getline(in, line)) {
    first = trim(line);
    if (!first.empty() && first[0] != '#') break;
  }
  in.clear();
  in.seekg(0);
  if (first.rfind("n=", 0) == 0) return parse_edge_list(in);
  return parse_gal(in);
}

void write_edge_list(std::ostream& out, const AreaGraph& g) {
  out << "n=" << g.size() << '\n';
  for (auto [a, b] : g.edges()) out << a + 1 << ' ' << b + 1 << '\n';
}

void write_gal(std::ostream& out, const AreaGraph& g, const std::string& name) {
  out << "0 " << g.size() << ' ' << name << " id\n";
  for (int i = 0; i < g.size(); ++i) {
    const auto& nb = g.neighbours(i);
    out << i + 1 << ' ' << nb.size() << '\n';
    if (nb.empty()) continue;
    for (std::size_t k = 0; k < nb.size(); ++k) out << (k ? " " : "") << nb[k] + 1;
    out << '\n';
  }
}

AreaGraph lattice_graph(int rows, int cols) {
  if (rows < 1 || cols < 1) throw ValidationError("lattice dimensions must be positive");
  std::vector<std::pair<int, int>> edges;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int v = r * cols + c;
      if (c + 1 < cols) edges.emplace_back(v, v + 1);
      if (r + 1 < rows) edges.emplace_back(v, v + cols);
    }
  }
  return AreaGraph::from_edges(rows * cols, edges);
}

IcarPrecision icar_precision(const AreaGraph& g) {
  const int n = g.size();
  // Integer assembly: every row sums to exactly zero before conversion.
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(n) + 2 * g.edges().size());
  for (int i = 0; i < n; ++i) trip.emplace_back(i, i, static_cast<double>(g.degree(i)));
  for (auto [a, b] : g.edges()) {
    trip.emplace_back(a, b, -1.0);
    trip.emplace_back(b, a, -1.0);
  }
  IcarPrecision qp;
  qp.Q.resize(n, n);
  qp.Q.setFromTriplets(trip.begin(), trip.end());
  qp.Q.makeCompressed();
  qp.n_components = g.n_components();
  qp.rank = n - g.n_components();
  qp.component_of = g.component_of();
  return qp;
}

Eigen::MatrixXd canonical_eigenspace_basis(const Eigen::MatrixXd& basis) {
  const Eigen::Index n = basis.rows();
  const Eigen::Index m = basis.cols();
  const Eigen::MatrixXd proj = basis * basis.transpose();
  Eigen::MatrixXd out(n, m);
  Eigen::Index filled = 0;
  for (Eigen::Index i = 0; i < n && filled < m; ++i) {
    Eigen::VectorXd v = proj.col(i);
    for (Eigen::Index k = 0; k < filled; ++k) v -= out.col(k).dot(v) * out.col(k);
    // Second pass keeps orthogonality at machine precision.
    for (Eigen::Index k = 0; k < filled; ++k) v -= out.col(k).dot(v) * out.col(k);
    const double nv = v.norm();
    if (nv < 1e-6) continue;
    out.col(filled++) = v / nv;
  }
  if (filled < m) out = basis;  // projector too ill-conditioned to canonicalise
  for (Eigen::Index k = 0; k < m; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::abs(out(i, k)) > 1e-10) {
        if (out(i, k) < 0) out.col(k) *= -1.0;
        break;
      }
    }
  }
  return out;
}

SpectralBasis full_spectrum(const IcarPrecision& qp) {
  const Eigen::MatrixXd q = qp.dense();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q);
  if (es.info() != Eigen::Success) throw NumericError("eigendecomposition of precision matrix failed");
  SpectralBasis sb;
  sb.eigenvalues = es.eigenvalues();
  sb.vectors = es.eigenvectors();
  const Eigen::Index n = q.rows();
  const double lmax = n > 0 ? std::max(sb.eigenvalues.maxCoeff(), 0.0) : 0.0;
  const double null_tol = 1e-9 * lmax;
  sb.null_dim = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (sb.eigenvalues(j) < null_tol) {
      sb.eigenvalues(j) = 0.0;
      ++sb.null_dim;
    }
  }
  // Canonicalise every cluster of (numerically) equal eigenvalues.
  const double tie_tol = 1e-8 * std::max(lmax, 1.0);
  Eigen::Index start = 0;
  while (start < n) {
    Eigen::Index end = start + 1;
    while (end < n && sb.eigenvalues(end) - sb.eigenvalues(end - 1) < tie_tol) ++end;
    const Eigen::Index m = end - start;
    if (m > 1) {
      sb.vectors.middleCols(start, m) = canonical_eigenspace_basis(sb.vectors.middleCols(start, m));
      const double mean = sb.eigenvalues.segment(start, m).mean();
      if (start >= sb.null_dim) sb.eigenvalues.segment(start, m).setConstant(mean);
    } else {
      Eigen::VectorXd v = sb.vectors.col(start);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (std::abs(v(i)) > 1e-10) {
          if (v(i) < 0) sb.vectors.col(start) *= -1.0;
          break;
        }
      }
    }
    start = end;
  }
  return sb;
}

SpectralBasis lowest_nonnull(const SpectralBasis& spectrum, int k) {
  const int available = spectrum.size() - spectrum.null_dim;
  if (k < 0 || k > available) {
    throw ValidationError("requested " + std::to_string(k) + " eigenvectors but the precision has rank " +
                          std::to_string(available));
  }
  SpectralBasis out;
  out.eigenvalues = spectrum.eigenvalues.segment(spectrum.null_dim, k);
  out.vectors = spectrum.vectors.middleCols(spectrum.null_dim, k);
  out.null_dim = 0;
  return out;
}

SpectralBasis eigen_lowest_nonnull(const IcarPrecision& qp, int k) {
  if (k < 0 || k > qp.rank) {
    throw ValidationError("requested " + std::to_string(k) + " eigenvectors but the precision has rank " +
                          std::to_string(qp.rank));
  }
  return lowest_nonnull(full_spectrum(qp), k);
}

}  // namespace spconf
