#pragma once

#include "nusmpbic/mesh.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <fstream>
#include <functional>
#include <stdexcept>
#include <vector>

namespace nusmpbic {

using SparseMat = Eigen::SparseMatrix<double, Eigen::RowMajor>; // CSR
using Triplet = Eigen::Triplet<double>;

class AssemblyError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace detail {

// Constant P1 gradients on a tet: rows of the inverse edge matrix.
struct TetGradients {
  Vec3 grad[4];
  double volume;
};

inline TetGradients p1_gradients(const LabeledMesh& mesh, const Tet& t) {
  const Vec3& a = mesh.nodes[t.v[0]];
  Eigen::Matrix3d E;
  E.col(0) = mesh.nodes[t.v[1]] - a;
  E.col(1) = mesh.nodes[t.v[2]] - a;
  E.col(2) = mesh.nodes[t.v[3]] - a;
  const double det = E.determinant();
  if (det < 6.0 * 1e-14)
    throw AssemblyError("degenerate or inverted tet (volume below 1e-14 A^3) during assembly");
  const Eigen::Matrix3d inv = E.inverse();
  TetGradients g;
  g.volume = det / 6.0;
  for (int k = 0; k < 3; ++k) g.grad[k + 1] = inv.row(k);
  g.grad[0] = -(g.grad[1] + g.grad[2] + g.grad[3]);
  return g;
}

} // namespace detail

/// Stiffness of the region-weighted Dirichlet form; symmetric, one-point
/// quadrature (exact for P1).
inline SparseMat assemble_stiffness(const LabeledMesh& mesh, double eps_p, double eps_m,
                                    double eps_s) {
  const int n = mesh.node_count();
  std::vector<Triplet> trip;
  trip.reserve(mesh.tets.size() * 16);
  for (const auto& t : mesh.tets) {
    const auto g = detail::p1_gradients(mesh, t);
    const double eps = (t.region == Region::protein)    ? eps_p
                       : (t.region == Region::membrane) ? eps_m
                                                        : eps_s;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        trip.emplace_back(t.v[i], t.v[j], eps * g.volume * g.grad[i].dot(g.grad[j]));
  }
  SparseMat A(n, n);
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

/// Diagonal (vertex-rule) mass over all tets of the box mesh.
inline Eigen::VectorXd lumped_mass_box(const LabeledMesh& mesh) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(mesh.node_count());
  for (const auto& t : mesh.tets) {
    const double w = mesh.tet_volume(t) / 4.0;
    for (int v : t.v) m[v] += w;
  }
  return m;
}

/// Diagonal mass of the solvent region, indexed on box nodes; zero at nodes
/// without solvent support.
inline Eigen::VectorXd lumped_mass_solvent(const LabeledMesh& mesh) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(mesh.node_count());
  for (const auto& t : mesh.tets) {
    if (t.region != Region::solvent) continue;
    const double w = mesh.tet_volume(t) / 4.0;
    for (int v : t.v) m[v] += w;
  }
  return m;
}

/// Diagonal mass on the solvent submesh (solvent node indexing).
inline Eigen::VectorXd lumped_mass_submesh(const BasicTetMesh& sub) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(sub.node_count());
  for (size_t i = 0; i < sub.tets.size(); ++i) {
    const double w = sub.tet_volume(static_cast<int>(i)) / 4.0;
    for (int v : sub.tets[i]) m[v] += w;
  }
  return m;
}

inline double lumped_l2_norm(const Eigen::VectorXd& mass, const Eigen::VectorXd& x) {
  return std::sqrt(mass.dot(x.cwiseProduct(x)));
}

/// b_k = integral over D_s of (P density) phi_k. With the vertex rule this is
/// the lumped solvent mass times the prolonged density, entry by entry.
inline Eigen::VectorXd assemble_solvent_load(const LabeledMesh& mesh, const TransferOps& transfer,
                                             const Eigen::VectorXd& nodal_density) {
  if (nodal_density.size() != static_cast<Eigen::Index>(transfer.parent_of.size()))
    throw std::invalid_argument("assemble_solvent_load: density size != solvent node count");
  return lumped_mass_solvent(mesh).cwiseProduct(transfer.prolong_to_box(nodal_density));
}

/// b_k = integral of density phi_k over the facets with the given tag,
/// 3-point vertex rule; density sampled at facet corners with the facet's
/// canonical unit normal.
inline Eigen::VectorXd assemble_interface_load(
    const LabeledMesh& mesh, FacetTag tag,
    const std::function<double(const Facet&, const Vec3& point, const Vec3& unit_normal)>&
        surface_density) {
  const auto& facets = is_boundary_tag(tag) ? mesh.boundary_facets : mesh.interface_facets;
  bool found = false;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(mesh.node_count());
  for (const auto& f : facets) {
    if (f.tag != tag) continue;
    found = true;
    const double w = mesh.facet_area(f) / 3.0;
    const Vec3 n = mesh.facet_unit_normal(f);
    for (int v : f.v) b[v] += w * surface_density(f, mesh.nodes[v], n);
  }
  if (!found)
    throw std::invalid_argument("assemble_interface_load: no facets carry tag " +
                                std::to_string(static_cast<int>(tag)));
  return b;
}

// ---------------------------------------------------------------------------
// Dirichlet constraints by symmetric elimination
// ---------------------------------------------------------------------------

/// Matrix with Dirichlet rows/columns eliminated symmetrically. Keeps the
/// column contribution so fresh right-hand sides can be constrained without
/// re-touching the matrix.
struct ConstrainedSystem {
  SparseMat matrix;            // rows/cols zeroed, unit diagonal at constrained nodes
  Eigen::VectorXd col_adjust;  // A_orig[:, D] * values, zero at constrained rows
  std::vector<int> nodes;
  Eigen::VectorXd values;      // per constrained node, in `nodes` order

  Eigen::VectorXd constrain_rhs(const Eigen::VectorXd& rhs) const {
    Eigen::VectorXd b = rhs - col_adjust;
    for (size_t i = 0; i < nodes.size(); ++i) b[nodes[i]] = values[i];
    return b;
  }
};

inline ConstrainedSystem apply_dirichlet(const SparseMat& A, const std::vector<int>& nodes,
                                         const Eigen::VectorXd& values) {
  if (values.size() != static_cast<Eigen::Index>(nodes.size()))
    throw std::invalid_argument("apply_dirichlet: values size != node count");
  const int n = static_cast<int>(A.rows());
  std::vector<char> is_d(n, 0);
  Eigen::VectorXd value_at = Eigen::VectorXd::Zero(n);
  for (size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i] < 0 || nodes[i] >= n)
      throw std::invalid_argument("apply_dirichlet: node index out of range");
    is_d[nodes[i]] = 1;
    value_at[nodes[i]] = values[i];
  }

  ConstrainedSystem sys;
  sys.nodes = nodes;
  sys.values = values;
  sys.col_adjust = Eigen::VectorXd::Zero(n);

  SparseMat M = A;
  for (int row = 0; row < n; ++row) {
    for (SparseMat::InnerIterator it(M, row); it; ++it) {
      const int col = static_cast<int>(it.col());
      if (is_d[row]) {
        it.valueRef() = (col == row) ? 1.0 : 0.0;
      } else if (is_d[col]) {
        sys.col_adjust[row] += it.value() * value_at[col];
        it.valueRef() = 0.0;
      }
    }
  }
  M.prune(0.0);
  // Constrained rows always keep an explicit unit diagonal.
  sys.matrix = std::move(M);
  return sys;
}

/// Matrix Market coordinate dump, for debugging assembled operators.
inline void dump_matrix_market(const SparseMat& A, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write matrix file: " + path);
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << A.rows() << " " << A.cols() << " " << A.nonZeros() << "\n";
  out.precision(17);
  for (int row = 0; row < A.outerSize(); ++row)
    for (SparseMat::InnerIterator it(A, row); it; ++it)
      out << (it.row() + 1) << " " << (it.col() + 1) << " " << it.value() << "\n";
}

} // namespace nusmpbic
