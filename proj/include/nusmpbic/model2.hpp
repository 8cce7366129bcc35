#pragma once

#include "nusmpbic/assembly.hpp"
#include "nusmpbic/linear_solver.hpp"
#include "nusmpbic/physics.hpp"
#include "nusmpbic/singular_field.hpp"

#include <vector>

namespace nusmpbic {

struct PsiSolution {
  Eigen::VectorXd psi; // box nodal values
  SolveStats stats;
};

// Weak form used below. Multiply the harmonic equation by a test function v
// (v = 0 on Gamma_D), integrate by parts in each region, and substitute the
// flux jumps; with n_p out of the protein, n_m out of the membrane and n_b out
// of the box this leaves
//
//   a(Psi, v) =   int_{Gamma_p}  (eps_s - eps_p) dG/dn_p v ds
//              + int_{Gamma_m}  [(eps_s - eps_m) dG/dn_m + tau*sigma] v ds
//              + int_{Gamma_pm} (eps_m - eps_p) dG/dn_p v ds
//              - int_{Gamma_N}  eps(s) dG/dn_b v ds,
//
// where eps(s) is the permittivity of the region adjacent to Gamma_N at s,
// plus the Dirichlet condition Psi = g - G on Gamma_D. Spot check for the
// sigma term: a charged flat membrane between grounded plates must acquire a
// positive surface potential for sigma > 0, which forces the plus sign.
inline PsiSolution solve_model2(const LabeledMesh& mesh, const AtomSet& atoms,
                                const PhysicalConstants& constants, const ProblemConfig& config,
                                const LinearSolveOptions& options) {
  const auto A = assemble_stiffness(mesh, config.eps_p, config.eps_m, config.eps_s);

  auto dgdn = [&](const Vec3& point, const Vec3& normal) {
    return atoms.empty() ? 0.0
                         : eval_gradG_at(atoms, constants.alpha, config.eps_p, point).dot(normal);
  };

  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(mesh.node_count());
  auto accumulate = [&](FacetTag tag, auto density) {
    for (const auto& f : is_boundary_tag(tag) ? mesh.boundary_facets : mesh.interface_facets) {
      if (f.tag != tag) continue;
      const double w = mesh.facet_area(f) / 3.0;
      const Vec3 n = mesh.facet_unit_normal(f);
      for (int v : f.v) rhs[v] += w * density(f, mesh.nodes[v], n);
    }
  };

  accumulate(FacetTag::gamma_p, [&](const Facet&, const Vec3& p, const Vec3& n) {
    return (config.eps_s - config.eps_p) * dgdn(p, n);
  });
  accumulate(FacetTag::gamma_m, [&](const Facet&, const Vec3& p, const Vec3& n) {
    return (config.eps_s - config.eps_m) * dgdn(p, n) + constants.tau * config.sigma;
  });
  accumulate(FacetTag::gamma_pm, [&](const Facet&, const Vec3& p, const Vec3& n) {
    return (config.eps_m - config.eps_p) * dgdn(p, n);
  });
  accumulate(FacetTag::gamma_n, [&](const Facet& f, const Vec3& p, const Vec3& n) {
    const double eps = (f.adjacent_region == Region::protein)    ? config.eps_p
                       : (f.adjacent_region == Region::membrane) ? config.eps_m
                                                                 : config.eps_s;
    return -eps * dgdn(p, n);
  });

  // Psi = g - G on Gamma_D.
  const std::vector<int> dnodes = dirichlet_nodes(mesh);
  std::vector<Vec3> dpoints(dnodes.size());
  for (size_t i = 0; i < dnodes.size(); ++i) dpoints[i] = mesh.nodes[dnodes[i]];
  Eigen::VectorXd dvalues(dnodes.size());
  const Eigen::VectorXd g_on_d = atoms.empty()
                                     ? Eigen::VectorXd::Zero(dnodes.size())
                                     : eval_G(atoms, constants.alpha, config.eps_p, dpoints);
  for (size_t i = 0; i < dnodes.size(); ++i) {
    const Vec3& p = dpoints[i];
    dvalues[i] = boundary_value({p.x(), p.y(), p.z()}, config) - g_on_d[i];
  }

  auto sys = apply_dirichlet(A, dnodes, dvalues);
  PsiSolution sol;
  LinearSolver solver(sys.matrix, options);
  sol.psi = solver.solve(sys.constrain_rhs(rhs), &sol.stats);
  // Dirichlet elimination must reproduce the prescribed trace bit-exactly.
  for (size_t i = 0; i < dnodes.size(); ++i) sol.psi[dnodes[i]] = dvalues[i];
  return sol;
}

} // namespace nusmpbic
