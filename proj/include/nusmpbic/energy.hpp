#pragma once

#include "nusmpbic/mesh.hpp"
#include "nusmpbic/model3.hpp"
#include "nusmpbic/physics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace nusmpbic {

/// Free energy split, in k_B T units.
struct EnergyBreakdown {
  double electrostatic = 0.0;
  double ideal_gas = 0.0;
  double excess = 0.0;
  double total() const { return electrostatic + ideal_gas + excess; }
};

namespace detail {

// x ln x with the entropy convention x ln x -> 0 at x = 0.
inline double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

} // namespace detail

/// Vertex-rule evaluation of the free energy over the solvent region at the
/// given state and box potential u.
inline EnergyBreakdown evaluate_energy(const NodalState& state, const Eigen::VectorXd& u_box,
                                       const LabeledMesh& mesh, const TransferOps& transfer,
                                       const SolventSpec& solvent, double gamma) {
  const int n = solvent.count();
  const int nh = state.solvent_nodes();
  if (static_cast<int>(transfer.parent_of.size()) != nh)
    throw std::invalid_argument("evaluate_energy: state does not match the solvent mesh");

  const Eigen::VectorXd u = transfer.restrict_to_solvent(u_box);

  // Per-node integrands; negative log arguments are domain violations.
  Eigen::VectorXd es = Eigen::VectorXd::Zero(nh);
  Eigen::VectorXd id = Eigen::VectorXd::Zero(nh);
  Eigen::VectorXd ex = Eigen::VectorXd::Zero(nh);
  for (int mu = 0; mu < nh; ++mu) {
    double vsum = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto& sp = solvent.species[i];
      const double c = state.c(i, mu);
      if (c < 0.0)
        throw std::invalid_argument("evaluate_energy: negative concentration at solvent node " +
                                    std::to_string(mu));
      es[mu] += 0.5 * gamma * sp.charge_number * u[mu] * c;
      id[mu] += gamma * (detail::xlogx(c) - c * std::log(sp.bulk_concentration) - c);
      vsum += sp.ion_volume * c;
    }
    const double water = 1.0 - gamma * vsum;
    if (!(water > 0.0))
      throw std::invalid_argument(
          "evaluate_energy: water volume fraction not positive at solvent node " +
          std::to_string(mu));
    ex[mu] = (water * std::log(water) - water) / solvent.v0;
  }

  EnergyBreakdown e;
  // Integrate with the lumped solvent mass on box nodes, mapped to solvent
  // indexing via the transfer operator.
  const Eigen::VectorXd mass_box = lumped_mass_solvent(mesh);
  for (int mu = 0; mu < nh; ++mu) {
    const double w = mass_box[transfer.parent_of[mu]];
    e.electrostatic += w * es[mu];
    e.ideal_gas += w * id[mu];
    e.excess += w * ex[mu];
  }
  return e;
}

} // namespace nusmpbic
