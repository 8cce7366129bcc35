#pragma once

#include "nusmpbic/nusmpbic.hpp"

#include <cmath>

namespace fixtures {

using namespace nusmpbic;

/// Cl-, NO3-, K+, Na+ at 0.1 mol/L; ball volumes from the ionic radii
/// 1.81, 2.64, 1.33, 0.95 A. v0 = min volume.
inline SolventSpec four_species() {
  SolventSpec s;
  s.species = {{"Cl", -1, 0.1, 24.8384},
               {"NO3", -1, 0.1, 77.0727},
               {"K", 1, 0.1, 9.8547},
               {"Na", 1, 0.1, 3.5914}};
  s.v0 = 3.5914;
  return s;
}

/// Symmetric 1:1 salt with one common ion volume; the neutral problem has a
/// closed-form fixed point for this data.
inline SolventSpec symmetric_salt(double v = 28.8393, double cb = 0.1) {
  SolventSpec s;
  s.species = {{"An", -1, cb, v}, {"Cat", 1, cb, v}};
  s.v0 = v;
  return s;
}

/// Rings of point charges lining the channel pore, placed inside the protein
/// shell. Angular offsets keep atoms away from mesh lattice points.
inline AtomSet ring_atoms(int per_ring, double radius, std::initializer_list<double> z_levels,
                          double charge, double atom_radius = 1.5) {
  AtomSet atoms;
  int level = 0;
  for (double z : z_levels) {
    for (int k = 0; k < per_ring; ++k) {
      const double angle = 2.0 * M_PI * (k + 0.37 + 0.5 * level) / per_ring;
      atoms.positions.emplace_back(radius * std::cos(angle), radius * std::sin(angle), z);
      atoms.charge_numbers.push_back(charge);
      atoms.radii.push_back(atom_radius);
    }
    ++level;
  }
  return atoms;
}

struct ChannelCase {
  SyntheticChannelParams geometry;
  ProblemConfig config;
  SolventSpec solvent;
  AtomSet atoms;
};

/// The end-to-end synthetic channel: membrane slab Z = [-12, 12], annular
/// protein shell with 20 positive pore-lining charges, four species.
inline ChannelCase channel_case(double h = 2.0) {
  ChannelCase cc;
  cc.geometry.box = {-16, 16, -16, 16, -26, 26};
  cc.geometry.membrane_z1 = -12.0;
  cc.geometry.membrane_z2 = 12.0;
  cc.geometry.pore_radius = 5.0;
  cc.geometry.shell_radius = 9.0;
  cc.geometry.target_h = h;

  cc.config.eps_p = 2.0;
  cc.config.eps_m = 2.0;
  cc.config.eps_s = 80.0;
  cc.config.sigma = 0.0;
  cc.config.u_b = 0.0;
  cc.config.u_t = 0.0;
  cc.config.box = cc.geometry.box;
  cc.config.membrane_z1 = cc.geometry.membrane_z1;
  cc.config.membrane_z2 = cc.geometry.membrane_z2;
  cc.config.omega = 0.4;

  cc.solvent = four_species();
  cc.atoms = ring_atoms(10, 7.0, {-5.0, 5.0}, 0.1);
  return cc;
}

} // namespace fixtures
