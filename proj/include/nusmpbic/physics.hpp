#pragma once

#include <array>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

namespace nusmpbic {

// CODATA 2018 recommended values (SI).
namespace codata {
inline constexpr double elementary_charge = 1.602176634e-19;    // C
inline constexpr double vacuum_permittivity = 8.8541878128e-12; // F/m
inline constexpr double boltzmann_constant = 1.380649e-23;      // J/K
inline constexpr double avogadro_number = 6.02214076e23;        // 1/mol
} // namespace codata

inline constexpr double default_temperature = 298.15; // K

/// Dimensionless coupling constants of the Angstrom / mol/L / kT unit system.
struct PhysicalConstants {
  double alpha;       // atomic point charges
  double beta;        // ionic charge density
  double tau;         // membrane surface charge, input in uC/cm^2
  double gamma;       // mol/L -> 1/A^3
  double temperature; // K
};

inline PhysicalConstants compute_constants(double temperature) {
  if (!(temperature > 0.0))
    throw std::invalid_argument("compute_constants: temperature must be positive");
  using namespace codata;
  const double e0kT = vacuum_permittivity * boltzmann_constant * temperature;
  PhysicalConstants pc;
  pc.alpha = 1e10 * elementary_charge * elementary_charge / e0kT;
  pc.beta = avogadro_number * elementary_charge * elementary_charge / (1e17 * e0kT);
  pc.tau = 1e-12 * elementary_charge / e0kT;
  pc.gamma = 1e-27 * avogadro_number;
  pc.temperature = temperature;
  return pc;
}

struct IonSpecies {
  std::string name;
  int charge_number = 0;          // Z_i
  double bulk_concentration = 0.0; // c_i^b, mol/L
  double ion_volume = 0.0;         // v_i, A^3
};

inline double sphere_volume(double radius) {
  return 4.0 * M_PI * radius * radius * radius / 3.0;
}

/// Ordered ionic species plus the size scaling parameter v0.
struct SolventSpec {
  std::vector<IonSpecies> species;
  double v0 = 0.0; // A^3

  int count() const { return static_cast<int>(species.size()); }

  double mean_volume() const {
    double s = 0.0;
    for (const auto& sp : species) s += sp.ion_volume;
    return s / static_cast<double>(species.size());
  }

  double min_volume() const {
    double m = species.front().ion_volume;
    for (const auto& sp : species) m = std::min(m, sp.ion_volume);
    return m;
  }

  void validate() const {
    if (species.empty())
      throw std::invalid_argument("SolventSpec: at least one ionic species required");
    for (const auto& sp : species) {
      if (!(sp.bulk_concentration > 0.0))
        throw std::invalid_argument("SolventSpec: bulk concentration of '" + sp.name +
                                    "' must be positive");
      if (!(sp.ion_volume > 0.0))
        throw std::invalid_argument("SolventSpec: ion volume of '" + sp.name +
                                    "' must be positive");
    }
    if (!(v0 > 0.0))
      throw std::invalid_argument("SolventSpec: v0 must be positive");
    // Electroneutrality sum Z_i c_i^b = 0, relative tolerance for decimal inputs.
    double sum = 0.0, scale = 0.0;
    for (const auto& sp : species) {
      sum += sp.charge_number * sp.bulk_concentration;
      scale += std::abs(sp.charge_number) * sp.bulk_concentration;
    }
    if (std::abs(sum) > 1e-12 * std::max(scale, 1.0))
      throw std::invalid_argument("SolventSpec: species are not electroneutral (sum Z_i c_i^b = " +
                                  std::to_string(sum) + ")");
  }

  /// All species forced to the average ion volume; v0 re-derived as min v_i.
  SolventSpec uniform_size() const {
    SolventSpec u = *this;
    const double vbar = mean_volume();
    for (auto& sp : u.species) sp.ion_volume = vbar;
    u.v0 = vbar;
    return u;
  }
};

/// Box geometry, dielectric data and iteration parameters of one solve.
struct ProblemConfig {
  double eps_p = 2.0;
  double eps_m = 2.0;
  double eps_s = 80.0;
  double sigma = 0.0; // uC/cm^2 on Gamma_m
  double u_b = 0.0;   // Dirichlet value, bottom face
  double u_t = 0.0;   // Dirichlet value, top face
  std::array<double, 6> box{0, 0, 0, 0, 0, 0}; // x1 x2 y1 y2 z1 z2, A
  double membrane_z1 = 0.0;
  double membrane_z2 = 0.0;
  double omega = 0.4;
  double tol = 1e-4;
  double newton_tol = 1e-8;
  double overflow_bound = 45.0;
  double temperature = default_temperature;

  double lz1() const { return box[4]; }
  double lz2() const { return box[5]; }

  void validate() const {
    if (!(eps_p > 0.0 && eps_m > 0.0 && eps_s > 0.0))
      throw std::invalid_argument("ProblemConfig: permittivities must be positive");
    if (!(omega > 0.0 && omega <= 1.0))
      throw std::invalid_argument("ProblemConfig: omega must lie in (0, 1]");
    if (!(box[0] < box[1] && box[2] < box[3] && box[4] < box[5]))
      throw std::invalid_argument("ProblemConfig: box extents must be ordered");
    if (!(membrane_z1 < membrane_z2))
      throw std::invalid_argument("ProblemConfig: membrane requires Z1 < Z2");
    if (!(membrane_z1 > box[4] && membrane_z2 < box[5]))
      throw std::invalid_argument("ProblemConfig: membrane slab must lie inside (L_z1, L_z2)");
    if (!(tol > 0.0 && newton_tol > 0.0))
      throw std::invalid_argument("ProblemConfig: tolerances must be positive");
    if (!(overflow_bound > 0.0))
      throw std::invalid_argument("ProblemConfig: overflow bound must be positive");
  }
};

/// Dirichlet boundary data g on the top/bottom faces.
inline double boundary_value(const std::array<double, 3>& point, const ProblemConfig& config) {
  const double span = config.lz2() - config.lz1();
  const double tol = 1e-9 * std::max(1.0, std::abs(span));
  if (std::abs(point[2] - config.lz1()) <= tol) return config.u_b;
  if (std::abs(point[2] - config.lz2()) <= tol) return config.u_t;
  throw std::invalid_argument("boundary_value: point is not on Gamma_D (z = " +
                              std::to_string(point[2]) + ")");
}

} // namespace nusmpbic
