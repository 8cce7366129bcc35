#pragma once

#include "nusmpbic/mesh.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace nusmpbic {

/// Protein point charges (positions in A, charges in e units).
struct AtomSet {
  std::vector<Vec3> positions;
  std::vector<double> charge_numbers;
  std::vector<double> radii; // diagnostics only

  int count() const { return static_cast<int>(positions.size()); }
  bool empty() const { return positions.empty(); }

  double total_charge() const {
    double s = 0.0;
    for (double z : charge_numbers) s += z;
    return s;
  }
};

class SingularityError : public std::runtime_error {
public:
  SingularityError(int atom_index, double distance)
      : std::runtime_error("evaluation point collides with atom " + std::to_string(atom_index) +
                           " (distance " + std::to_string(distance) + " A)"),
        atom(atom_index) {}
  int atom;
};

inline constexpr double atom_collision_guard = 1e-8; // A

/// Coulomb sum of the singular component at the given points.
inline Eigen::VectorXd eval_G(const AtomSet& atoms, double alpha, double eps_p,
                              const std::vector<Vec3>& points) {
  const double scale = alpha / (4.0 * M_PI * eps_p);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(points.size());
  for (size_t p = 0; p < points.size(); ++p) {
    double s = 0.0;
    for (int j = 0; j < atoms.count(); ++j) {
      const double d = (points[p] - atoms.positions[j]).norm();
      if (d <= atom_collision_guard) throw SingularityError(j, d);
      s += atoms.charge_numbers[j] / d;
    }
    out[p] = scale * s;
  }
  return out;
}

inline Eigen::VectorXd eval_G(const AtomSet& atoms, double alpha, double eps_p,
                              const LabeledMesh& mesh) {
  return eval_G(atoms, alpha, eps_p, mesh.nodes);
}

/// Gradient of the Coulomb sum at the given points.
inline std::vector<Vec3> eval_gradG(const AtomSet& atoms, double alpha, double eps_p,
                                    const std::vector<Vec3>& points) {
  const double scale = -alpha / (4.0 * M_PI * eps_p);
  std::vector<Vec3> out(points.size(), Vec3::Zero());
  for (size_t p = 0; p < points.size(); ++p) {
    Vec3 s = Vec3::Zero();
    for (int j = 0; j < atoms.count(); ++j) {
      const Vec3 d = points[p] - atoms.positions[j];
      const double r = d.norm();
      if (r <= atom_collision_guard) throw SingularityError(j, r);
      s += atoms.charge_numbers[j] / (r * r * r) * d;
    }
    out[p] = scale * s;
  }
  return out;
}

inline Vec3 eval_gradG_at(const AtomSet& atoms, double alpha, double eps_p, const Vec3& point) {
  return eval_gradG(atoms, alpha, eps_p, std::vector<Vec3>{point})[0];
}

} // namespace nusmpbic
