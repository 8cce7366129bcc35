#pragma once

#include "nusmpbic/mesh.hpp"
#include "nusmpbic/model3.hpp"
#include "nusmpbic/physics.hpp"

#include <cmath>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nusmpbic {

/// Block-averaged 1D profiles along z. Missing entries mark slabs without
/// solvent volume.
struct CurveSet {
  std::vector<double> z;                                   // m + 2 points incl. endpoints
  std::vector<std::vector<std::optional<double>>> species; // n curves
  std::vector<std::optional<double>> u_plus;
  std::vector<std::optional<double>> u_minus;
  double slab_width = 0.0; // effective width after snapping to the membrane planes
};

/// Slab centers spanning [L_z1 + h/2, L_z2 - h/2]; the width is snapped so the
/// membrane planes Z1 and Z2 are themselves centers.
inline std::vector<double> curve_slab_centers(const ProblemConfig& config, double hbar,
                                              double* effective_h = nullptr) {
  if (!(hbar > 0.0)) throw std::invalid_argument("curve_slab_centers: hbar must be positive");
  const double z1 = config.membrane_z1, z2 = config.membrane_z2;
  const int div = std::max(1, static_cast<int>(std::lround((z2 - z1) / hbar)));
  const double h = (z2 - z1) / div;
  if (effective_h) *effective_h = h;

  const double lo = config.lz1() + 0.5 * h;
  const double hi = config.lz2() - 0.5 * h;
  const long kmin = static_cast<long>(std::ceil((lo - z1) / h - 1e-9));
  const long kmax = static_cast<long>(std::floor((hi - z1) / h + 1e-9));
  std::vector<double> centers;
  for (long k = kmin; k <= kmax; ++k) centers.push_back(z1 + k * h);
  if (centers.empty())
    throw std::invalid_argument("curve_slab_centers: box too thin for the slab width");
  return centers;
}

/// Block averages of c_i and the positive/negative potential parts
/// over slab intersections with the solvent region, vertex quadrature.
inline CurveSet block_average_curves(const NodalState& state, const Eigen::VectorXd& u_box,
                                     const LabeledMesh& mesh, const TransferOps& transfer,
                                     const SolventSpec& solvent, const ProblemConfig& config,
                                     double hbar = 5.0) {
  CurveSet out;
  const auto centers = curve_slab_centers(config, hbar, &out.slab_width);
  const int m = static_cast<int>(centers.size());
  const int n = solvent.count();

  const Eigen::VectorXd c_box_zero = Eigen::VectorXd::Zero(mesh.node_count());
  std::vector<Eigen::VectorXd> c_box(n, c_box_zero);
  for (int i = 0; i < n; ++i)
    c_box[i] = transfer.prolong_to_box(state.c.row(i).transpose());

  Eigen::VectorXd up = u_box.cwiseMax(0.0); // (u + |u|)/2
  Eigen::VectorXd um = u_box.cwiseMin(0.0); // (u - |u|)/2

  std::vector<double> vol(m, 0.0);
  std::vector<std::vector<double>> c_int(n, std::vector<double>(m, 0.0));
  std::vector<double> up_int(m, 0.0), um_int(m, 0.0);

  const double h = out.slab_width;
  for (const auto& t : mesh.tets) {
    if (t.region != Region::solvent) continue;
    const double zc = mesh.tet_centroid(t).z();
    const long j = std::lround((zc - centers.front()) / h);
    if (j < 0 || j >= m) continue;
    if (std::abs(zc - centers[j]) > 0.5 * h + 1e-12) continue;
    const double w = mesh.tet_volume(t) / 4.0;
    vol[j] += 4.0 * w;
    for (int v : t.v) {
      for (int i = 0; i < n; ++i) c_int[i][j] += w * c_box[i][v];
      up_int[j] += w * up[v];
      um_int[j] += w * um[v];
    }
  }

  // Interior block values plus the bulk/boundary endpoint conventions.
  out.z.push_back(config.lz1());
  for (double zc : centers) out.z.push_back(zc);
  out.z.push_back(config.lz2());

  out.species.assign(n, {});
  for (int i = 0; i < n; ++i) {
    out.species[i].push_back(solvent.species[i].bulk_concentration);
    for (int j = 0; j < m; ++j)
      out.species[i].push_back(vol[j] > 0.0 ? std::optional<double>(c_int[i][j] / vol[j])
                                            : std::nullopt);
    out.species[i].push_back(solvent.species[i].bulk_concentration);
  }
  out.u_plus.push_back(config.u_b);
  out.u_minus.push_back(config.u_b);
  for (int j = 0; j < m; ++j) {
    out.u_plus.push_back(vol[j] > 0.0 ? std::optional<double>(up_int[j] / vol[j]) : std::nullopt);
    out.u_minus.push_back(vol[j] > 0.0 ? std::optional<double>(um_int[j] / vol[j]) : std::nullopt);
  }
  out.u_plus.push_back(config.u_t);
  out.u_minus.push_back(config.u_t);
  return out;
}

inline void write_curves_csv(const CurveSet& curves, const SolventSpec& solvent,
                             const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write curves file: " + path);
  char buf[64];
  auto fmt = [&](const std::optional<double>& v) -> std::string {
    if (!v) return ""; // missing block: empty field, not zero
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    return buf;
  };
  out << "z";
  for (const auto& sp : solvent.species) out << ",c_" << sp.name;
  out << ",u_plus,u_minus\n";
  for (size_t j = 0; j < curves.z.size(); ++j) {
    std::snprintf(buf, sizeof buf, "%.17g", curves.z[j]);
    out << buf;
    for (const auto& curve : curves.species) out << "," << fmt(curve[j]);
    out << "," << fmt(curves.u_plus[j]) << "," << fmt(curves.u_minus[j]) << "\n";
  }
}

inline void write_iteration_csv(const SolverReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write iteration report: " + path);
  out << "k,err_phi,err_c,residual,newton_max_inner,seconds\n";
  char buf[256];
  for (const auto& r : report.iterations) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%d,%.17g\n", r.k, r.err_phi, r.err_c,
                  r.residual, r.newton_max_inner, r.seconds);
    out << buf;
  }
}

} // namespace nusmpbic
