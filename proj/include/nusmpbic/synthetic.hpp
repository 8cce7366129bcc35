#pragma once

#include "nusmpbic/mesh.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>

namespace nusmpbic {

/// Parameters of the synthetic ion-channel geometry: a membrane slab with a
/// cylindrical pore, optionally lined by an annular protein shell. The pore
/// axis is the vertical line through the box center.
struct SyntheticChannelParams {
  std::array<double, 6> box{-20, 20, -20, 20, -30, 30};
  double membrane_z1 = -12.0;
  double membrane_z2 = 12.0;
  double pore_radius = 6.0;
  double shell_radius = 10.0; // == pore_radius: slab only, no protein
  double target_h = 2.0;      // A
};

namespace detail {

inline void append_derived_facets(LabeledMesh& mesh) {
  auto adj = build_facet_adjacency(mesh);
  const auto bb = mesh.bounding_box();
  const double geom_tol =
      1e-9 * std::max({bb[1] - bb[0], bb[3] - bb[2], bb[5] - bb[4], 1.0});
  for (const auto& [key, a] : adj) {
    Facet f{};
    f.v = key.sorted;
    if (a.count == 1) {
      const double z0 = mesh.nodes[f.v[0]].z(), z1 = mesh.nodes[f.v[1]].z(),
                   z2 = mesh.nodes[f.v[2]].z();
      const bool bottom = std::abs(z0 - bb[4]) <= geom_tol && std::abs(z1 - bb[4]) <= geom_tol &&
                          std::abs(z2 - bb[4]) <= geom_tol;
      const bool top = std::abs(z0 - bb[5]) <= geom_tol && std::abs(z1 - bb[5]) <= geom_tol &&
                       std::abs(z2 - bb[5]) <= geom_tol;
      f.tag = bottom ? FacetTag::gamma_d_bottom : top ? FacetTag::gamma_d_top : FacetTag::gamma_n;
      mesh.boundary_facets.push_back(f);
    } else if (a.count == 2) {
      const Region r0 = mesh.tets[a.tet[0]].region;
      const Region r1 = mesh.tets[a.tet[1]].region;
      if (r0 == r1) continue;
      f.tag = interface_tag_for(r0, r1);
      mesh.interface_facets.push_back(f);
    }
  }
}

} // namespace detail

/// Structured tetrahedral mesh of a box; region chosen per tet centroid.
/// Each grid cell is split into six tets sharing the cell diagonal, which
/// makes the mesh conforming across cells.
inline LabeledMesh generate_structured_mesh(const std::array<double, 6>& box, int nx, int ny,
                                            int nz,
                                            const std::function<Region(const Vec3&)>& region_of) {
  if (nx < 1 || ny < 1 || nz < 1)
    throw std::invalid_argument("generate_structured_mesh: need at least one cell per axis");
  if (!(box[0] < box[1] && box[2] < box[3] && box[4] < box[5]))
    throw std::invalid_argument("generate_structured_mesh: box extents must be ordered");

  LabeledMesh mesh;
  const int px = nx + 1, py = ny + 1, pz = nz + 1;
  mesh.nodes.reserve(static_cast<size_t>(px) * py * pz);
  auto coord = [](double lo, double hi, int i, int n) {
    return (i == n) ? hi : lo + (hi - lo) * static_cast<double>(i) / n;
  };
  for (int k = 0; k < pz; ++k)
    for (int j = 0; j < py; ++j)
      for (int i = 0; i < px; ++i)
        mesh.nodes.emplace_back(coord(box[0], box[1], i, nx), coord(box[2], box[3], j, ny),
                                coord(box[4], box[5], k, nz));

  auto id = [&](int i, int j, int k) { return i + px * (j + py * k); };

  // Six tets around the (c0, c7) diagonal of each cell.
  static const int split[6][4] = {{0, 1, 3, 7}, {0, 3, 2, 7}, {0, 2, 6, 7},
                                  {0, 6, 4, 7}, {0, 4, 5, 7}, {0, 5, 1, 7}};
  mesh.tets.reserve(static_cast<size_t>(nx) * ny * nz * 6);
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const int c[8] = {id(i, j, k),         id(i + 1, j, k),         id(i, j + 1, k),
                          id(i + 1, j + 1, k), id(i, j, k + 1),         id(i + 1, j, k + 1),
                          id(i, j + 1, k + 1), id(i + 1, j + 1, k + 1)};
        for (const auto& s : split) {
          Tet t{};
          for (int m = 0; m < 4; ++m) t.v[m] = c[s[m]];
          t.region = region_of(mesh.tet_centroid(t));
          mesh.tets.push_back(t);
        }
      }

  detail::append_derived_facets(mesh);
  validate_and_canonicalize(mesh);
  return mesh;
}

/// All-solvent box mesh with spacing near target_h.
inline LabeledMesh generate_box_mesh(const std::array<double, 6>& box, double target_h) {
  if (!(target_h > 0.0)) throw std::invalid_argument("generate_box_mesh: target_h must be positive");
  const int nx = std::max(1, static_cast<int>(std::lround((box[1] - box[0]) / target_h)));
  const int ny = std::max(1, static_cast<int>(std::lround((box[3] - box[2]) / target_h)));
  const int nz = std::max(1, static_cast<int>(std::lround((box[5] - box[4]) / target_h)));
  return generate_structured_mesh(box, nx, ny, nz, [](const Vec3&) { return Region::solvent; });
}

/// Deterministic slab-with-pore test geometry approximating an ion channel.
inline LabeledMesh generate_synthetic_channel(const SyntheticChannelParams& p) {
  const auto& b = p.box;
  if (!(p.membrane_z1 < p.membrane_z2))
    throw std::invalid_argument("generate_synthetic_channel: Z1 < Z2 required");
  if (!(p.membrane_z1 > b[4] && p.membrane_z2 < b[5]))
    throw std::invalid_argument("generate_synthetic_channel: membrane slab must be inside the box");
  if (p.pore_radius < 0.0 || p.pore_radius > p.shell_radius)
    throw std::invalid_argument("generate_synthetic_channel: need 0 <= pore radius <= shell radius");
  const double half_x = 0.5 * (b[1] - b[0]);
  const double half_y = 0.5 * (b[3] - b[2]);
  if (p.shell_radius >= std::min(half_x, half_y))
    throw std::invalid_argument("generate_synthetic_channel: pore/shell wider than the box");
  if (!(p.target_h > 0.0))
    throw std::invalid_argument("generate_synthetic_channel: target_h must be positive");

  const double cx = 0.5 * (b[0] + b[1]);
  const double cy = 0.5 * (b[2] + b[3]);

  const int nx = std::max(2, static_cast<int>(std::lround((b[1] - b[0]) / p.target_h)));
  const int ny = std::max(2, static_cast<int>(std::lround((b[3] - b[2]) / p.target_h)));
  const int nz = std::max(2, static_cast<int>(std::lround((b[5] - b[4]) / p.target_h)));

  auto region_of = [&](const Vec3& c) {
    if (c.z() <= p.membrane_z1 || c.z() >= p.membrane_z2) return Region::solvent;
    const double r = std::hypot(c.x() - cx, c.y() - cy);
    if (r < p.pore_radius) return Region::solvent;
    if (r < p.shell_radius) return Region::protein;
    return Region::membrane;
  };
  return generate_structured_mesh(b, nx, ny, nz, region_of);
}

} // namespace nusmpbic
