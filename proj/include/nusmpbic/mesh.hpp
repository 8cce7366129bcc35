#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nusmpbic {

using Vec3 = Eigen::Vector3d;

enum class Region : int { protein = 0, membrane = 1, solvent = 2 };

// Facet tags, file codes in parentheses.
enum class FacetTag : int {
  gamma_d_bottom = 10,
  gamma_d_top = 11,
  gamma_n = 12,
  gamma_p = 20,  // protein-solvent, normal out of protein
  gamma_m = 21,  // membrane-solvent, normal out of membrane
  gamma_pm = 22, // protein-membrane, normal out of protein
};

inline bool is_boundary_tag(FacetTag t) { return static_cast<int>(t) < 20; }

struct Tet {
  std::array<int, 4> v;
  Region region;
};

struct Facet {
  std::array<int, 3> v; // winding defines the stored normal
  FacetTag tag;
  Region adjacent_region; // boundary: the single adjacent region; interface: the "outside" region
};

class MeshError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline double tet_signed_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  return (b - a).cross(c - a).dot(d - a) / 6.0;
}

/// Region-labeled tetrahedral mesh of the simulation box.
struct LabeledMesh {
  std::vector<Vec3> nodes;
  std::vector<Tet> tets;
  std::vector<Facet> boundary_facets;  // tags 10, 11, 12
  std::vector<Facet> interface_facets; // tags 20, 21, 22

  int node_count() const { return static_cast<int>(nodes.size()); }

  double tet_volume(const Tet& t) const {
    return tet_signed_volume(nodes[t.v[0]], nodes[t.v[1]], nodes[t.v[2]], nodes[t.v[3]]);
  }

  Vec3 tet_centroid(const Tet& t) const {
    return 0.25 * (nodes[t.v[0]] + nodes[t.v[1]] + nodes[t.v[2]] + nodes[t.v[3]]);
  }

  Vec3 facet_centroid(const Facet& f) const {
    return (nodes[f.v[0]] + nodes[f.v[1]] + nodes[f.v[2]]) / 3.0;
  }

  /// Non-unit normal from the winding; |result| = 2 * facet area.
  Vec3 facet_normal_scaled(const Facet& f) const {
    return (nodes[f.v[1]] - nodes[f.v[0]]).cross(nodes[f.v[2]] - nodes[f.v[0]]);
  }

  double facet_area(const Facet& f) const { return 0.5 * facet_normal_scaled(f).norm(); }

  Vec3 facet_unit_normal(const Facet& f) const { return facet_normal_scaled(f).normalized(); }

  std::array<double, 6> bounding_box() const {
    std::array<double, 6> bb{nodes[0].x(), nodes[0].x(), nodes[0].y(),
                             nodes[0].y(), nodes[0].z(), nodes[0].z()};
    for (const auto& p : nodes) {
      bb[0] = std::min(bb[0], p.x());
      bb[1] = std::max(bb[1], p.x());
      bb[2] = std::min(bb[2], p.y());
      bb[3] = std::max(bb[3], p.y());
      bb[4] = std::min(bb[4], p.z());
      bb[5] = std::max(bb[5], p.z());
    }
    return bb;
  }

  double volume_of(Region r) const {
    double v = 0.0;
    for (const auto& t : tets)
      if (t.region == r) v += tet_volume(t);
    return v;
  }
};

namespace detail {

struct FacetKey {
  std::array<int, 3> sorted;
  bool operator<(const FacetKey& o) const { return sorted < o.sorted; }
};

inline FacetKey facet_key(int a, int b, int c) {
  std::array<int, 3> s{a, b, c};
  std::sort(s.begin(), s.end());
  return FacetKey{s};
}

struct FacetAdjacency {
  int tet[2] = {-1, -1};
  int count = 0;
};

// Tet faces with outward winding relative to a positively oriented tet.
inline std::array<std::array<int, 3>, 4> tet_faces(const Tet& t) {
  return {{{t.v[1], t.v[2], t.v[3]},
           {t.v[0], t.v[3], t.v[2]},
           {t.v[0], t.v[1], t.v[3]},
           {t.v[0], t.v[2], t.v[1]}}};
}

inline std::map<FacetKey, FacetAdjacency> build_facet_adjacency(const LabeledMesh& mesh) {
  std::map<FacetKey, FacetAdjacency> adj;
  for (int ti = 0; ti < static_cast<int>(mesh.tets.size()); ++ti) {
    for (const auto& f : tet_faces(mesh.tets[ti])) {
      auto& a = adj[facet_key(f[0], f[1], f[2])];
      if (a.count < 2) a.tet[a.count] = ti;
      ++a.count;
    }
  }
  return adj;
}

inline FacetTag interface_tag_for(Region a, Region b) {
  const bool has_p = (a == Region::protein) || (b == Region::protein);
  const bool has_m = (a == Region::membrane) || (b == Region::membrane);
  const bool has_s = (a == Region::solvent) || (b == Region::solvent);
  if (has_p && has_s) return FacetTag::gamma_p;
  if (has_m && has_s) return FacetTag::gamma_m;
  if (has_p && has_m) return FacetTag::gamma_pm;
  throw MeshError("interface between identical regions");
}

// Region the stored normal of an interface facet must point out of.
inline Region interface_inside_region(FacetTag tag) {
  switch (tag) {
    case FacetTag::gamma_p:
    case FacetTag::gamma_pm: return Region::protein;
    case FacetTag::gamma_m: return Region::membrane;
    default: throw MeshError("not an interface tag");
  }
}

inline Region interface_outside_region(FacetTag tag) {
  switch (tag) {
    case FacetTag::gamma_p:
    case FacetTag::gamma_m: return Region::solvent;
    case FacetTag::gamma_pm: return Region::membrane;
    default: throw MeshError("not an interface tag");
  }
}

} // namespace detail

/// Validates labels, facet conformity and orientation; reorders tets to
/// positive volume and rewinds facets to the canonical normal convention
/// (interfaces: out of protein for Gamma_p/Gamma_pm, out of membrane for
/// Gamma_m; boundary: out of the box).
inline void validate_and_canonicalize(LabeledMesh& mesh) {
  const int nn = mesh.node_count();
  if (nn < 4) throw MeshError("mesh has fewer than 4 nodes");
  if (mesh.tets.empty()) throw MeshError("mesh has no tets");

  for (auto& t : mesh.tets) {
    for (int k = 0; k < 4; ++k)
      if (t.v[k] < 0 || t.v[k] >= nn) throw MeshError("tet vertex index out of range");
    double vol = mesh.tet_volume(t);
    if (vol < 0.0) {
      std::swap(t.v[2], t.v[3]);
      vol = -vol;
    }
    if (vol < 1e-14) throw MeshError("degenerate tet (volume below 1e-14 A^3)");
  }

  auto adj = detail::build_facet_adjacency(mesh);
  for (const auto& [key, a] : adj) {
    (void)key;
    if (a.count > 2) throw MeshError("facet shared by more than two tets; mesh is not conforming");
  }

  // Expected interface facets from region adjacency.
  std::map<detail::FacetKey, std::pair<int, int>> expected_interfaces; // key -> (tetA, tetB)
  for (const auto& [key, a] : adj) {
    if (a.count == 2 &&
        mesh.tets[a.tet[0]].region != mesh.tets[a.tet[1]].region)
      expected_interfaces[key] = {a.tet[0], a.tet[1]};
  }

  if (mesh.interface_facets.size() != expected_interfaces.size())
    throw MeshError("interface facet count mismatch: file lists " +
                    std::to_string(mesh.interface_facets.size()) + ", region adjacency needs " +
                    std::to_string(expected_interfaces.size()));

  for (auto& f : mesh.interface_facets) {
    auto key = detail::facet_key(f.v[0], f.v[1], f.v[2]);
    auto it = expected_interfaces.find(key);
    if (it == expected_interfaces.end())
      throw MeshError("interface facet does not separate two regions");
    const Tet& t0 = mesh.tets[it->second.first];
    const Tet& t1 = mesh.tets[it->second.second];
    if (detail::interface_tag_for(t0.region, t1.region) != f.tag)
      throw MeshError("interface facet tag does not match adjacent region pair");
    const Region inside = detail::interface_inside_region(f.tag);
    const Tet& tin = (t0.region == inside) ? t0 : t1;
    const Tet& tout = (t0.region == inside) ? t1 : t0;
    const Vec3 dir = mesh.tet_centroid(tout) - mesh.tet_centroid(tin);
    if (mesh.facet_normal_scaled(f).dot(dir) < 0.0) std::swap(f.v[1], f.v[2]);
    f.adjacent_region = tout.region;
  }

  // Boundary facets must be exactly the single-adjacency facets.
  std::map<detail::FacetKey, int> expected_boundary; // key -> tet
  for (const auto& [key, a] : adj)
    if (a.count == 1) expected_boundary[key] = a.tet[0];

  if (mesh.boundary_facets.size() != expected_boundary.size())
    throw MeshError("boundary facet count mismatch: file lists " +
                    std::to_string(mesh.boundary_facets.size()) + ", mesh surface has " +
                    std::to_string(expected_boundary.size()));

  const auto bb = mesh.bounding_box();
  const double geom_tol =
      1e-9 * std::max({bb[1] - bb[0], bb[3] - bb[2], bb[5] - bb[4], 1.0});
  for (auto& f : mesh.boundary_facets) {
    auto key = detail::facet_key(f.v[0], f.v[1], f.v[2]);
    auto it = expected_boundary.find(key);
    if (it == expected_boundary.end())
      throw MeshError("boundary facet is not on the mesh surface");
    const Tet& t = mesh.tets[it->second];
    // Orient out of the box: away from the opposite vertex of the adjacent tet.
    int opposite = -1;
    for (int k = 0; k < 4; ++k) {
      const int v = t.v[k];
      if (v != f.v[0] && v != f.v[1] && v != f.v[2]) opposite = v;
    }
    const Vec3 dir = mesh.facet_centroid(f) - mesh.nodes[opposite];
    if (mesh.facet_normal_scaled(f).dot(dir) < 0.0) std::swap(f.v[1], f.v[2]);
    f.adjacent_region = t.region;

    const bool on_bottom = std::abs(mesh.nodes[f.v[0]].z() - bb[4]) <= geom_tol &&
                           std::abs(mesh.nodes[f.v[1]].z() - bb[4]) <= geom_tol &&
                           std::abs(mesh.nodes[f.v[2]].z() - bb[4]) <= geom_tol;
    const bool on_top = std::abs(mesh.nodes[f.v[0]].z() - bb[5]) <= geom_tol &&
                        std::abs(mesh.nodes[f.v[1]].z() - bb[5]) <= geom_tol &&
                        std::abs(mesh.nodes[f.v[2]].z() - bb[5]) <= geom_tol;
    const FacetTag want = on_bottom  ? FacetTag::gamma_d_bottom
                          : on_top   ? FacetTag::gamma_d_top
                                     : FacetTag::gamma_n;
    if (f.tag != want)
      throw MeshError("boundary facet tag inconsistent with its position on the box surface");
  }
}

/// Nodes of the Dirichlet boundary (top and bottom faces), ascending.
inline std::vector<int> dirichlet_nodes(const LabeledMesh& mesh) {
  std::vector<char> mark(mesh.nodes.size(), 0);
  for (const auto& f : mesh.boundary_facets)
    if (f.tag == FacetTag::gamma_d_bottom || f.tag == FacetTag::gamma_d_top)
      for (int v : f.v) mark[v] = 1;
  std::vector<int> out;
  for (int i = 0; i < mesh.node_count(); ++i)
    if (mark[i]) out.push_back(i);
  return out;
}

// ---------------------------------------------------------------------------
// Solvent submesh and transfer operators
// ---------------------------------------------------------------------------

struct BasicTetMesh {
  std::vector<Vec3> nodes;
  std::vector<std::array<int, 4>> tets;

  int node_count() const { return static_cast<int>(nodes.size()); }

  double tet_volume(int i) const {
    const auto& t = tets[i];
    return tet_signed_volume(nodes[t[0]], nodes[t[1]], nodes[t[2]], nodes[t[3]]);
  }
};

/// Solvent-region mesh plus the solvent-node -> box-node map.
struct SolventSubmesh {
  BasicTetMesh submesh;
  std::vector<int> parent_of; // ascending, injective

  int node_count() const { return submesh.node_count(); }
};

/// Restriction (box -> solvent) and zero-extension prolongation (solvent -> box).
struct TransferOps {
  std::vector<int> parent_of;
  int box_nodes = 0;

  Eigen::VectorXd restrict_to_solvent(const Eigen::VectorXd& box_vec) const {
    Eigen::VectorXd out(parent_of.size());
    for (size_t i = 0; i < parent_of.size(); ++i) out[i] = box_vec[parent_of[i]];
    return out;
  }

  Eigen::VectorXd prolong_to_box(const Eigen::VectorXd& solvent_vec) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(box_nodes);
    for (size_t i = 0; i < parent_of.size(); ++i) out[parent_of[i]] = solvent_vec[i];
    return out;
  }
};

inline std::pair<SolventSubmesh, TransferOps> extract_solvent_submesh(const LabeledMesh& mesh) {
  std::vector<char> touched(mesh.nodes.size(), 0);
  int solvent_tets = 0;
  for (const auto& t : mesh.tets)
    if (t.region == Region::solvent) {
      ++solvent_tets;
      for (int v : t.v) touched[v] = 1;
    }
  if (solvent_tets == 0)
    throw std::invalid_argument("extract_solvent_submesh: mesh has no solvent tets");

  SolventSubmesh sub;
  std::vector<int> local_of(mesh.nodes.size(), -1);
  for (int i = 0; i < mesh.node_count(); ++i) {
    if (touched[i]) {
      local_of[i] = static_cast<int>(sub.parent_of.size());
      sub.parent_of.push_back(i);
      sub.submesh.nodes.push_back(mesh.nodes[i]); // bitwise copy of coordinates
    }
  }
  for (const auto& t : mesh.tets)
    if (t.region == Region::solvent)
      sub.submesh.tets.push_back(
          {local_of[t.v[0]], local_of[t.v[1]], local_of[t.v[2]], local_of[t.v[3]]});

  TransferOps ops;
  ops.parent_of = sub.parent_of;
  ops.box_nodes = mesh.node_count();
  return {std::move(sub), std::move(ops)};
}

// ---------------------------------------------------------------------------
// Mesh file I/O: "nusmpbic-mesh v1", ASCII, 0-based indices
// ---------------------------------------------------------------------------

inline LabeledMesh load_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MeshError("cannot open mesh file: " + path);

  std::string line;
  auto next_line = [&](const char* what) {
    while (std::getline(in, line)) {
      if (!line.empty() && line[0] != '#') return;
    }
    throw MeshError(std::string("unexpected end of mesh file while reading ") + what);
  };

  next_line("header");
  if (line != "nusmpbic-mesh v1")
    throw MeshError("bad mesh header (expected 'nusmpbic-mesh v1'): " + line);

  LabeledMesh mesh;
  next_line("node count");
  {
    std::istringstream ss(line);
    std::string kw;
    long n = -1;
    ss >> kw >> n;
    if (kw != "nodes" || n < 0) throw MeshError("expected 'nodes <count>'");
    mesh.nodes.reserve(n);
    for (long i = 0; i < n; ++i) {
      next_line("node coordinates");
      std::istringstream ns(line);
      Vec3 p;
      if (!(ns >> p.x() >> p.y() >> p.z()))
        throw MeshError("bad node line: " + line);
      mesh.nodes.push_back(p);
    }
  }

  next_line("tet count");
  {
    std::istringstream ss(line);
    std::string kw;
    long n = -1;
    ss >> kw >> n;
    if (kw != "tets" || n < 0) throw MeshError("expected 'tets <count>'");
    mesh.tets.reserve(n);
    for (long i = 0; i < n; ++i) {
      next_line("tet");
      std::istringstream ts(line);
      Tet t{};
      int region = -1;
      if (!(ts >> t.v[0] >> t.v[1] >> t.v[2] >> t.v[3] >> region))
        throw MeshError("bad tet line: " + line);
      if (region < 0 || region > 2)
        throw MeshError("unknown region id " + std::to_string(region) + " in tet line: " + line);
      t.region = static_cast<Region>(region);
      mesh.tets.push_back(t);
    }
  }

  next_line("facet count");
  {
    std::istringstream ss(line);
    std::string kw;
    long n = -1;
    ss >> kw >> n;
    if (kw != "facets" || n < 0) throw MeshError("expected 'facets <count>'");
    for (long i = 0; i < n; ++i) {
      next_line("facet");
      std::istringstream fs(line);
      Facet f{};
      int tag = -1;
      if (!(fs >> f.v[0] >> f.v[1] >> f.v[2] >> tag))
        throw MeshError("bad facet line: " + line);
      switch (tag) {
        case 10: case 11: case 12:
          f.tag = static_cast<FacetTag>(tag);
          mesh.boundary_facets.push_back(f);
          break;
        case 20: case 21: case 22:
          f.tag = static_cast<FacetTag>(tag);
          mesh.interface_facets.push_back(f);
          break;
        default:
          throw MeshError("unknown facet tag " + std::to_string(tag) + " in line: " + line);
      }
    }
  }

  validate_and_canonicalize(mesh);
  return mesh;
}

inline void save_mesh(const LabeledMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MeshError("cannot write mesh file: " + path);
  out.precision(17);
  out << "nusmpbic-mesh v1\n";
  out << "nodes " << mesh.nodes.size() << "\n";
  for (const auto& p : mesh.nodes) out << p.x() << " " << p.y() << " " << p.z() << "\n";
  out << "tets " << mesh.tets.size() << "\n";
  for (const auto& t : mesh.tets)
    out << t.v[0] << " " << t.v[1] << " " << t.v[2] << " " << t.v[3] << " "
        << static_cast<int>(t.region) << "\n";
  out << "facets " << (mesh.boundary_facets.size() + mesh.interface_facets.size()) << "\n";
  for (const auto& f : mesh.boundary_facets)
    out << f.v[0] << " " << f.v[1] << " " << f.v[2] << " " << static_cast<int>(f.tag) << "\n";
  for (const auto& f : mesh.interface_facets)
    out << f.v[0] << " " << f.v[1] << " " << f.v[2] << " " << static_cast<int>(f.tag) << "\n";
}

} // namespace nusmpbic
