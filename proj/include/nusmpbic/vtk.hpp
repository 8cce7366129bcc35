#pragma once

#include "nusmpbic/mesh.hpp"
#include "nusmpbic/model3.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nusmpbic {

/// Legacy VTK ASCII unstructured grid with the potential parts, each
/// concentration (zero outside the solvent region) and a solvent node mask.
inline void export_vtk(const NodalState& state, const Eigen::VectorXd& u,
                       const Eigen::VectorXd& G, const Eigen::VectorXd& psi,
                       const LabeledMesh& mesh, const TransferOps& transfer,
                       const SolventSpec& solvent, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write VTK file: " + path);

  char buf[96];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };

  const size_t np = mesh.nodes.size();
  const size_t nc = mesh.tets.size();
  out << "# vtk DataFile Version 2.0\n";
  out << "nusmpbic fields\n";
  out << "ASCII\n";
  out << "DATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << np << " double\n";
  for (const auto& p : mesh.nodes)
    out << num(p.x()) << " " << num(p.y()) << " " << num(p.z()) << "\n";

  out << "CELLS " << nc << " " << nc * 5 << "\n";
  for (const auto& t : mesh.tets)
    out << "4 " << t.v[0] << " " << t.v[1] << " " << t.v[2] << " " << t.v[3] << "\n";
  out << "CELL_TYPES " << nc << "\n";
  for (size_t i = 0; i < nc; ++i) out << "10\n"; // VTK_TETRA

  out << "CELL_DATA " << nc << "\n";
  out << "SCALARS region int 1\nLOOKUP_TABLE default\n";
  for (const auto& t : mesh.tets) out << static_cast<int>(t.region) << "\n";

  out << "POINT_DATA " << np << "\n";
  auto scalar = [&](const std::string& name, const Eigen::VectorXd& v) {
    out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
    for (Eigen::Index i = 0; i < v.size(); ++i) out << num(v[i]) << "\n";
  };
  scalar("u", u);
  scalar("G", G);
  scalar("Psi", psi);
  scalar("PhiTilde", state.phi_tilde);

  Eigen::VectorXd mask = Eigen::VectorXd::Zero(np);
  for (int parent : transfer.parent_of) mask[parent] = 1.0;
  for (int i = 0; i < solvent.count(); ++i)
    scalar("c_" + solvent.species[i].name,
           transfer.prolong_to_box(state.c.row(i).transpose()));
  scalar("solvent_mask", mask);
}

} // namespace nusmpbic
