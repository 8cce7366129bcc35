#include "nusmpbic/nusmpbic.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

namespace fs = std::filesystem;
using namespace nusmpbic;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_input_error = 1;
constexpr int exit_no_convergence = 2;

// Atoms belong in the protein region; stray positions are suspicious input
// but not fatal.
void warn_atoms_outside_protein(const LabeledMesh& mesh, const AtomSet& atoms) {
  if (atoms.empty()) return;
  bool have_protein = false;
  std::array<double, 6> bb{1e300, -1e300, 1e300, -1e300, 1e300, -1e300};
  for (const auto& t : mesh.tets) {
    if (t.region != Region::protein) continue;
    have_protein = true;
    for (int v : t.v) {
      const auto& p = mesh.nodes[v];
      bb[0] = std::min(bb[0], p.x());
      bb[1] = std::max(bb[1], p.x());
      bb[2] = std::min(bb[2], p.y());
      bb[3] = std::max(bb[3], p.y());
      bb[4] = std::min(bb[4], p.z());
      bb[5] = std::max(bb[5], p.z());
    }
  }
  int outside = 0;
  for (const auto& p : atoms.positions) {
    const bool in = have_protein && p.x() >= bb[0] && p.x() <= bb[1] && p.y() >= bb[2] &&
                    p.y() <= bb[3] && p.z() >= bb[4] && p.z() <= bb[5];
    if (!in) ++outside;
  }
  if (outside > 0)
    std::cerr << "warning: " << outside << " of " << atoms.count()
              << " atoms lie outside the protein region's bounding volume\n";
}

void check_mesh_matches_box(const LabeledMesh& mesh, const ProblemConfig& config) {
  const auto bb = mesh.bounding_box();
  for (int i = 0; i < 6; ++i) {
    const double span = config.box[(i / 2) * 2 + 1] - config.box[(i / 2) * 2];
    if (std::abs(bb[i] - config.box[i]) > 1e-6 * std::max(1.0, std::abs(span)))
      throw std::invalid_argument(
          "mesh bounding box does not match the configured box extents (axis " +
          std::to_string(i / 2) + ")");
  }
}

void write_summary(const fs::path& path, const Model3Result& result,
                   const EnergyBreakdown* energy, const SolventSpec& solvent) {
  std::ofstream out(path);
  char buf[128];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  out << "termination: " << to_string(result.report.reason) << "\n";
  if (!result.report.message.empty()) out << "detail: " << result.report.message << "\n";
  out << "outer_iterations: " << result.report.iterations.size() << "\n";
  out << "wall_seconds: " << num(result.report.wall_seconds) << "\n";
  if (!result.report.iterations.empty()) {
    const auto& last = result.report.iterations.back();
    out << "final_err_phi: " << num(last.err_phi) << "\n";
    out << "final_err_c: " << num(last.err_c) << "\n";
    out << "final_residual: " << num(last.residual) << "\n";
  }
  out << "species:";
  for (const auto& sp : solvent.species) out << " " << sp.name;
  out << "\n";
  if (energy) {
    out << "energy_kT_electrostatic: " << num(energy->electrostatic) << "\n";
    out << "energy_kT_ideal_gas: " << num(energy->ideal_gas) << "\n";
    out << "energy_kT_excess: " << num(energy->excess) << "\n";
    out << "energy_kT_total: " << num(energy->total()) << "\n";
  }
}

int run_solve(const std::string& config_path, const std::string& mesh_path,
              const std::string& pqr_path, const std::string& out_dir, double* omega,
              double* tol, double* sigma, bool uniform_size, const std::string& linear_solver) {
  CaseConfig cfg;
  LabeledMesh mesh;
  AtomSet atoms;
  try {
    cfg = parse_config(config_path);
    if (omega) cfg.problem.omega = *omega;
    if (tol) cfg.problem.tol = *tol;
    if (sigma) cfg.problem.sigma = *sigma;
    if (uniform_size) cfg.solvent = cfg.solvent.uniform_size();
    cfg.problem.validate();
    cfg.solvent.validate();

    mesh = load_mesh(mesh_path);
    check_mesh_matches_box(mesh, cfg.problem);
    if (!pqr_path.empty()) atoms = parse_pqr(pqr_path);
    warn_atoms_outside_protein(mesh, atoms);
    fs::create_directories(out_dir);
  } catch (const std::exception& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return exit_input_error;
  }

  try {
    auto [submesh, transfer] = extract_solvent_submesh(mesh);
    const auto constants = compute_constants(cfg.problem.temperature);

    Model3Options options;
    options.linear.method =
        (linear_solver == "direct") ? LinearMethod::direct : LinearMethod::gmres_ilu;

    std::cout << "solving: " << mesh.node_count() << " box nodes, " << submesh.node_count()
              << " solvent nodes, " << cfg.solvent.count() << " species, omega "
              << cfg.problem.omega << "\n";
    auto result =
        run_model3(mesh, submesh, transfer, atoms, cfg.solvent, constants, cfg.problem, options);

    const Eigen::VectorXd u = result.G + result.psi + result.state.phi_tilde;
    const auto curves =
        block_average_curves(result.state, u, mesh, transfer, cfg.solvent, cfg.problem);
    EnergyBreakdown energy{};
    const bool have_energy = result.converged();
    if (have_energy)
      energy = evaluate_energy(result.state, u, mesh, transfer, cfg.solvent, constants.gamma);

    const fs::path out(out_dir);
    export_vtk(result.state, u, result.G, result.psi, mesh, transfer, cfg.solvent,
               (out / "fields.vtk").string());
    write_iteration_csv(result.report, (out / "iterations.csv").string());
    write_curves_csv(curves, cfg.solvent, (out / "curves.csv").string());
    write_summary(out / "summary.txt", result, have_energy ? &energy : nullptr, cfg.solvent);

    std::cout << "termination: " << to_string(result.report.reason) << " after "
              << result.report.iterations.size() << " iterations ("
              << result.report.wall_seconds << " s)\n";
    if (!result.report.message.empty()) std::cout << result.report.message << "\n";
    if (!result.converged()) return exit_no_convergence;
    return exit_ok;
  } catch (const SingularityError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return exit_input_error;
  } catch (const SolverFailure& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return exit_no_convergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_no_convergence;
  }
}

int run_make_mesh(const SyntheticChannelParams& params, bool box_only,
                  const std::string& out_path) {
  try {
    const LabeledMesh mesh =
        box_only ? generate_box_mesh(params.box, params.target_h) : generate_synthetic_channel(params);
    save_mesh(mesh, out_path);
    std::cout << "wrote " << out_path << ": " << mesh.nodes.size() << " nodes, "
              << mesh.tets.size() << " tets, " << mesh.interface_facets.size()
              << " interface facets\n";
    return exit_ok;
  } catch (const std::exception& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return exit_input_error;
  }
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finite element solver for the size-modified Poisson-Boltzmann ion channel model"};
  app.require_subcommand(1);

  // solve
  auto* solve = app.add_subcommand("solve", "Run the full solver pipeline");
  std::string config_path, mesh_path, pqr_path, out_dir = "results";
  std::string linear_solver = "gmres-ilu";
  double omega = 0, tol = 0, sigma = 0;
  bool uniform_size = false;
  solve->add_option("--config", config_path, "case configuration file")->required();
  solve->add_option("--mesh", mesh_path, "labeled mesh file")->required();
  solve->add_option("--pqr", pqr_path, "PQR atom file (optional)");
  solve->add_option("--out", out_dir, "output directory")->required();
  auto* omega_opt = solve->add_option("--omega", omega, "damping parameter override");
  auto* tol_opt = solve->add_option("--tol", tol, "outer tolerance override");
  auto* sigma_opt = solve->add_option("--sigma", sigma, "membrane surface charge override");
  solve->add_flag("--uniform-size", uniform_size, "force all ion volumes to the average");
  solve->add_option("--linear-solver", linear_solver, "gmres-ilu or direct")
      ->check(CLI::IsMember({"gmres-ilu", "direct"}));

  // make-mesh
  auto* make_mesh = app.add_subcommand("make-mesh", "Generate a synthetic channel or box mesh");
  SyntheticChannelParams params;
  std::vector<double> box_in, membrane_in;
  bool box_only = false;
  std::string mesh_out;
  make_mesh->add_option("--box", box_in, "x1 x2 y1 y2 z1 z2")->expected(6);
  make_mesh->add_option("--membrane-z", membrane_in, "Z1 Z2")->expected(2);
  make_mesh->add_option("--pore-radius", params.pore_radius, "pore radius, A");
  make_mesh->add_option("--shell-radius", params.shell_radius, "protein shell outer radius, A");
  make_mesh->add_option("--spacing", params.target_h, "target mesh spacing, A");
  make_mesh->add_flag("--box-only", box_only, "all-solvent box, no membrane");
  make_mesh->add_option("--out", mesh_out, "output mesh path")->required();

  CLI11_PARSE(app, argc, argv);

  if (solve->parsed()) {
    return run_solve(config_path, mesh_path, pqr_path, out_dir,
                     omega_opt->count() ? &omega : nullptr, tol_opt->count() ? &tol : nullptr,
                     sigma_opt->count() ? &sigma : nullptr, uniform_size, linear_solver);
  }
  if (box_in.size() == 6) for (int i = 0; i < 6; ++i) params.box[i] = box_in[i];
  if (membrane_in.size() == 2) {
    params.membrane_z1 = membrane_in[0];
    params.membrane_z2 = membrane_in[1];
  }
  return run_make_mesh(params, box_only, mesh_out);
}
