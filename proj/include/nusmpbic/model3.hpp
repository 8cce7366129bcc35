#pragma once

#include "nusmpbic/assembly.hpp"
#include "nusmpbic/linear_solver.hpp"
#include "nusmpbic/mesh.hpp"
#include "nusmpbic/model2.hpp"
#include "nusmpbic/physics.hpp"
#include "nusmpbic/singular_field.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace nusmpbic {

/// Concentrations on solvent nodes (n x N_h, mol/L) and the ionic potential
/// component on box nodes.
struct NodalState {
  Eigen::MatrixXd c;
  Eigen::VectorXd phi_tilde;

  int species_count() const { return static_cast<int>(c.rows()); }
  int solvent_nodes() const { return static_cast<int>(c.cols()); }
};

enum class TerminationReason { converged, max_iterations, diverged, block1_failure };

inline const char* to_string(TerminationReason r) {
  switch (r) {
    case TerminationReason::converged: return "converged";
    case TerminationReason::max_iterations: return "max_iterations";
    case TerminationReason::diverged: return "diverged";
    case TerminationReason::block1_failure: return "block1_failure";
  }
  return "unknown";
}

struct IterationRecord {
  int k = 0;
  double err_phi = 0.0;   // |phi^{k+1} - phi^k| in the Omega L2 norm
  double err_c = 0.0;     // max_i |c_i^{k+1} - c_i^k| in the D_s L2 norm
  double residual = 0.0;  // R(c^{k+1}, phi^{k+1})
  int newton_max_inner = 0;
  double seconds = 0.0;
};

struct SolverReport {
  std::vector<IterationRecord> iterations;
  TerminationReason reason = TerminationReason::max_iterations;
  std::string message;
  double wall_seconds = 0.0;
};

class Block1Failure : public std::runtime_error {
public:
  Block1Failure(int node_index, double last_residual, const std::string& why)
      : std::runtime_error("Block-1 Newton failed at solvent node " + std::to_string(node_index) +
                           ": " + why + " (last residual " + std::to_string(last_residual) + ")"),
        node(node_index), residual(last_residual) {}
  int node;
  double residual;
};

// ---------------------------------------------------------------------------
// Nodal nonlinear system
// ---------------------------------------------------------------------------

/// Exponent input for species i at potential u, capped at the overflow bound.
inline double guarded_exponent(int charge_number, double u, double overflow_bound) {
  return std::min(-static_cast<double>(charge_number) * u, overflow_bound);
}

/// w_i = c_i^b exp(min(-Z_i u, M)) for all species.
inline Eigen::VectorXd boltzmann_weights(const SolventSpec& solvent, double u,
                                         double overflow_bound) {
  const int n = solvent.count();
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) {
    const auto& sp = solvent.species[i];
    w[i] = sp.bulk_concentration * std::exp(guarded_exponent(sp.charge_number, u, overflow_bound));
  }
  return w;
}

inline double water_volume_fraction(const Eigen::VectorXd& xi, const SolventSpec& solvent,
                                    double gamma) {
  double s = 0.0;
  for (int j = 0; j < solvent.count(); ++j) s += solvent.species[j].ion_volume * xi[j];
  return 1.0 - gamma * s;
}

/// F_i(xi) = xi_i - w_i (1 - gamma sum v_j xi_j)^{v_i/v0}.
inline void nodal_system_eval(const Eigen::VectorXd& xi, const Eigen::VectorXd& w,
                              const SolventSpec& solvent, double gamma, Eigen::VectorXd& out) {
  const double S = water_volume_fraction(xi, solvent, gamma);
  for (int i = 0; i < solvent.count(); ++i)
    out[i] = xi[i] - w[i] * std::pow(S, solvent.species[i].ion_volume / solvent.v0);
}

/// Jacobian of the nodal system: identity plus a row-scaled outer product.
inline Eigen::MatrixXd jacobian_entries(const Eigen::VectorXd& xi, const Eigen::VectorXd& w,
                                        const SolventSpec& solvent, double gamma) {
  const int n = solvent.count();
  const double S = water_volume_fraction(xi, solvent, gamma);
  if (!(S > 0.0))
    throw std::invalid_argument("jacobian_entries: water volume fraction must stay positive");
  Eigen::MatrixXd J = Eigen::MatrixXd::Identity(n, n);
  for (int i = 0; i < n; ++i) {
    const double vi = solvent.species[i].ion_volume;
    const double row = gamma * (vi / solvent.v0) * w[i] * std::pow(S, vi / solvent.v0 - 1.0);
    for (int j = 0; j < n; ++j) J(i, j) += row * solvent.species[j].ion_volume;
  }
  return J;
}

namespace detail {

// In-place Gaussian elimination with partial pivoting on a small dense system.
inline bool gauss_solve(Eigen::MatrixXd& A, Eigen::VectorXd& b) {
  const int n = static_cast<int>(A.rows());
  for (int k = 0; k < n; ++k) {
    int piv = k;
    for (int i = k + 1; i < n; ++i)
      if (std::abs(A(i, k)) > std::abs(A(piv, k))) piv = i;
    if (std::abs(A(piv, k)) < 1e-300) return false;
    if (piv != k) {
      A.row(piv).swap(A.row(k));
      std::swap(b[piv], b[k]);
    }
    for (int i = k + 1; i < n; ++i) {
      const double f = A(i, k) / A(k, k);
      if (f == 0.0) continue;
      A.row(i).tail(n - k) -= f * A.row(k).tail(n - k);
      b[i] -= f * b[k];
    }
  }
  for (int i = n - 1; i >= 0; --i) {
    double s = b[i];
    for (int j = i + 1; j < n; ++j) s -= A(i, j) * b[j];
    b[i] = s / A(i, i);
  }
  return true;
}

} // namespace detail

struct NewtonResult {
  Eigen::VectorXd xi;
  int iterations = 0;
};

class NewtonNodeFailure : public std::runtime_error {
public:
  NewtonNodeFailure(const std::string& why, double residual)
      : std::runtime_error(why), last_residual(residual) {}
  double last_residual;
};

inline constexpr int default_newton_max_inner = 50;
inline constexpr int newton_max_halvings = 30;

/// Newton on the n x n nodal system at fixed Boltzmann weights w. Steps that
/// would leave the region 1 - gamma sum v_j xi_j > 0 are halved.
inline NewtonResult newton_node_solve(const Eigen::VectorXd& w, const SolventSpec& solvent,
                                      double gamma, const Eigen::VectorXd& init, double newton_tol,
                                      int max_inner = default_newton_max_inner) {
  const int n = solvent.count();
  if (init.size() != n || w.size() != n)
    throw std::invalid_argument("newton_node_solve: dimension mismatch");
  if (!(water_volume_fraction(init, solvent, gamma) > 0.0))
    throw std::invalid_argument("newton_node_solve: initial iterate violates water volume positivity");

  Eigen::VectorXd xi = init;
  Eigen::VectorXd F(n), step(n);
  double last_residual = 0.0;
  for (int j = 0; j < max_inner; ++j) {
    nodal_system_eval(xi, w, solvent, gamma, F);
    last_residual = F.norm();
    Eigen::MatrixXd J = jacobian_entries(xi, w, solvent, gamma);
    step = -F;
    if (!detail::gauss_solve(J, step))
      throw NewtonNodeFailure("singular Jacobian", last_residual);

    double scale = 1.0;
    int halvings = 0;
    while (halvings < newton_max_halvings &&
           !(water_volume_fraction(xi + scale * step, solvent, gamma) > 0.0)) {
      scale *= 0.5;
      ++halvings;
    }
    if (halvings == newton_max_halvings)
      throw NewtonNodeFailure("iterate left the water volume positivity region", last_residual);
    xi += scale * step;
    if (step.norm() < newton_tol) return {xi, j + 1};
  }
  throw NewtonNodeFailure("max inner iterations exceeded", last_residual);
}

// ---------------------------------------------------------------------------
// Blocks of the damped iteration
// ---------------------------------------------------------------------------

struct Block1Result {
  Eigen::MatrixXd p; // n x N_h
  int max_inner = 0;
};

namespace detail {

// Closed-form linearized nodal values, used as the initializer and as the Newton
// fallback start.
inline void linearized_node_values(const Eigen::VectorXd& w, const SolventSpec& solvent,
                                   double gamma, Eigen::VectorXd& out) {
  const double vbar = solvent.mean_volume();
  double q = 0.0;
  for (int j = 0; j < solvent.count(); ++j) q += w[j];
  const double denom = 1.0 + gamma * (vbar * vbar / solvent.v0) * q;
  for (int i = 0; i < solvent.count(); ++i) out[i] = w[i] / denom;
}

} // namespace detail

/// Solves the decoupled nodal systems at every solvent node with the fixed
/// potential u_fix = G + Psi + phi^k restricted to solvent nodes.
inline Block1Result solve_block1(const Eigen::MatrixXd& c_current,
                                 const Eigen::VectorXd& u_fix_solvent,
                                 const SolventSpec& solvent, double gamma, double overflow_bound,
                                 double newton_tol, int max_inner = default_newton_max_inner) {
  const int n = solvent.count();
  const int nh = static_cast<int>(u_fix_solvent.size());
  if (c_current.rows() != n || c_current.cols() != nh)
    throw std::invalid_argument("solve_block1: state dimensions do not match the solvent mesh");

  Block1Result out;
  out.p.resize(n, nh);
  // Newton stops on the step norm, so strongly depleted species may land a
  // hair below zero; project that dust onto the constraint. Anything beyond
  // the tolerance is a genuinely nonphysical root and stays a failure.
  auto accept = [&](Eigen::VectorXd xi) {
    for (int i = 0; i < n; ++i) {
      if (xi[i] < -newton_tol)
        throw NewtonNodeFailure("converged to a negative concentration", xi.norm());
      if (xi[i] < 0.0) xi[i] = 0.0;
    }
    return xi;
  };
  Eigen::VectorXd w(n), fallback(n);
  for (int mu = 0; mu < nh; ++mu) {
    w = boltzmann_weights(solvent, u_fix_solvent[mu], overflow_bound);
    // Retry from linearized nodal values when the previous iterate is a bad
    // start (stalled Newton, or an iterate pushed onto the feasibility
    // boundary by rounding).
    bool done = false;
    if (water_volume_fraction(c_current.col(mu), solvent, gamma) > 0.0) {
      try {
        auto res = newton_node_solve(w, solvent, gamma, c_current.col(mu), newton_tol, max_inner);
        out.p.col(mu) = accept(std::move(res.xi));
        out.max_inner = std::max(out.max_inner, res.iterations);
        done = true;
      } catch (const NewtonNodeFailure&) {
      }
    }
    if (!done) {
      detail::linearized_node_values(w, solvent, gamma, fallback);
      if (!(water_volume_fraction(fallback, solvent, gamma) > 0.0))
        throw Block1Failure(mu, 0.0,
                            "nodal system saturated beyond floating-point resolution of the "
                            "water volume fraction");
      try {
        auto res = newton_node_solve(w, solvent, gamma, fallback, newton_tol, max_inner);
        out.p.col(mu) = accept(std::move(res.xi));
        out.max_inner = std::max(out.max_inner, res.iterations);
      } catch (const NewtonNodeFailure& again) {
        throw Block1Failure(mu, again.last_residual, again.what());
      }
    }
  }
  return out;
}

/// Closed-form nodal concentrations for equal ion sizes.
inline Eigen::MatrixXd uniform_size_closed_form(const Eigen::VectorXd& u_solvent,
                                                const SolventSpec& solvent, double gamma,
                                                double overflow_bound) {
  const int n = solvent.count();
  const double vbar = solvent.species.front().ion_volume;
  for (const auto& sp : solvent.species)
    if (sp.ion_volume != vbar)
      throw std::invalid_argument("uniform_size_closed_form: ion volumes must all be equal");

  Eigen::MatrixXd c(n, u_solvent.size());
  for (int mu = 0; mu < u_solvent.size(); ++mu) {
    double q = 0.0;
    Eigen::VectorXd w = boltzmann_weights(solvent, u_solvent[mu], overflow_bound);
    for (int j = 0; j < n; ++j) q += w[j];
    const double denom = 1.0 + gamma * (vbar * vbar / solvent.v0) * q;
    for (int i = 0; i < n; ++i) c(i, mu) = w[i] / denom;
  }
  return c;
}

/// Residual of the nodal nonlinear system over all solvent nodes,
/// R = (1/N_h) max_i sqrt(sum_mu f_i^2).
inline double residual(const Eigen::MatrixXd& c, const Eigen::VectorXd& u_fix_solvent,
                       const SolventSpec& solvent, double gamma, double overflow_bound) {
  const int n = solvent.count();
  const int nh = static_cast<int>(u_fix_solvent.size());
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd w(n), f(n);
  for (int mu = 0; mu < nh; ++mu) {
    w = boltzmann_weights(solvent, u_fix_solvent[mu], overflow_bound);
    nodal_system_eval(c.col(mu), w, solvent, gamma, f);
    for (int i = 0; i < n; ++i) sq[i] += f[i] * f[i];
  }
  return std::sqrt(sq.maxCoeff()) / static_cast<double>(nh);
}

/// Termination rule: both iteration errors and the residual below epsilon.
inline bool check_termination(const IterationRecord& rec, double epsilon) {
  return rec.err_phi < epsilon && rec.err_c < epsilon && rec.residual < epsilon;
}

// ---------------------------------------------------------------------------
// Assembled operators shared across iterations
// ---------------------------------------------------------------------------

/// Everything the outer iteration reuses: the constrained stiffness (one
/// factorization), lumped masses, transfer and the fixed G + Psi part.
struct Model3Workspace {
  const LabeledMesh* mesh = nullptr;
  const SolventSubmesh* submesh = nullptr;
  const TransferOps* transfer = nullptr;
  SolventSpec solvent;
  PhysicalConstants constants;
  ProblemConfig config;

  ConstrainedSystem stiffness;             // homogeneous Gamma_D
  std::unique_ptr<LinearSolver> solver;    // factorized once
  Eigen::VectorXd mass_box;                // lumped, Omega
  Eigen::VectorXd mass_solvent_box;        // lumped, D_s, box indexing
  Eigen::VectorXd mass_submesh;            // lumped, D_s, solvent indexing
  Eigen::VectorXd gpsi;                    // G + Psi on box nodes
  Eigen::VectorXd gpsi_solvent;            // restricted to solvent nodes

  Eigen::VectorXd compose_potential(const Eigen::VectorXd& phi_tilde) const {
    return gpsi_solvent + transfer->restrict_to_solvent(phi_tilde);
  }
};

inline Model3Workspace make_model3_workspace(const LabeledMesh& mesh,
                                             const SolventSubmesh& submesh,
                                             const TransferOps& transfer,
                                             const SolventSpec& solvent,
                                             const PhysicalConstants& constants,
                                             const ProblemConfig& config,
                                             const Eigen::VectorXd& gpsi,
                                             const LinearSolveOptions& options) {
  Model3Workspace ws;
  ws.mesh = &mesh;
  ws.submesh = &submesh;
  ws.transfer = &transfer;
  ws.solvent = solvent;
  ws.constants = constants;
  ws.config = config;
  ws.gpsi = gpsi;
  ws.gpsi_solvent = transfer.restrict_to_solvent(gpsi);
  ws.mass_box = lumped_mass_box(mesh);
  ws.mass_solvent_box = lumped_mass_solvent(mesh);
  ws.mass_submesh = lumped_mass_submesh(submesh.submesh);

  const auto A = assemble_stiffness(mesh, config.eps_p, config.eps_m, config.eps_s);
  const auto dnodes = dirichlet_nodes(mesh);
  ws.stiffness = apply_dirichlet(A, dnodes, Eigen::VectorXd::Zero(dnodes.size()));
  ws.solver = std::make_unique<LinearSolver>(ws.stiffness.matrix, options);
  return ws;
}

/// Block 2: a(q, v) = beta sum_j Z_j int_{D_s} (P c_j) v, q = 0 on Gamma_D.
inline Eigen::VectorXd solve_block2(const Eigen::MatrixXd& c_next, const Model3Workspace& ws,
                                    SolveStats* stats = nullptr) {
  Eigen::VectorXd density = Eigen::VectorXd::Zero(c_next.cols());
  for (int i = 0; i < ws.solvent.count(); ++i)
    density += static_cast<double>(ws.solvent.species[i].charge_number) *
               c_next.row(i).transpose();
  const Eigen::VectorXd box_density = ws.transfer->prolong_to_box(density);
  Eigen::VectorXd rhs = ws.constants.beta * ws.mass_solvent_box.cwiseProduct(box_density);
  return ws.solver->solve(ws.stiffness.constrain_rhs(rhs), stats);
}

struct StepStats {
  int newton_max_inner = 0;
};

/// One damped two-block sweep; Block 2 consumes the already damped c^{k+1}.
inline NodalState two_block_step(const NodalState& state, const Model3Workspace& ws, double omega,
                                 StepStats* stats = nullptr) {
  if (!(omega > 0.0 && omega <= 1.0))
    throw std::invalid_argument("two_block_step: omega must lie in (0, 1]");
  const Eigen::VectorXd u_fix = ws.compose_potential(state.phi_tilde);
  auto b1 = solve_block1(state.c, u_fix, ws.solvent, ws.constants.gamma,
                         ws.config.overflow_bound, ws.config.newton_tol);
  NodalState next;
  next.c = state.c + omega * (b1.p - state.c);
  const Eigen::VectorXd q = solve_block2(next.c, ws);
  next.phi_tilde = state.phi_tilde + omega * (q - state.phi_tilde);
  if (stats) stats->newton_max_inner = b1.max_inner;
  return next;
}

/// Screening coefficient of the linearized initializer equation.
inline double initializer_beta_bar(const SolventSpec& solvent, double beta, double gamma) {
  double sum_z2cb = 0.0, sum_cb = 0.0;
  for (const auto& sp : solvent.species) {
    sum_z2cb += static_cast<double>(sp.charge_number) * sp.charge_number * sp.bulk_concentration;
    sum_cb += sp.bulk_concentration;
  }
  const double vbar = solvent.mean_volume();
  return beta * sum_z2cb / (1.0 + gamma * (vbar * vbar / solvent.v0) * sum_cb);
}

/// Linearized initializer: mass-shifted screened solve for phi^0, then the
/// closed-form nodal concentrations with the same overflow guard.
inline NodalState initial_iterate(const Model3Workspace& ws, const LinearSolveOptions& options,
                                  SolveStats* stats = nullptr) {
  ws.solvent.validate(); // electroneutrality is what justifies the linearization

  const double beta_bar = initializer_beta_bar(ws.solvent, ws.constants.beta, ws.constants.gamma);

  SparseMat A = ws.stiffness.matrix; // already constrained; add the mass shift off Gamma_D
  std::vector<char> is_d(A.rows(), 0);
  for (int nd : ws.stiffness.nodes) is_d[nd] = 1;
  std::vector<Triplet> trip;
  for (int i = 0; i < A.rows(); ++i)
    if (!is_d[i] && ws.mass_solvent_box[i] != 0.0)
      trip.emplace_back(i, i, beta_bar * ws.mass_solvent_box[i]);
  SparseMat shift(A.rows(), A.cols());
  shift.setFromTriplets(trip.begin(), trip.end());
  A += shift;

  Eigen::VectorXd rhs = -beta_bar * ws.mass_solvent_box.cwiseProduct(ws.gpsi);
  for (int nd : ws.stiffness.nodes) rhs[nd] = 0.0;

  NodalState state;
  LinearSolver solver(A, options);
  state.phi_tilde = solver.solve(rhs, stats);

  const Eigen::VectorXd u0 = ws.compose_potential(state.phi_tilde);
  const int n = ws.solvent.count();
  state.c.resize(n, u0.size());
  Eigen::VectorXd w(n), c0(n);
  for (int mu = 0; mu < u0.size(); ++mu) {
    w = boltzmann_weights(ws.solvent, u0[mu], ws.config.overflow_bound);
    detail::linearized_node_values(w, ws.solvent, ws.constants.gamma, c0);
    state.c.col(mu) = c0;
  }
  return state;
}

// ---------------------------------------------------------------------------
// Full Model 3 driver
// ---------------------------------------------------------------------------

struct Model3Options {
  LinearSolveOptions linear;
  int max_outer = 500;
  double divergence_factor = 10.0; // growth over the best error so far
  std::function<void(const NodalState&, const IterationRecord&)> on_iterate; // accepted iterates
};

struct Model3Result {
  Eigen::VectorXd G;    // box nodes
  Eigen::VectorXd psi;  // box nodes
  NodalState state;
  SolverReport report;
  bool converged() const { return report.reason == TerminationReason::converged; }
};

/// Steps 1-3: G and Psi, the linearized initial iterate, then damped
/// two-block sweeps until the termination rules hold.
inline Model3Result run_model3(const LabeledMesh& mesh, const SolventSubmesh& submesh,
                               const TransferOps& transfer, const AtomSet& atoms,
                               const SolventSpec& solvent, const PhysicalConstants& constants,
                               const ProblemConfig& config, const Model3Options& options = {}) {
  config.validate();
  solvent.validate();
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&t0] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  Model3Result out;
  out.G = atoms.empty() ? Eigen::VectorXd::Zero(mesh.node_count())
                        : eval_G(atoms, constants.alpha, config.eps_p, mesh);
  out.psi = solve_model2(mesh, atoms, constants, config, options.linear).psi;

  auto ws = make_model3_workspace(mesh, submesh, transfer, solvent, constants, config,
                                  out.G + out.psi, options.linear);
  NodalState state = initial_iterate(ws, options.linear);

  double best_err = std::numeric_limits<double>::infinity();
  for (int k = 0; k < options.max_outer; ++k) {
    const auto it0 = std::chrono::steady_clock::now();
    IterationRecord rec;
    rec.k = k;
    NodalState next;
    try {
      StepStats stats;
      next = two_block_step(state, ws, config.omega, &stats);
      rec.newton_max_inner = stats.newton_max_inner;
    } catch (const Block1Failure& e) {
      out.report.reason = TerminationReason::block1_failure;
      out.report.message = e.what();
      out.report.wall_seconds = elapsed();
      out.state = std::move(state);
      return out;
    }

    rec.err_phi = lumped_l2_norm(ws.mass_box, next.phi_tilde - state.phi_tilde);
    Eigen::VectorXd dc(next.c.cols());
    for (int i = 0; i < solvent.count(); ++i) {
      dc = (next.c.row(i) - state.c.row(i)).transpose();
      rec.err_c = std::max(rec.err_c, lumped_l2_norm(ws.mass_submesh, dc));
    }
    rec.residual = residual(next.c, ws.compose_potential(next.phi_tilde), solvent,
                            constants.gamma, config.overflow_bound);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - it0).count();
    out.report.iterations.push_back(rec);
    state = std::move(next);
    if (options.on_iterate) options.on_iterate(state, rec);

    if (!std::isfinite(rec.err_phi) || !std::isfinite(rec.err_c) || !std::isfinite(rec.residual)) {
      out.report.reason = TerminationReason::diverged;
      out.report.message = "iteration produced non-finite errors; try a smaller omega";
      break;
    }
    if (check_termination(rec, config.tol)) {
      out.report.reason = TerminationReason::converged;
      break;
    }
    const double err = std::max(rec.err_phi, rec.err_c);
    best_err = std::min(best_err, err);
    if (k >= 3 && err > options.divergence_factor * best_err) {
      out.report.reason = TerminationReason::diverged;
      out.report.message = "iteration error grew " + std::to_string(options.divergence_factor) +
                           "x above its minimum; try a smaller omega";
      break;
    }
  }
  if (out.report.reason == TerminationReason::max_iterations)
    out.report.message = "termination rules not met within " + std::to_string(options.max_outer) +
                         " iterations";
  out.report.wall_seconds = elapsed();
  out.state = std::move(state);
  return out;
}

} // namespace nusmpbic
