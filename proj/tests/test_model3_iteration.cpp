#include "support/fixtures.hpp"

#include <catch_amalgamated.hpp>

#include <random>

using namespace nusmpbic;
using Catch::Approx;

namespace {

struct Pipeline {
  LabeledMesh mesh;
  SolventSubmesh submesh;
  TransferOps transfer;
  PhysicalConstants constants;
  ProblemConfig config;
  SolventSpec solvent;
  Model3Workspace ws;
};

// The workspace keeps pointers into the pipeline, so the pipeline must live at
// a stable address.
std::unique_ptr<Pipeline> make_pipeline(const fixtures::ChannelCase& cc) {
  auto p = std::make_unique<Pipeline>();
  p->mesh = generate_synthetic_channel(cc.geometry);
  auto [sub, ops] = extract_solvent_submesh(p->mesh);
  p->submesh = std::move(sub);
  p->transfer = std::move(ops);
  p->constants = compute_constants(cc.config.temperature);
  p->config = cc.config;
  p->solvent = cc.solvent;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(p->mesh.node_count());
  LinearSolveOptions direct;
  direct.method = LinearMethod::direct;
  p->ws = make_model3_workspace(p->mesh, p->submesh, p->transfer, p->solvent, p->constants,
                                p->config, zero, direct);
  return p;
}

fixtures::ChannelCase small_case() {
  auto cc = fixtures::channel_case();
  cc.geometry.box = {-10, 10, -10, 10, -16, 16};
  cc.geometry.membrane_z1 = -6;
  cc.geometry.membrane_z2 = 6;
  cc.geometry.pore_radius = 3;
  cc.geometry.shell_radius = 6;
  cc.geometry.target_h = 2.0;
  cc.config.box = cc.geometry.box;
  cc.config.membrane_z1 = -6;
  cc.config.membrane_z2 = 6;
  cc.atoms = fixtures::ring_atoms(6, 4.5, {0.0}, 0.03);
  return cc;
}

} // namespace

TEST_CASE("block 1 at zero potential with uniform sizes is nodally constant") {
  auto cc = small_case();
  cc.solvent = cc.solvent.uniform_size();
  const auto pp = make_pipeline(cc);
  auto& p = *pp;
  const int nh = p.submesh.node_count();

  Eigen::MatrixXd c0(4, nh);
  for (int i = 0; i < 4; ++i) c0.row(i).setConstant(cc.solvent.species[i].bulk_concentration);
  const Eigen::VectorXd u = Eigen::VectorXd::Zero(nh);
  const auto b1 = solve_block1(c0, u, cc.solvent, p.constants.gamma, 45.0, 1e-12);

  const Eigen::MatrixXd closed =
      uniform_size_closed_form(Eigen::VectorXd::Zero(1), cc.solvent, p.constants.gamma, 45.0);
  for (int mu = 0; mu < nh; ++mu)
    for (int i = 0; i < 4; ++i) CHECK(b1.p(i, mu) == Approx(closed(i, 0)).margin(1e-11));
}

TEST_CASE("block 1 is node independent and deterministic") {
  auto cc = small_case();
  const auto pp = make_pipeline(cc);
  auto& p = *pp;
  const int nh = p.submesh.node_count();
  Eigen::MatrixXd c0(4, nh);
  for (int i = 0; i < 4; ++i) c0.row(i).setConstant(0.1);
  Eigen::VectorXd u(nh);
  for (int mu = 0; mu < nh; ++mu) u[mu] = std::sin(0.05 * mu);
  u[3] = u[7] = 0.42; // identical nodes must give identical columns

  const auto a = solve_block1(c0, u, cc.solvent, p.constants.gamma, 45.0, 1e-10);
  const auto b = solve_block1(c0, u, cc.solvent, p.constants.gamma, 45.0, 1e-10);
  CHECK(a.p == b.p);
  CHECK(a.p.col(3) == a.p.col(7));

  // permuting the nodes permutes the output
  std::vector<int> perm(nh);
  for (int i = 0; i < nh; ++i) perm[i] = (i * 17 + 5) % nh;
  Eigen::VectorXd up(nh);
  Eigen::MatrixXd cp(4, nh);
  for (int i = 0; i < nh; ++i) {
    up[i] = u[perm[i]];
    cp.col(i) = c0.col(perm[i]);
  }
  const auto c = solve_block1(cp, up, cc.solvent, p.constants.gamma, 45.0, 1e-10);
  for (int i = 0; i < nh; ++i) CHECK(c.p.col(i) == a.p.col(perm[i]));
}

TEST_CASE("block 2 right-hand side properties") {
  auto cc = small_case();
  const auto pp = make_pipeline(cc);
  auto& p = *pp;
  const int nh = p.submesh.node_count();

  SECTION("charge-neutral concentrations give the zero potential") {
    Eigen::MatrixXd c(4, nh);
    for (int mu = 0; mu < nh; ++mu) {
      const double v = 0.05 + 0.01 * std::cos(0.1 * mu);
      c.col(mu) << v, v, v, v; // Z = (-1,-1,1,1): net charge zero nodally
    }
    const Eigen::VectorXd q = solve_block2(c, p.ws);
    CHECK(q.cwiseAbs().maxCoeff() <= 1e-10);
  }

  SECTION("scaling the concentrations scales the potential") {
    Eigen::MatrixXd c(4, nh);
    for (int mu = 0; mu < nh; ++mu) c.col(mu) << 0.12, 0.08, 0.1, 0.02;
    const Eigen::VectorXd q1 = solve_block2(c, p.ws);
    const Eigen::VectorXd q3 = solve_block2((3.0 * c).eval(), p.ws);
    CHECK((q3 - 3.0 * q1).cwiseAbs().maxCoeff() <= 1e-9 * q3.cwiseAbs().maxCoeff());
  }

  SECTION("matches an independently assembled direct solve") {
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> U(0.01, 0.3);
    Eigen::MatrixXd c(4, nh);
    for (int mu = 0; mu < nh; ++mu)
      for (int i = 0; i < 4; ++i) c(i, mu) = U(rng);
    const Eigen::VectorXd q = solve_block2(c, p.ws);

    // oracle: assemble the load from scratch and solve with Eigen directly
    Eigen::VectorXd density = Eigen::VectorXd::Zero(nh);
    for (int i = 0; i < 4; ++i)
      density += double(cc.solvent.species[i].charge_number) * c.row(i).transpose();
    Eigen::VectorXd rhs =
        p.constants.beta * assemble_solvent_load(p.mesh, p.transfer, density);
    rhs = p.ws.stiffness.constrain_rhs(rhs);
    Eigen::SparseMatrix<double> A = p.ws.stiffness.matrix;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(A);
    const Eigen::VectorXd oracle = lu.solve(rhs);
    CHECK((q - oracle).cwiseAbs().maxCoeff() <= 1e-8 * std::max(1.0, oracle.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("two-block step") {
  auto cc = small_case();
  cc.solvent = cc.solvent.uniform_size();
  const auto pp = make_pipeline(cc);
  auto& p = *pp;

  SECTION("omega outside (0,1] is rejected") {
    NodalState st;
    st.c = Eigen::MatrixXd::Constant(4, p.submesh.node_count(), 0.1);
    st.phi_tilde = Eigen::VectorXd::Zero(p.mesh.node_count());
    CHECK_THROWS_AS(two_block_step(st, p.ws, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(two_block_step(st, p.ws, 1.5), std::invalid_argument);
  }

  SECTION("a fixed point stays fixed at omega = 1") {
    // neutral uniform problem: the initializer is the exact fixed point
    LinearSolveOptions direct;
    direct.method = LinearMethod::direct;
    NodalState st = initial_iterate(p.ws, direct);
    const NodalState next = two_block_step(st, p.ws, 1.0);
    CHECK((next.phi_tilde - st.phi_tilde).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((next.c - st.c).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("neutral symmetric electrolyte converges immediately") {
  auto cc = small_case();
  cc.atoms = AtomSet{};
  cc.solvent = fixtures::symmetric_salt();
  auto mesh = generate_synthetic_channel(cc.geometry);
  auto [sub, ops] = extract_solvent_submesh(mesh);
  const auto pc = compute_constants(cc.config.temperature);
  const auto res = run_model3(mesh, sub, ops, cc.atoms, cc.solvent, pc, cc.config, {});
  REQUIRE(res.report.reason == TerminationReason::converged);
  CHECK(res.report.iterations.size() <= 2);
  CHECK(res.state.phi_tilde.cwiseAbs().maxCoeff() <= 1e-9);
  const Eigen::MatrixXd closed =
      uniform_size_closed_form(Eigen::VectorXd::Zero(1), cc.solvent, pc.gamma, 45.0);
  for (int mu = 0; mu < res.state.c.cols(); ++mu)
    for (int i = 0; i < 2; ++i) CHECK(res.state.c(i, mu) == Approx(closed(i, 0)).margin(1e-9));
}

TEST_CASE("initializer with zero singular part") {
  auto cc = small_case();
  cc.solvent = fixtures::four_species();
  const auto pp = make_pipeline(cc);
  auto& p = *pp;
  LinearSolveOptions direct;
  direct.method = LinearMethod::direct;
  const NodalState st = initial_iterate(p.ws, direct);
  CHECK(st.phi_tilde.cwiseAbs().maxCoeff() <= 1e-12);
  // frozen from the independent evaluation of the closed-form start at u = 0
  for (int mu = 0; mu < st.c.cols(); ++mu)
    for (int i = 0; i < 4; ++i)
      CHECK(st.c(i, mu) == Approx(0.09471626406662129).epsilon(1e-12));
}

TEST_CASE("full channel run converges with a decaying error envelope") {
  const auto cc = small_case();
  auto mesh = generate_synthetic_channel(cc.geometry);
  auto [sub, ops] = extract_solvent_submesh(mesh);
  const auto pc = compute_constants(cc.config.temperature);

  double min_water = 1e300, min_c = 1e300;
  Model3Options opt;
  opt.on_iterate = [&](const NodalState& st, const IterationRecord&) {
    min_c = std::min(min_c, st.c.minCoeff());
    for (int mu = 0; mu < st.c.cols(); ++mu)
      min_water = std::min(min_water, water_volume_fraction(st.c.col(mu), cc.solvent, pc.gamma));
  };
  const auto res = run_model3(mesh, sub, ops, cc.atoms, cc.solvent, pc, cc.config, opt);
  REQUIRE(res.report.reason == TerminationReason::converged);
  const auto& its = res.report.iterations;
  REQUIRE(its.size() >= 6);

  // every accepted iterate stays feasible
  CHECK(min_water > 0.0);
  CHECK(min_c >= 0.0);

  // window maxima of both iteration errors decay after the transient
  const int w = 4;
  auto window_max = [&](size_t k, auto field) {
    double m = 0.0;
    for (size_t j = k; j < std::min(k + w, its.size()); ++j) m = std::max(m, field(its[j]));
    return m;
  };
  for (size_t k = 3; k + 2 * w <= its.size(); ++k) {
    CHECK(window_max(k + w, [](auto& r) { return r.err_phi; }) <
          window_max(k, [](auto& r) { return r.err_phi; }));
    CHECK(window_max(k + w, [](auto& r) { return r.err_c; }) <
          window_max(k, [](auto& r) { return r.err_c; }));
  }

  // final errors honor the termination rule
  CHECK(check_termination(its.back(), cc.config.tol));

  // at the converged state a fresh Block-1 sweep barely moves the
  // concentrations
  const Eigen::VectorXd gpsi_solvent =
      ops.restrict_to_solvent(res.G + res.psi + res.state.phi_tilde);
  const auto again = solve_block1(res.state.c, gpsi_solvent, cc.solvent, pc.gamma,
                                  cc.config.overflow_bound, cc.config.newton_tol);
  CHECK((again.p - res.state.c).cwiseAbs().maxCoeff() < 2.0 * cc.config.tol);
}

TEST_CASE("divergence is detected and reported with advice") {
  auto cc = small_case();
  cc.atoms = fixtures::ring_atoms(6, 4.5, {0.0}, 0.4); // strong enough to destabilize
  cc.config.omega = 0.95;
  auto mesh = generate_synthetic_channel(cc.geometry);
  auto [sub, ops] = extract_solvent_submesh(mesh);
  const auto pc = compute_constants(cc.config.temperature);
  const auto res = run_model3(mesh, sub, ops, cc.atoms, cc.solvent, pc, cc.config, {});
  CHECK(res.report.reason != TerminationReason::converged);
  if (res.report.reason == TerminationReason::diverged)
    CHECK_THAT(res.report.message, Catch::Matchers::ContainsSubstring("omega"));
}

TEST_CASE("solver report records non-negative errors and timings") {
  const auto cc = small_case();
  auto mesh = generate_synthetic_channel(cc.geometry);
  auto [sub, ops] = extract_solvent_submesh(mesh);
  const auto pc = compute_constants(cc.config.temperature);
  const auto res = run_model3(mesh, sub, ops, cc.atoms, cc.solvent, pc, cc.config, {});
  for (const auto& r : res.report.iterations) {
    CHECK(r.err_phi >= 0.0);
    CHECK(r.err_c >= 0.0);
    CHECK(r.residual >= 0.0);
    CHECK(r.seconds >= 0.0);
    CHECK(r.newton_max_inner >= 1);
  }
  CHECK(res.report.wall_seconds > 0.0);
}
