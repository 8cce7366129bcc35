#include "nusmpbic/model3.hpp"

#include <catch_amalgamated.hpp>

#include <random>

using namespace nusmpbic;
using Catch::Approx;

namespace {

SolventSpec four_species() {
  SolventSpec s;
  s.species = {{"Cl", -1, 0.1, 24.8384},
               {"NO3", -1, 0.1, 77.0727},
               {"K", 1, 0.1, 9.8547},
               {"Na", 1, 0.1, 3.5914}};
  s.v0 = 3.5914;
  return s;
}

SolventSpec uniform_species(double v = 28.8393) {
  auto s = four_species();
  for (auto& sp : s.species) sp.ion_volume = v;
  s.v0 = v;
  return s;
}

constexpr double gamma_codata = 6.02214076e-4;

Eigen::VectorXd bulk_init(const SolventSpec& s) {
  Eigen::VectorXd c(s.count());
  for (int i = 0; i < s.count(); ++i) c[i] = s.species[i].bulk_concentration;
  return c;
}

// Damped fixed-point oracle for the nodal system, independent of the Newton
// path. Small step, many iterations.
Eigen::VectorXd fixed_point_oracle(const Eigen::VectorXd& w, const SolventSpec& s, double gamma,
                                   long steps = 100000, double lambda = 0.02) {
  const int n = s.count();
  Eigen::VectorXd xi = Eigen::VectorXd::Zero(n);
  for (long k = 0; k < steps; ++k) {
    double vsum = 0.0;
    for (int j = 0; j < n; ++j) vsum += s.species[j].ion_volume * xi[j];
    const double S = 1.0 - gamma * vsum;
    for (int i = 0; i < n; ++i) {
      const double target = w[i] * std::pow(S, s.species[i].ion_volume / s.v0);
      xi[i] += lambda * (target - xi[i]);
    }
  }
  return xi;
}

} // namespace

TEST_CASE("n=1 closed form is reproduced") {
  SolventSpec s;
  s.species = {{"X", -1, 0.1, 24.8384}};
  s.v0 = 24.8384;
  // u = 0: xi = c_b / (1 + c_b gamma v), frozen from the hand derivation
  const double expected = 0.1 / (1.0 + 0.1 * gamma_codata * 24.8384);
  CHECK(expected == Approx(0.09985064306755575).epsilon(1e-14));

  const Eigen::VectorXd w = boltzmann_weights(s, 0.0, 45.0);
  const auto res = newton_node_solve(w, s, gamma_codata, bulk_init(s), 1e-12);
  CHECK(res.xi[0] == Approx(expected).margin(1e-12));
}

TEST_CASE("gamma = 0 reduces to the classical Boltzmann factor") {
  auto s = four_species();
  const double u = 1.3;
  const Eigen::VectorXd w = boltzmann_weights(s, u, 45.0);
  const auto res = newton_node_solve(w, s, 0.0, bulk_init(s), 1e-12);
  for (int i = 0; i < s.count(); ++i)
    CHECK(res.xi[i] ==
          Approx(s.species[i].bulk_concentration * std::exp(-s.species[i].charge_number * u))
              .epsilon(1e-12));
}

TEST_CASE("four-species node solve matches the damped fixed-point oracle") {
  const auto s = four_species();
  const Eigen::VectorXd w = boltzmann_weights(s, 0.0, 45.0);
  const Eigen::VectorXd oracle = fixed_point_oracle(w, s, gamma_codata);
  const auto res = newton_node_solve(w, s, gamma_codata, bulk_init(s), 1e-12);
  for (int i = 0; i < s.count(); ++i) CHECK(res.xi[i] == Approx(oracle[i]).margin(1e-10));
}

TEST_CASE("overflow guard caps the exponent input") {
  SolventSpec s = four_species();
  const Eigen::VectorXd w = boltzmann_weights(s, -60.0, 45.0);
  // cations see exponent +60, capped at 45; anions see -60, untouched
  CHECK(w[2] == Approx(0.1 * std::exp(45.0)).epsilon(1e-14));
  CHECK(w[3] == Approx(0.1 * std::exp(45.0)).epsilon(1e-14));
  CHECK(w[0] == Approx(0.1 * std::exp(-60.0)).epsilon(1e-12));
  CHECK(w[1] == Approx(0.1 * std::exp(-60.0)).epsilon(1e-12));
  const auto res = newton_node_solve(w, s, gamma_codata, bulk_init(s), 1e-10);
  for (int i = 0; i < 4; ++i) CHECK(std::isfinite(res.xi[i]));
  CHECK(water_volume_fraction(res.xi, s, gamma_codata) > 0.0);
}

TEST_CASE("jacobian reduces to the identity at gamma = 0") {
  const auto s = four_species();
  const Eigen::VectorXd w = boltzmann_weights(s, 0.4, 45.0);
  const Eigen::MatrixXd J = jacobian_entries(bulk_init(s), w, s, 0.0);
  CHECK((J - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("jacobian matches central finite differences") {
  const auto s = four_species();
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> Uu(-2, 2), Ux(0.01, 0.5);
  for (int trial = 0; trial < 20; ++trial) {
    const double u = Uu(rng);
    const Eigen::VectorXd w = boltzmann_weights(s, u, 45.0);
    Eigen::VectorXd xi(4);
    for (int i = 0; i < 4; ++i) xi[i] = Ux(rng);
    if (!(water_volume_fraction(xi, s, gamma_codata) > 0.1)) continue;

    const Eigen::MatrixXd J = jacobian_entries(xi, w, s, gamma_codata);
    Eigen::MatrixXd Jfd(4, 4);
    Eigen::VectorXd fp(4), fm(4);
    for (int j = 0; j < 4; ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(xi[j]));
      Eigen::VectorXd xp = xi, xm = xi;
      xp[j] += h;
      xm[j] -= h;
      nodal_system_eval(xp, w, s, gamma_codata, fp);
      nodal_system_eval(xm, w, s, gamma_codata, fm);
      Jfd.col(j) = (fp - fm) / (2 * h);
    }
    const double scale = std::max(1.0, Jfd.cwiseAbs().maxCoeff());
    CHECK((J - Jfd).cwiseAbs().maxCoeff() <= 1e-6 * scale);
  }
}

TEST_CASE("J - I is rank one") {
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> Ux(0.01, 0.4);

  SECTION("equal volumes") {
    const auto s = uniform_species();
    const Eigen::VectorXd w = boltzmann_weights(s, 0.7, 45.0);
    Eigen::VectorXd xi(4);
    for (int i = 0; i < 4; ++i) xi[i] = Ux(rng);
    const Eigen::MatrixXd D = jacobian_entries(xi, w, s, gamma_codata) -
                              Eigen::MatrixXd::Identity(4, 4);
    const auto svd = D.jacobiSvd();
    CHECK(svd.singularValues()[1] <= 1e-12 * svd.singularValues()[0]);
  }

  SECTION("general volumes: columns proportional to v_j") {
    const auto s = four_species();
    const Eigen::VectorXd w = boltzmann_weights(s, -0.9, 45.0);
    Eigen::VectorXd xi(4);
    for (int i = 0; i < 4; ++i) xi[i] = Ux(rng);
    const Eigen::MatrixXd D = jacobian_entries(xi, w, s, gamma_codata) -
                              Eigen::MatrixXd::Identity(4, 4);
    for (int i = 0; i < 4; ++i) {
      const double ref = D(i, 0) / s.species[0].ion_volume;
      for (int j = 1; j < 4; ++j)
        CHECK(D(i, j) / s.species[j].ion_volume == Approx(ref).epsilon(1e-12));
    }
  }
}

TEST_CASE("jacobian rejects states outside the water-positivity region") {
  const auto s = four_species();
  const Eigen::VectorXd w = boltzmann_weights(s, 0.0, 45.0);
  Eigen::VectorXd xi = Eigen::VectorXd::Constant(4, 1e5);
  CHECK_THROWS_AS(jacobian_entries(xi, w, s, gamma_codata), std::invalid_argument);
}

TEST_CASE("newton rejects an infeasible start") {
  const auto s = four_species();
  const Eigen::VectorXd w = boltzmann_weights(s, 0.0, 45.0);
  CHECK_THROWS_AS(newton_node_solve(w, s, gamma_codata, Eigen::VectorXd::Constant(4, 1e5), 1e-8),
                  std::invalid_argument);
}

TEST_CASE("quadratic tail of the newton iteration") {
  // Re-run the scheme step by step through the public pieces and watch the
  // step norms: ratios |step_{j+1}| / |step_j|^2 stay bounded near the root.
  const auto s = four_species();
  const Eigen::VectorXd w = boltzmann_weights(s, 1.1, 45.0);
  Eigen::VectorXd xi = bulk_init(s);
  std::vector<double> steps;
  for (int j = 0; j < 12; ++j) {
    Eigen::VectorXd F(4);
    nodal_system_eval(xi, w, s, gamma_codata, F);
    Eigen::MatrixXd J = jacobian_entries(xi, w, s, gamma_codata);
    const Eigen::VectorXd step = J.partialPivLu().solve(-F);
    xi += step;
    steps.push_back(step.norm());
    if (steps.back() < 1e-14) break;
  }
  REQUIRE(steps.size() >= 4);
  int checked = 0;
  for (size_t j = steps.size() - 3; j < steps.size(); ++j) {
    if (steps[j - 1] < 1e-13) break; // at roundoff floor
    CHECK(steps[j] / (steps[j - 1] * steps[j - 1]) < 1e3);
    ++checked;
  }
  CHECK(checked >= 1);
}

TEST_CASE("uniform closed form") {
  const auto s = uniform_species();

  SECTION("tabulated volumes at u = 0: all species equal, below bulk") {
    const Eigen::VectorXd u = Eigen::VectorXd::Zero(3);
    const Eigen::MatrixXd c = uniform_size_closed_form(u, s, gamma_codata, 45.0);
    for (int mu = 0; mu < 3; ++mu)
      for (int i = 0; i < 4; ++i) {
        CHECK(c(i, mu) == Approx(0.09931009545215990).epsilon(1e-13)); // frozen
        CHECK(c(i, mu) < 0.1);
      }
  }
  SECTION("gamma -> 0 limit is the Boltzmann factor") {
    Eigen::VectorXd u(2);
    u << 0.8, -1.4;
    const Eigen::MatrixXd c = uniform_size_closed_form(u, s, 0.0, 45.0);
    for (int mu = 0; mu < 2; ++mu)
      for (int i = 0; i < 4; ++i)
        CHECK(c(i, mu) == Approx(0.1 * std::exp(-s.species[i].charge_number * u[mu]))
                              .epsilon(1e-13));
  }
  SECTION("newton agrees with the closed form at random potentials") {
    std::mt19937 rng(31);
    std::uniform_real_distribution<double> Uu(-2.5, 2.5);
    for (int t = 0; t < 25; ++t) {
      Eigen::VectorXd u(1);
      u << Uu(rng);
      const Eigen::MatrixXd c = uniform_size_closed_form(u, s, gamma_codata, 45.0);
      const Eigen::VectorXd w = boltzmann_weights(s, u[0], 45.0);
      const auto res = newton_node_solve(w, s, gamma_codata, bulk_init(s), 1e-13);
      for (int i = 0; i < 4; ++i) CHECK(res.xi[i] == Approx(c(i, 0)).margin(1e-10));
    }
  }
  SECTION("non-uniform sizes are rejected") {
    CHECK_THROWS_AS(uniform_size_closed_form(Eigen::VectorXd::Zero(1), four_species(),
                                             gamma_codata, 45.0),
                    std::invalid_argument);
  }
}

TEST_CASE("residual of the nodal system") {
  const auto s = four_species();

  SECTION("exact nodal solutions give a vanishing residual") {
    const int nh = 40;
    Eigen::VectorXd u(nh);
    for (int mu = 0; mu < nh; ++mu) u[mu] = std::sin(0.2 * mu);
    Eigen::MatrixXd c(4, nh);
    for (int mu = 0; mu < nh; ++mu) {
      const Eigen::VectorXd w = boltzmann_weights(s, u[mu], 45.0);
      c.col(mu) = newton_node_solve(w, s, gamma_codata, bulk_init(s), 1e-13).xi;
    }
    CHECK(residual(c, u, s, gamma_codata, 45.0) <= 1e-12);
  }

  SECTION("zero state at zero potential leaves the bulk imbalance") {
    const int nh = 25;
    const Eigen::MatrixXd c = Eigen::MatrixXd::Zero(4, nh);
    const Eigen::VectorXd u = Eigen::VectorXd::Zero(nh);
    // |f_i| = c_i^b at every node -> R = max_i c_i^b / sqrt(N_h)
    CHECK(residual(c, u, s, gamma_codata, 45.0) == Approx(0.1 / std::sqrt(25.0)).epsilon(1e-13));
  }

  SECTION("R scales as 1/sqrt(N_h) at fixed pointwise error") {
    const Eigen::MatrixXd c1 = Eigen::MatrixXd::Zero(4, 50);
    const Eigen::MatrixXd c2 = Eigen::MatrixXd::Zero(4, 200);
    const double r1 = residual(c1, Eigen::VectorXd::Zero(50), s, gamma_codata, 45.0);
    const double r2 = residual(c2, Eigen::VectorXd::Zero(200), s, gamma_codata, 45.0);
    CHECK(r1 / r2 == Approx(2.0).epsilon(1e-12));
  }
}

TEST_CASE("termination rule") {
  IterationRecord rec;
  rec.err_phi = 5e-5;
  rec.err_c = 8e-5;
  rec.residual = 9e-5;
  CHECK(check_termination(rec, 1e-4));
  rec.residual = 2e-4;
  CHECK_FALSE(check_termination(rec, 1e-4));
  rec.residual = 9e-5;
  rec.err_phi = 1e-4; // strict inequality
  CHECK_FALSE(check_termination(rec, 1e-4));
}

TEST_CASE("initializer screening coefficient matches the frozen script value") {
  const auto s = four_species();
  const auto pc = compute_constants(298.15);
  CHECK(initializer_beta_bar(s, pc.beta, pc.gamma) ==
        Approx(1.6069020862304210).epsilon(1e-12));
}

TEST_CASE("symmetric salt initial concentrations swap under potential reflection") {
  SolventSpec s;
  s.species = {{"A", -1, 0.2, 20.0}, {"B", 1, 0.2, 20.0}};
  s.v0 = 20.0;
  const Eigen::VectorXd w_plus = boltzmann_weights(s, 0.9, 45.0);
  const Eigen::VectorXd w_minus = boltzmann_weights(s, -0.9, 45.0);
  Eigen::VectorXd c_plus(2), c_minus(2);
  detail::linearized_node_values(w_plus, s, gamma_codata, c_plus);
  detail::linearized_node_values(w_minus, s, gamma_codata, c_minus);
  CHECK(c_plus[0] == Approx(c_minus[1]).epsilon(1e-14));
  CHECK(c_plus[1] == Approx(c_minus[0]).epsilon(1e-14));
}
