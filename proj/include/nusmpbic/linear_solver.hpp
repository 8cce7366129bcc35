#pragma once

#include "nusmpbic/assembly.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseLU>

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace nusmpbic {

enum class LinearMethod { gmres_ilu, direct };

struct LinearSolveOptions {
  LinearMethod method = LinearMethod::gmres_ilu;
  double abs_tol = 1e-6;
  double rel_tol = 1e-6;
  int restart = 30;
  int max_iter = 1000;
  int ilu_fill = 0; // zero-fill is the only implemented policy

  void validate() const {
    if (!(abs_tol > 0.0 && rel_tol > 0.0))
      throw std::invalid_argument("LinearSolveOptions: tolerances must be positive");
    if (restart < 1 || max_iter < 1)
      throw std::invalid_argument("LinearSolveOptions: restart and max_iter must be >= 1");
    if (ilu_fill != 0)
      throw std::invalid_argument("LinearSolveOptions: only ILU(0) fill is supported");
  }
};

class SolverFailure : public std::runtime_error {
public:
  SolverFailure(const std::string& msg, double residual)
      : std::runtime_error(msg + " (achieved residual " + std::to_string(residual) + ")"),
        achieved_residual(residual) {}
  double achieved_residual;
};

struct SolveStats {
  int iterations = 0;
  double residual = 0.0;
};

namespace detail {

/// Zero-fill ILU factorization stored in the sparsity pattern of A.
/// L has unit diagonal; U keeps the diagonal in place.
class Ilu0 {
public:
  explicit Ilu0(const SparseMat& A) : lu_(A), diag_pos_(A.rows(), -1) {
    const int n = static_cast<int>(A.rows());
    const auto* outer = lu_.outerIndexPtr();
    const auto* inner = lu_.innerIndexPtr();
    auto* vals = lu_.valuePtr();

    for (int i = 0; i < n; ++i)
      for (int p = outer[i]; p < outer[i + 1]; ++p)
        if (inner[p] == i) diag_pos_[i] = p;

    std::vector<int> pos_of(n, -1); // scatter of row i's column -> slot
    for (int i = 0; i < n; ++i) {
      for (int p = outer[i]; p < outer[i + 1]; ++p) pos_of[inner[p]] = p;
      for (int p = outer[i]; p < outer[i + 1] && inner[p] < i; ++p) {
        const int k = inner[p];
        const int dk = diag_pos_[k];
        if (dk < 0 || std::abs(vals[dk]) < 1e-300)
          throw SolverFailure("ILU(0) breakdown: zero pivot at row " + std::to_string(k),
                              std::numeric_limits<double>::quiet_NaN());
        const double factor = vals[p] / vals[dk];
        vals[p] = factor;
        for (int q = dk + 1; q < outer[k + 1]; ++q) {
          const int slot = pos_of[inner[q]];
          if (slot >= 0) vals[slot] -= factor * vals[q];
        }
      }
      for (int p = outer[i]; p < outer[i + 1]; ++p) pos_of[inner[p]] = -1;
      if (diag_pos_[i] < 0 || std::abs(vals[diag_pos_[i]]) < 1e-300)
        throw SolverFailure("ILU(0) breakdown: zero pivot at row " + std::to_string(i),
                            std::numeric_limits<double>::quiet_NaN());
    }
  }

  // y = U^{-1} L^{-1} x
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    const int n = static_cast<int>(lu_.rows());
    const auto* outer = lu_.outerIndexPtr();
    const auto* inner = lu_.innerIndexPtr();
    const auto* vals = lu_.valuePtr();
    Eigen::VectorXd y = x;
    for (int i = 0; i < n; ++i) {
      double s = y[i];
      for (int p = outer[i]; p < outer[i + 1] && inner[p] < i; ++p) s -= vals[p] * y[inner[p]];
      y[i] = s;
    }
    for (int i = n - 1; i >= 0; --i) {
      double s = y[i];
      for (int p = diag_pos_[i] + 1; p < outer[i + 1]; ++p) s -= vals[p] * y[inner[p]];
      y[i] = s / vals[diag_pos_[i]];
    }
    return y;
  }

private:
  SparseMat lu_;
  std::vector<int> diag_pos_;
};

/// Restarted GMRES, right-preconditioned: the Arnoldi residual is the true
/// residual of A x = b.
inline SolveStats gmres_right(const SparseMat& A, const Ilu0& M, const Eigen::VectorXd& b,
                              Eigen::VectorXd& x, const LinearSolveOptions& opts) {
  const int n = static_cast<int>(A.rows());
  const int m = opts.restart;
  const double target = std::max(opts.abs_tol, opts.rel_tol * b.norm());

  Eigen::MatrixXd V(n, m + 1);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m + 1, m);
  Eigen::VectorXd cs(m), sn(m), g(m + 1);

  x.setZero();
  SolveStats stats;
  double beta = b.norm();
  stats.residual = beta;
  if (beta <= target) return stats;

  Eigen::VectorXd r = b;
  while (stats.iterations < opts.max_iter) {
    beta = r.norm();
    if (beta <= target) {
      stats.residual = beta;
      return stats;
    }
    V.col(0) = r / beta;
    g.setZero();
    g[0] = beta;
    int j = 0;
    for (; j < m && stats.iterations < opts.max_iter; ++j, ++stats.iterations) {
      const Eigen::VectorXd z = M.apply(V.col(j));
      Eigen::VectorXd w = A * z;
      for (int i = 0; i <= j; ++i) { // modified Gram-Schmidt
        H(i, j) = w.dot(V.col(i));
        w -= H(i, j) * V.col(i);
      }
      H(j + 1, j) = w.norm();
      if (H(j + 1, j) > 0.0) V.col(j + 1) = w / H(j + 1, j);

      for (int i = 0; i < j; ++i) { // previous Givens rotations
        const double t = cs[i] * H(i, j) + sn[i] * H(i + 1, j);
        H(i + 1, j) = -sn[i] * H(i, j) + cs[i] * H(i + 1, j);
        H(i, j) = t;
      }
      const double denom = std::hypot(H(j, j), H(j + 1, j));
      if (denom < 1e-300) { // breakdown; fall through with current estimate
        ++j;
        ++stats.iterations;
        break;
      }
      cs[j] = H(j, j) / denom;
      sn[j] = H(j + 1, j) / denom;
      H(j, j) = denom;
      H(j + 1, j) = 0.0;
      g[j + 1] = -sn[j] * g[j];
      g[j] = cs[j] * g[j];
      if (std::abs(g[j + 1]) <= target) {
        ++j;
        ++stats.iterations;
        break;
      }
    }
    // y = H^{-1} g by back substitution, then x += M^{-1} (V y)
    Eigen::VectorXd y(j);
    for (int i = j - 1; i >= 0; --i) {
      double s = g[i];
      for (int k = i + 1; k < j; ++k) s -= H(i, k) * y[k];
      y[i] = (std::abs(H(i, i)) > 1e-300) ? s / H(i, i) : 0.0;
    }
    x += M.apply(V.leftCols(j) * y);
    r = b - A * x;
    stats.residual = r.norm();
    if (stats.residual <= target) return stats;
    if (j == 0) break; // no progress possible
  }
  throw SolverFailure("GMRES did not reach tolerance in " + std::to_string(stats.iterations) +
                          " iterations",
                      stats.residual);
}

} // namespace detail

/// Factorizes once, solves many right-hand sides. Both routes verify the true
/// residual against max(abs_tol, rel_tol * |b|).
class LinearSolver {
public:
  LinearSolver(SparseMat A, LinearSolveOptions opts) : A_(std::move(A)), opts_(opts) {
    opts_.validate();
    if (A_.rows() != A_.cols()) throw std::invalid_argument("LinearSolver: matrix must be square");
    if (opts_.method == LinearMethod::gmres_ilu) {
      ilu_ = std::make_unique<detail::Ilu0>(A_);
    } else {
      lu_ = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
      Eigen::SparseMatrix<double> Ac = A_; // SparseLU wants column-major
      lu_->compute(Ac);
      if (lu_->info() != Eigen::Success)
        throw SolverFailure("sparse LU factorization failed",
                            std::numeric_limits<double>::quiet_NaN());
    }
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& b, SolveStats* stats_out = nullptr) const {
    if (b.size() != A_.rows())
      throw std::invalid_argument("LinearSolver: rhs dimension mismatch");
    Eigen::VectorXd x(b.size());
    SolveStats stats;
    if (ilu_) {
      stats = detail::gmres_right(A_, *ilu_, b, x, opts_);
    } else {
      x = lu_->solve(b);
      if (lu_->info() != Eigen::Success)
        throw SolverFailure("sparse LU solve failed", std::numeric_limits<double>::quiet_NaN());
      stats.residual = (b - A_ * x).norm();
      const double target = std::max(opts_.abs_tol, opts_.rel_tol * b.norm());
      if (!(stats.residual <= target) && !(stats.residual == 0.0))
        if (stats.residual > 1e3 * target) // direct solve on a near-singular system
          throw SolverFailure("direct solve residual above tolerance", stats.residual);
    }
    if (stats_out) *stats_out = stats;
    return x;
  }

  const SparseMat& matrix() const { return A_; }

private:
  SparseMat A_;
  LinearSolveOptions opts_;
  std::unique_ptr<detail::Ilu0> ilu_;
  std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu_;
};

/// One-shot convenience wrapper.
inline Eigen::VectorXd solve_linear(const SparseMat& A, const Eigen::VectorXd& b,
                                    const LinearSolveOptions& opts, SolveStats* stats = nullptr) {
  return LinearSolver(A, opts).solve(b, stats);
}

} // namespace nusmpbic
