#ifndef RLS2_RLS2_HPP
#define RLS2_RLS2_HPP

// Regularized least squares with two layers:
//
//   min_{c, d in simplex}  1/2 |y - R(d) c|^2 + lambda/2 c' R(d) c,
//   R(d) = sum_k d_k R^k,
//
// solved by alternating an exact c-step, (R(d) + lambda I) c = y, with an
// exact d-step, min_{d in simplex} |V d - u|^2 where V = [R^1 c ... R^m c]
// and u = y - lambda c / 2.

#include "rls2/common.hpp"
#include "rls2/kernels.hpp"
#include "rls2/simplex_ls.hpp"

#include <chrono>
#include <cmath>
#include <optional>
#include <ostream>
#include <sstream>
#include <vector>

namespace rls2 {

/// sum_k d_k R^k over the kernels with d_k above the support threshold.
template <typename Scalar, typename DD>
Matrix<Scalar> assemble_R(const KernelBank<Scalar>& bank, const Eigen::MatrixBase<DD>& d) {
  if (d.size() != bank.size()) throw Error("assemble_R: weight vector length differs from bank size");
  const Index n = bank.samples();
  Matrix<Scalar> R = Matrix<Scalar>::Zero(n, n);
  for (Index k = 0; k < bank.size(); ++k)
    if (d(k) > Scalar(kSupportThreshold)) R.noalias() += d(k) * bank.R[static_cast<std::size_t>(k)];
  return R;
}

/// R(d) c without forming R(d).
template <typename Scalar, typename DC, typename DD>
Vector<Scalar> apply_R(const KernelBank<Scalar>& bank, const Eigen::MatrixBase<DC>& c, const Eigen::MatrixBase<DD>& d) {
  Vector<Scalar> out = Vector<Scalar>::Zero(bank.samples());
  for (Index k = 0; k < bank.size(); ++k)
    if (d(k) > Scalar(kSupportThreshold)) out.noalias() += d(k) * (bank.R[static_cast<std::size_t>(k)] * c);
  return out;
}

template <typename Scalar>
struct CgResult {
  Vector<Scalar> c;
  Index iterations = 0;
  Scalar relative_residual = 0;
};

/// Conjugate gradient on (R + lambda I) c = y from c0 (zero when c0 is empty)
/// until |(R + lambda I) c - y| <= delta |y|. The stopping test is always made
/// on the true residual. Exceeding `max_iterations` (default 10 l) throws.
template <typename DR, typename DY>
CgResult<typename DR::Scalar> solve_c(const Eigen::MatrixBase<DR>& R, const Eigen::MatrixBase<DY>& y,
                                      typename DR::Scalar lambda, const Vector<typename DR::Scalar>& c0,
                                      double delta, Index max_iterations = 0) {
  using Scalar = typename DR::Scalar;
  using std::sqrt;
  const Index n = y.size();
  if (R.rows() != n || R.cols() != n) throw Error("solve_c: R must be l x l");
  if (!(lambda > Scalar(0))) throw Error("solve_c: lambda must be positive");
  if (!(delta > 0)) throw Error("solve_c: delta must be positive");
  const Index cap = max_iterations > 0 ? max_iterations : 10 * n;

  CgResult<Scalar> out;
  out.c = c0.size() == n ? c0 : Vector<Scalar>::Zero(n);
  const Scalar norm_y = y.norm();
  if (norm_y == Scalar(0)) {
    out.c.setZero();
    return out;
  }
  const Scalar target = Scalar(delta) * norm_y;
  auto apply = [&](const Vector<Scalar>& x) -> Vector<Scalar> { return R * x + lambda * x; };

  Vector<Scalar> r = y - apply(out.c);
  Scalar rr = r.squaredNorm();
  Vector<Scalar> p = r;
  while (sqrt(rr) > target) {
    if (out.iterations >= cap)
      throw Error("conjugate gradient did not reach residual " + std::to_string(static_cast<double>(delta)) +
                  " within " + std::to_string(cap) + " iterations");
    const Vector<Scalar> Ap = apply(p);
    const Scalar alpha = rr / p.dot(Ap);
    out.c += alpha * p;
    r -= alpha * Ap;
    const Scalar rr_next = r.squaredNorm();
    ++out.iterations;
    if (sqrt(rr_next) <= target) {
      // The recursive residual drifts; restart from the true one if they disagree.
      r = y - apply(out.c);
      rr = r.squaredNorm();
      p = r;
      continue;
    }
    p = r + (rr_next / rr) * p;
    rr = rr_next;
  }
  out.relative_residual = sqrt(rr) / norm_y;
  return out;
}

template <typename Scalar>
struct InitialPoint {
  Vector<Scalar> d;
  Index index = 0;
};

/// The large-lambda limit: d = e_i with i maximizing y' R^i y (first index on ties).
template <typename Scalar, typename DY>
InitialPoint<Scalar> init_d(const KernelBank<Scalar>& bank, const Eigen::MatrixBase<DY>& y) {
  if (bank.size() < 1) throw Error("init_d: empty bank");
  InitialPoint<Scalar> out;
  Scalar best = alignment(bank.R[0], y);
  for (Index k = 1; k < bank.size(); ++k) {
    const Scalar a = alignment(bank.R[static_cast<std::size_t>(k)], y);
    if (a > best) {
      best = a;
      out.index = k;
    }
  }
  out.d = Vector<Scalar>::Zero(bank.size());
  out.d(out.index) = Scalar(1);
  return out;
}

template <typename Scalar>
struct Subproblem {
  Matrix<Scalar> V;  // column k is R^k c
  Vector<Scalar> u;  // y - lambda c / 2
};

template <typename Scalar, typename DC, typename DY>
Subproblem<Scalar> build_subproblem(const KernelBank<Scalar>& bank, const Eigen::MatrixBase<DC>& c, Scalar lambda,
                                    const Eigen::MatrixBase<DY>& y) {
  if (c.size() != bank.samples() || y.size() != bank.samples()) throw Error("build_subproblem: dimension mismatch");
  Subproblem<Scalar> sp;
  sp.V.resize(bank.samples(), bank.size());
  for (Index k = 0; k < bank.size(); ++k) sp.V.col(k).noalias() = bank.R[static_cast<std::size_t>(k)] * c;
  sp.u = y - (lambda / Scalar(2)) * c;
  return sp;
}

/// 1/2 |y - R(d) c|^2 + lambda/2 c' R(d) c.
template <typename Scalar, typename DC, typename DD, typename DY>
Scalar objective(const KernelBank<Scalar>& bank, const Eigen::MatrixBase<DC>& c, const Eigen::MatrixBase<DD>& d,
                 Scalar lambda, const Eigen::MatrixBase<DY>& y) {
  if (c.size() != bank.samples() || y.size() != bank.samples()) throw Error("objective: dimension mismatch");
  const Vector<Scalar> Rc = apply_R(bank, c, d);
  return Scalar(0.5) * (y - Rc).squaredNorm() + Scalar(0.5) * lambda * c.dot(Rc);
}

struct FitOptions {
  double delta = 1e-2;        // relative residual of the c-system
  int max_outer = 200;
  double simplex_tol = 1e-8;  // relative to the gradient scale of each d-step
  double d_change_tol = 1e-10;
  // Slack allowed when checking that the objective never increases.
  double monotone_slack = 1e-10;
};

template <typename Scalar>
struct FitStart {
  Vector<Scalar> c;
  Vector<Scalar> d;
};

template <typename Scalar>
struct Rls2Fit {
  Vector<Scalar> c;
  Vector<Scalar> d;
  Scalar lambda = 0;
  std::vector<Index> active_set;
  Scalar objective = 0;
  int outer_iterations = 0;
  bool converged = false;
  Vector<Scalar> w;                      // sqrt(d_k / s_k)
  std::vector<Scalar> objective_history;  // starting point first, then one value per outer iteration
  Index cg_iterations = 0;
  Index simplex_iterations = 0;
};

namespace detail {

template <typename Scalar>
void finalize_fit(const KernelBank<Scalar>& bank, Rls2Fit<Scalar>& fit) {
  fit.active_set.clear();
  for (Index k = 0; k < fit.d.size(); ++k)
    if (fit.d(k) > Scalar(kSupportThreshold)) fit.active_set.push_back(k);
  fit.w = (fit.d.array() / bank.s.array()).sqrt().matrix();
}

// Zero out weights below the support threshold and restore sum(d) = 1.
template <typename Scalar>
void clean_weights(Vector<Scalar>& d) {
  for (Index k = 0; k < d.size(); ++k)
    if (d(k) <= Scalar(kSupportThreshold)) d(k) = Scalar(0);
  d /= d.sum();
}

}  // namespace detail

/// Alternating minimization. Without `start` it begins from the large-lambda
/// limit (c = 0, d = init_d). Stops once the current c still solves the
/// c-system for the updated d to relative residual delta, or d stops moving.
template <typename Scalar, typename DY>
Rls2Fit<Scalar> fit(const KernelBank<Scalar>& bank, const Eigen::MatrixBase<DY>& y_in, Scalar lambda,
                    const std::optional<FitStart<Scalar>>& start = {}, const FitOptions& options = {}) {
  using std::abs;
  const Vector<Scalar> y = y_in;
  const Index n = bank.samples();
  if (y.size() != n) throw Error("fit: target length differs from the number of training examples");
  if (!(lambda > Scalar(0))) throw Error("fit: lambda must be positive");

  Rls2Fit<Scalar> out;
  out.lambda = lambda;
  Vector<Scalar> d;
  Vector<Scalar> c;
  if (start) {
    if (start->d.size() != bank.size() || !on_simplex(start->d)) throw Error("fit: starting d is not on the simplex");
    if (start->c.size() != n) throw Error("fit: starting c has the wrong length");
    d = start->d;
    detail::clean_weights(d);
    c = start->c;
  } else {
    d = init_d(bank, y).d;
    c = Vector<Scalar>::Zero(n);
  }

  const Scalar norm_y = y.norm();
  Matrix<Scalar> R = assemble_R(bank, d);
  Scalar current = objective(bank, c, d, lambda, y);
  out.objective_history.push_back(current);
  auto slack = [&](Scalar value) { return Scalar(options.monotone_slack) * (Scalar(1) + abs(value)); };

  for (int iter = 1; iter <= options.max_outer; ++iter) {
    out.outer_iterations = iter;

    // c-step. An inexact CG solve may land above the previous objective;
    // tighten the residual until it does not.
    Vector<Scalar> c_prev = c;
    double delta = options.delta;
    auto cg = solve_c(R, y, lambda, c, delta);
    out.cg_iterations += cg.iterations;
    c = cg.c;
    Scalar after_c = objective(bank, c, d, lambda, y);
    while (after_c > current + slack(current) && delta > 1e-14) {
      delta = std::max(delta * 1e-3, 1e-14);
      cg = solve_c(R, y, lambda, c, delta);
      out.cg_iterations += cg.iterations;
      c = cg.c;
      after_c = objective(bank, c, d, lambda, y);
    }
    if (after_c > current + slack(current)) {
      c = c_prev;
      after_c = current;
    }

    // d-step.
    const Subproblem<Scalar> sp = build_subproblem(bank, c, lambda, y);
    const Scalar gradient_scale = Scalar(2) * sp.V.colwise().norm().maxCoeff() * sp.u.norm();
    SimplexLsOptions sopt;
    sopt.tol = options.simplex_tol * std::max(static_cast<double>(gradient_scale), 1e-300);
    const auto rep = solve_simplex_ls(sp.V, sp.u, std::optional<Vector<Scalar>>(d), sopt);
    out.simplex_iterations += rep.iterations;
    Vector<Scalar> d_next = rep.d;
    detail::clean_weights(d_next);

    const Scalar d_change = (d_next - d).template lpNorm<1>();
    d = std::move(d_next);
    R = assemble_R(bank, d);
    current = objective(bank, c, d, lambda, y);
    out.objective_history.push_back(current);

    const Scalar residual = (R * c + lambda * c - y).norm();
    if (residual <= Scalar(options.delta) * norm_y || d_change <= Scalar(options.d_change_tol)) {
      out.converged = true;
      break;
    }
  }

  out.c = std::move(c);
  out.d = std::move(d);
  out.objective = current;
  detail::finalize_fit(bank, out);
  return out;
}

/// n log-spaced values from hi down to lo, endpoints included. A single
/// value needs lo == hi.
inline std::vector<double> log_grid(double lo, double hi, int n) {
  if (n == 1 && lo == hi && lo > 0) return {hi};
  if (!(lo > 0) || !(hi > lo) || n < 2) throw Error("log_grid: need 0 < lo < hi and n >= 2, or lo == hi and n == 1");
  std::vector<double> out;
  for (int i = 0; i < n; ++i) out.push_back(std::pow(10.0, std::log10(hi) - (std::log10(hi) - std::log10(lo)) * i / (n - 1)));
  return out;
}

/// 30 values from 1e6 down to 1e-6.
inline std::vector<double> default_lambda_grid() { return log_grid(1e-6, 1e6, 30); }

struct PathDiagnostics {
  double lambda = 0.0;
  double objective = 0.0;
  Index n_kernels = 0;
  int outer_iterations = 0;
  double wall_seconds = 0.0;
};

template <typename Scalar>
struct RegPath {
  std::vector<Scalar> lambdas;
  std::vector<Rls2Fit<Scalar>> fits;
  std::vector<PathDiagnostics> diagnostics;
};

/// Fits a strictly decreasing lambda grid, warm-starting each fit from the previous one.
template <typename Scalar, typename DY>
RegPath<Scalar> fit_path(const KernelBank<Scalar>& bank, const Eigen::MatrixBase<DY>& y,
                         const std::vector<Scalar>& lambdas, const FitOptions& options = {}) {
  if (lambdas.empty()) throw Error("fit_path: empty lambda grid");
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] > Scalar(0))) throw Error("fit_path: lambda values must be positive");
    if (i > 0 && !(lambdas[i] < lambdas[i - 1])) throw Error("fit_path: lambda grid must be strictly decreasing");
  }
  RegPath<Scalar> path;
  path.lambdas = lambdas;
  std::optional<FitStart<Scalar>> start;
  for (const Scalar lambda : lambdas) {
    const auto t0 = std::chrono::steady_clock::now();
    Rls2Fit<Scalar> f;
    try {
      f = fit(bank, y, lambda, start, options);
    } catch (const Error& e) {
      std::ostringstream os;
      os.precision(17);
      os << "lambda = " << static_cast<double>(lambda) << ": " << e.what();
      throw Error(os.str());
    }
    const auto t1 = std::chrono::steady_clock::now();
    PathDiagnostics diag;
    diag.lambda = static_cast<double>(lambda);
    diag.objective = static_cast<double>(f.objective);
    diag.n_kernels = static_cast<Index>(f.active_set.size());
    diag.outer_iterations = f.outer_iterations;
    diag.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    start = FitStart<Scalar>{f.c, f.d};
    path.fits.push_back(std::move(f));
    path.diagnostics.push_back(diag);
  }
  return path;
}

/// lambda,objective,n_kernels,outer_iterations,wall_seconds. Without timing
/// the last column is written as NA so the file is reproducible.
void write_path_csv(std::ostream& os, const std::vector<PathDiagnostics>& diagnostics, bool timing);

}  // namespace rls2

#endif  // RLS2_RLS2_HPP
