#ifndef RLS2_SIMPLEX_LS_HPP
#define RLS2_SIMPLEX_LS_HPP

// Least squares over the standard simplex,
//
//   min  |V d - u|^2   s.t.  d >= 0,  sum(d) = 1,
//
// solved by sequential pairwise updates: each step moves mass from the
// support coordinate with the largest gradient to the coordinate with the
// smallest gradient, with an exact line search clipped to keep d >= 0.
// At a solution every support coordinate shares the same gradient value mu
// and every other coordinate has gradient >= mu.

#include "rls2/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <tuple>
#include <vector>

namespace rls2 {

struct SimplexLsOptions {
  double tol = 1e-10;        // on the KKT violation, see kkt_violation()
  Index max_iterations = 0;  // pair updates; 0 means 100 sweeps of m updates each
  bool shrinking = true;
  bool record_trace = false;
  Index cache_limit = 2000;  // V'V is cached while m <= cache_limit
};

struct SimplexTracePoint {
  Index iteration = 0;
  double objective = 0.0;
  double violation = 0.0;
};

template <typename Scalar>
struct SimplexLsReport {
  Vector<Scalar> d;
  Scalar objective = 0;
  Scalar kkt_violation = 0;
  Index iterations = 0;
  std::vector<Index> active_set;
  bool converged = false;
  std::vector<SimplexTracePoint> trace;
};

/// max over the support of g minus min over all of g, with g = 2 V'(V d - u),
/// clipped at zero. Zero exactly at a minimizer.
template <typename DV, typename DU, typename DD>
typename DV::Scalar kkt_violation(const Eigen::MatrixBase<DV>& V, const Eigen::MatrixBase<DU>& u,
                                  const Eigen::MatrixBase<DD>& d) {
  using Scalar = typename DV::Scalar;
  if (V.cols() != d.size() || V.rows() != u.size()) throw Error("kkt_violation: dimension mismatch");
  const Vector<Scalar> g = Scalar(2) * (V.transpose() * (V * d - u));
  Scalar top = -std::numeric_limits<Scalar>::infinity();
  for (Index i = 0; i < d.size(); ++i)
    if (d(i) > Scalar(0)) top = std::max(top, g(i));
  if (top == -std::numeric_limits<Scalar>::infinity()) return Scalar(0);
  return std::max(Scalar(0), top - g.minCoeff());
}

/// True when d is a (numerically) feasible point of the simplex.
template <typename DD>
bool on_simplex(const Eigen::MatrixBase<DD>& d, double sum_tol = 1e-9) {
  using std::abs;
  if (d.size() == 0) return false;
  if ((d.array() < 0).any()) return false;
  return abs(static_cast<double>(d.sum()) - 1.0) <= sum_tol;
}

namespace detail {

template <typename Scalar>
class PairwiseSimplexSolver {
 public:
  PairwiseSimplexSolver(const Matrix<Scalar>& V, const Vector<Scalar>& u, const SimplexLsOptions& options)
      : V_(V), u_(u), opt_(options), m_(V.cols()) {
    cached_ = m_ <= opt_.cache_limit;
    if (cached_) {
      Q_ = V_.transpose() * V_;
      b_ = V_.transpose() * u_;
    }
  }

  SimplexLsReport<Scalar> run(Vector<Scalar> d) {
    SimplexLsReport<Scalar> rep;
    const Index cap = opt_.max_iterations > 0 ? opt_.max_iterations : 100 * m_ * m_;
    d_ = std::move(d);
    shrunk_.assign(static_cast<std::size_t>(m_), false);
    full_gradient();
    const Index shrink_every = std::max<Index>(m_, 32);

    Index iter = 0;
    if (opt_.record_trace) rep.trace.push_back({0, static_cast<double>(direct_objective()), 0.0});
    for (;;) {
      auto [i, j, violation] = select_pair();
      if (!(violation > Scalar(opt_.tol))) {
        // Confirm on the renormalized point with a directly computed residual.
        d_ /= d_.sum();
        unshrink();
        std::tie(i, j, violation) = select_pair();
        if (!(violation > Scalar(opt_.tol)) && !(kkt_violation(V_, u_, d_) > Scalar(opt_.tol))) {
          rep.converged = true;
          break;
        }
      }
      if (iter >= cap) break;
      step(i, j);
      ++iter;
      if (opt_.shrinking && iter % shrink_every == 0) shrink();
      if (opt_.record_trace)
        rep.trace.push_back({iter, static_cast<double>(direct_objective()), static_cast<double>(violation)});
    }

    // Pairwise moves preserve the sum only up to rounding.
    if (!rep.converged) d_ /= d_.sum();
    rep.d = d_;
    rep.iterations = iter;
    rep.objective = direct_objective();
    rep.kkt_violation = kkt_violation(V_, u_, d_);
    for (Index k = 0; k < m_; ++k)
      if (d_(k) > Scalar(0)) rep.active_set.push_back(k);
    return rep;
  }

 private:
  Scalar direct_objective() const { return (V_ * d_ - u_).squaredNorm(); }

  void full_gradient() {
    if (cached_) {
      g_ = Scalar(2) * (Q_ * d_ - b_);
    } else {
      r_ = V_ * d_ - u_;
      g_ = Scalar(2) * (V_.transpose() * r_);
    }
  }

  std::tuple<Index, Index, Scalar> select_pair() const {
    Index i = -1;
    Index j = -1;
    for (Index k = 0; k < m_; ++k) {
      if (d_(k) > Scalar(0) && (i < 0 || g_(k) > g_(i))) i = k;
      if (!shrunk_[static_cast<std::size_t>(k)] && (j < 0 || g_(k) < g_(j))) j = k;
    }
    return {i, j, g_(i) - g_(j)};
  }

  void step(Index i, Index j) {
    const Scalar slope = g_(i) - g_(j);
    Scalar curvature;
    if (cached_)
      curvature = Scalar(2) * (Q_(i, i) + Q_(j, j) - Scalar(2) * Q_(i, j));
    else
      curvature = Scalar(2) * (V_.col(i) - V_.col(j)).squaredNorm();
    Scalar t = d_(i);
    if (curvature > Scalar(0)) t = std::min(t, slope / curvature);
    if (t >= d_(i)) {
      t = d_(i);
      d_(j) += t;
      d_(i) = Scalar(0);
    } else {
      d_(i) -= t;
      d_(j) += t;
    }
    if (cached_) {
      for (Index k = 0; k < m_; ++k)
        if (!shrunk_[static_cast<std::size_t>(k)]) g_(k) += Scalar(2) * t * (Q_(k, j) - Q_(k, i));
    } else {
      r_ += t * (V_.col(j) - V_.col(i));
      for (Index k = 0; k < m_; ++k)
        if (!shrunk_[static_cast<std::size_t>(k)]) g_(k) = Scalar(2) * V_.col(k).dot(r_);
    }
  }

  // Zero coordinates whose gradient sits above every support gradient cannot
  // receive mass at the current point; stop updating them until the final check.
  void shrink() {
    Scalar top = -std::numeric_limits<Scalar>::infinity();
    for (Index k = 0; k < m_; ++k)
      if (d_(k) > Scalar(0)) top = std::max(top, g_(k));
    for (Index k = 0; k < m_; ++k)
      if (d_(k) == Scalar(0) && g_(k) > top) shrunk_[static_cast<std::size_t>(k)] = true;
  }

  void unshrink() {
    shrunk_.assign(static_cast<std::size_t>(m_), false);
    full_gradient();
  }

  const Matrix<Scalar>& V_;
  const Vector<Scalar>& u_;
  SimplexLsOptions opt_;
  Index m_;
  bool cached_ = false;
  Matrix<Scalar> Q_;
  Vector<Scalar> b_;
  Vector<Scalar> d_;
  Vector<Scalar> g_;
  Vector<Scalar> r_;
  std::vector<bool> shrunk_;
};

}  // namespace detail

/// Solves min_{d in simplex} |V d - u|^2. Without a warm start the solver
/// begins at the best vertex. A run that hits the iteration cap returns its
/// last iterate with converged = false.
template <typename DV, typename DU>
SimplexLsReport<typename DV::Scalar> solve_simplex_ls(const Eigen::MatrixBase<DV>& V_in,
                                                      const Eigen::MatrixBase<DU>& u_in,
                                                      const std::optional<Vector<typename DV::Scalar>>& d0 = {},
                                                      const SimplexLsOptions& options = {}) {
  using Scalar = typename DV::Scalar;
  const Matrix<Scalar> V = V_in;
  const Vector<Scalar> u = u_in;
  const Index m = V.cols();
  if (m < 1) throw Error("solve_simplex_ls: need at least one column");
  if (V.rows() != u.size()) throw Error("solve_simplex_ls: V and u disagree on the number of rows");
  if (!(options.tol > 0)) throw Error("solve_simplex_ls: tolerance must be positive");
  if (!V.allFinite() || !u.allFinite()) throw Error("solve_simplex_ls: non-finite entries in V or u");

  Vector<Scalar> d;
  if (d0) {
    if (d0->size() != m || !on_simplex(*d0)) throw Error("solve_simplex_ls: warm start is not on the simplex");
    d = *d0 / d0->sum();
  } else {
    Index best = 0;
    Scalar best_val = std::numeric_limits<Scalar>::infinity();
    for (Index k = 0; k < m; ++k) {
      const Scalar val = (V.col(k) - u).squaredNorm();
      if (val < best_val) {
        best_val = val;
        best = k;
      }
    }
    d = Vector<Scalar>::Zero(m);
    d(best) = Scalar(1);
  }

  if (m == 1) {
    SimplexLsReport<Scalar> rep;
    rep.d = Vector<Scalar>::Ones(1);
    rep.objective = (V.col(0) - u).squaredNorm();
    rep.active_set = {0};
    rep.converged = true;
    if (options.record_trace) rep.trace.push_back({0, static_cast<double>(rep.objective), 0.0});
    return rep;
  }
  detail::PairwiseSimplexSolver<Scalar> solver(V, u, options);
  return solver.run(std::move(d));
}

/// Writes the trace as "iteration,objective,violation" CSV.
inline void write_trace_csv(std::ostream& os, const std::vector<SimplexTracePoint>& trace) {
  os << "iteration,objective,violation\n";
  os.precision(17);
  for (const auto& p : trace) os << p.iteration << ',' << p.objective << ',' << p.violation << '\n';
}

}  // namespace rls2

#endif  // RLS2_SIMPLEX_LS_HPP
