#ifndef RLS2_LINEAR_HPP
#define RLS2_LINEAR_HPP

// Linear specialization: one linear_feature kernel per input feature. The
// two-layer predictor collapses to f(x) = a'x with a_j = d_j s_j z_j and
// z = H'c, H the l x N matrix of training inputs. Features with d_j = 0 get
// exactly zero weight.

#include "rls2/common.hpp"
#include "rls2/kernels.hpp"
#include "rls2/rls2.hpp"

#include <ostream>
#include <vector>

namespace rls2 {

template <typename Scalar>
struct LinearRls2Model {
  Vector<Scalar> a;  // feature weights
  Vector<Scalar> z;  // H'c
  Vector<Scalar> d;  // kernel weight per feature (0 for features without a kernel)
  Vector<Scalar> s;  // scaling per feature (0 for features without a kernel)
  Scalar intercept = 0;
  std::vector<Index> selected;

  template <typename Derived>
  Vector<Scalar> predict(const Eigen::MatrixBase<Derived>& X) const {
    if (X.cols() != a.size()) throw Error("linear model: input has wrong feature count");
    return (X * a).array() + intercept;
  }
};

namespace detail {

template <typename Scalar>
std::vector<Index> selected_features(const Vector<Scalar>& d) {
  std::vector<Index> sel;
  for (Index j = 0; j < d.size(); ++j)
    if (d(j) > Scalar(kSupportThreshold)) sel.push_back(j);
  return sel;
}

}  // namespace detail

/// Reads the linear weights off a fit made on an uncentered bank of
/// linear_feature kernels (each feature at most once).
template <typename Scalar>
LinearRls2Model<Scalar> extract_linear_model(const Rls2Fit<Scalar>& fit, const KernelBank<Scalar>& bank,
                                             Scalar intercept = 0) {
  if (bank.centered()) throw Error("extract_linear_model: centered banks have no plain linear form");
  const Index N = bank.train_X.cols();
  LinearRls2Model<Scalar> model;
  model.d = Vector<Scalar>::Zero(N);
  model.s = Vector<Scalar>::Zero(N);
  std::vector<bool> seen(static_cast<std::size_t>(N), false);
  for (Index k = 0; k < bank.size(); ++k) {
    const auto& spec = bank.specs[static_cast<std::size_t>(k)];
    if (spec.kind != KernelKind::linear_feature)
      throw Error("extract_linear_model: bank contains non-linear kernel " + spec.describe());
    if (seen[static_cast<std::size_t>(spec.feature)])
      throw Error("extract_linear_model: feature " + std::to_string(spec.feature) + " appears twice");
    seen[static_cast<std::size_t>(spec.feature)] = true;
    model.d(spec.feature) = fit.d(k);
    model.s(spec.feature) = bank.s(k);
  }
  model.z = bank.train_X.transpose() * fit.c;
  model.a = Vector<Scalar>::Zero(N);
  model.selected = detail::selected_features(model.d);
  for (Index j : model.selected) model.a(j) = model.d(j) * model.s(j) * model.z(j);
  model.intercept = intercept;
  return model;
}

template <typename Scalar>
struct ScaledRidge {
  std::vector<Index> selected;
  Vector<Scalar> z;  // coefficients on the selected features
};

namespace detail {

// Columns of H restricted to the selected features, each scaled by s_j d_j.
template <typename Scalar, typename DX>
Matrix<Scalar> scaled_selection(const Eigen::MatrixBase<DX>& X, const Vector<Scalar>& gamma,
                                const std::vector<Index>& sel) {
  Matrix<Scalar> Ht(X.rows(), static_cast<Index>(sel.size()));
  for (std::size_t c = 0; c < sel.size(); ++c)
    Ht.col(static_cast<Index>(c)) = X.col(sel[c]) * gamma(static_cast<Index>(c));
  return Ht;
}

template <typename Scalar>
Vector<Scalar> selected_gamma(const Vector<Scalar>& d, const Vector<Scalar>& s, const std::vector<Index>& sel) {
  Vector<Scalar> g(static_cast<Index>(sel.size()));
  for (std::size_t c = 0; c < sel.size(); ++c) g(static_cast<Index>(c)) = s(sel[c]) * d(sel[c]);
  return g;
}

}  // namespace detail

/// Approximate degrees of freedom tr(Ht (Ht'Ht + lambda G)^-1 Ht') with
/// G = diag(s_j d_j) and Ht = H G over the selected features. lambda = 0 is
/// accepted when Ht'Ht is nonsingular.
template <typename Scalar, typename DX>
Scalar degrees_of_freedom(const Eigen::MatrixBase<DX>& X, const Vector<Scalar>& d, const Vector<Scalar>& s,
                          Scalar lambda) {
  if (d.size() != X.cols() || s.size() != X.cols()) throw Error("degrees_of_freedom: dimension mismatch");
  if (lambda < Scalar(0)) throw Error("degrees_of_freedom: lambda must be non-negative");
  const auto sel = detail::selected_features(d);
  if (sel.empty()) return Scalar(0);
  const Vector<Scalar> gamma = detail::selected_gamma(d, s, sel);
  const Matrix<Scalar> Ht = detail::scaled_selection<Scalar>(X, gamma, sel);
  const Matrix<Scalar> gram = Ht.transpose() * Ht;
  Matrix<Scalar> system = gram;
  system.diagonal() += lambda * gamma;
  Eigen::LLT<Matrix<Scalar>> llt(system);
  if (llt.info() != Eigen::Success) throw Error("degrees_of_freedom: singular system");
  return llt.solve(gram).trace();
}

/// z = (Ht'Ht + lambda G)^-1 Ht' y for fixed d. Predictions are Ht z.
template <typename Scalar, typename DX, typename DY>
ScaledRidge<Scalar> scaled_ridge_solution(const Eigen::MatrixBase<DX>& X, const Vector<Scalar>& d,
                                          const Vector<Scalar>& s, const Eigen::MatrixBase<DY>& y, Scalar lambda) {
  if (!(lambda > Scalar(0))) throw Error("scaled_ridge_solution: lambda must be positive");
  if (d.size() != X.cols() || s.size() != X.cols() || y.size() != X.rows())
    throw Error("scaled_ridge_solution: dimension mismatch");
  ScaledRidge<Scalar> out;
  out.selected = detail::selected_features(d);
  if (out.selected.empty()) return out;
  const Vector<Scalar> gamma = detail::selected_gamma(d, s, out.selected);
  const Matrix<Scalar> Ht = detail::scaled_selection<Scalar>(X, gamma, out.selected);
  Matrix<Scalar> system = Ht.transpose() * Ht;
  system.diagonal() += lambda * gamma;
  out.z = system.ldlt().solve(Ht.transpose() * y);
  return out;
}

/// In-sample predictions Ht z of a scaled ridge solution.
template <typename Scalar, typename DX>
Vector<Scalar> scaled_ridge_predictions(const Eigen::MatrixBase<DX>& X, const Vector<Scalar>& d,
                                        const Vector<Scalar>& s, const ScaledRidge<Scalar>& ridge) {
  if (ridge.selected.empty()) return Vector<Scalar>::Zero(X.rows());
  const Vector<Scalar> gamma = detail::selected_gamma(d, s, ridge.selected);
  return detail::scaled_selection<Scalar>(X, gamma, ridge.selected) * ridge.z;
}

struct CoefficientRow {
  double lambda = 0.0;
  double df = 0.0;
  VectorXd a;
};

/// lambda,df,a_1..a_N
void write_coefficient_csv(std::ostream& os, const std::vector<CoefficientRow>& rows);

}  // namespace rls2

#endif  // RLS2_LINEAR_HPP
