#ifndef RLS2_KERNELS_HPP
#define RLS2_KERNELS_HPP

#include "rls2/common.hpp"

#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rls2 {

enum class KernelKind { linear_feature, polynomial, gaussian };

/// Basis kernel on vectors. Feature indices are 0-based. `features` empty
/// means the kernel sees every feature.
///
///   linear_feature(j):     k(a,b) = a_j b_j
///   polynomial(n, S):      k(a,b) = (1 + a_S . b_S)^n
///   gaussian(gamma, S):    k(a,b) = exp(-gamma |a_S - b_S|^2)
struct BasisKernelSpec {
  KernelKind kind = KernelKind::linear_feature;
  Index feature = 0;
  int degree = 1;
  double gamma = 1.0;
  std::vector<Index> features;

  static BasisKernelSpec linear(Index j) {
    BasisKernelSpec s;
    s.kind = KernelKind::linear_feature;
    s.feature = j;
    return s;
  }
  static BasisKernelSpec polynomial(int degree, std::vector<Index> features = {}) {
    BasisKernelSpec s;
    s.kind = KernelKind::polynomial;
    s.degree = degree;
    s.features = std::move(features);
    return s;
  }
  static BasisKernelSpec gaussian(double gamma, std::vector<Index> features = {}) {
    BasisKernelSpec s;
    s.kind = KernelKind::gaussian;
    s.gamma = gamma;
    s.features = std::move(features);
    return s;
  }

  bool all_features() const { return features.empty(); }

  /// Throws Error on a bad degree, width or feature index.
  void validate(Index n_features) const;
  std::string describe() const;

  friend bool operator==(const BasisKernelSpec&, const BasisKernelSpec&) = default;
};

enum class ScalingKind {
  unit,
  trace_inverse,           // s = 1 / sum_i k(x_i, x_i)
  trace_inverse_centered,  // same, after centering the kernel in feature space
  feature_norm_inverse,    // s = 1 / |x^j|^2, linear_feature kernels only
  fisher,                  // s = 1 / (var_+ + var_-), linear_feature kernels only
  fisher_sqrt,             // s = (var_+ + var_-)^(-1/2), linear_feature kernels only
  fisher_nonlinear,        // within-class scatter in feature space, any kernel
};

struct ScalingRule {
  ScalingKind kind = ScalingKind::trace_inverse;
  // Extends the trace / norm sums over the test inputs given to build_bank.
  bool transductive = false;

  bool centered() const { return kind == ScalingKind::trace_inverse_centered; }
  bool needs_labels() const {
    return kind == ScalingKind::fisher || kind == ScalingKind::fisher_sqrt || kind == ScalingKind::fisher_nonlinear;
  }
};

std::string to_string(ScalingKind kind);
ScalingKind scaling_from_string(const std::string& name);

/// Feature-space centering statistics of a training Gram matrix.
template <typename Scalar>
struct Centering {
  Vector<Scalar> column_means;  // (1/l) sum_i K(x_i, x_j)
  Scalar grand_mean = 0;        // (1/l^2) sum_ij K(x_i, x_j)
};

/// m basis kernels evaluated on the training inputs: R[k] = s[k] * K_k,
/// with K_k centered in feature space when the rule asks for it.
template <typename Scalar>
struct KernelBank {
  std::vector<Matrix<Scalar>> R;
  Vector<Scalar> s;
  std::vector<BasisKernelSpec> specs;
  Matrix<Scalar> train_X;
  std::vector<Centering<Scalar>> centering;  // empty when uncentered
  ScalingRule rule;

  Index size() const { return static_cast<Index>(R.size()); }
  Index samples() const { return train_X.rows(); }
  bool centered() const { return !centering.empty(); }
};

using KernelBankd = KernelBank<double>;

namespace detail {

template <typename Scalar, typename A, typename B>
Scalar subset_dot(const BasisKernelSpec& spec, const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if (spec.all_features()) return static_cast<Scalar>(a.dot(b));
  Scalar acc = 0;
  for (Index j : spec.features) acc += static_cast<Scalar>(a(j)) * static_cast<Scalar>(b(j));
  return acc;
}

template <typename Scalar, typename A, typename B>
Scalar subset_sqdist(const BasisKernelSpec& spec, const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  Scalar acc = 0;
  if (spec.all_features()) {
    for (Index j = 0; j < a.size(); ++j) {
      const Scalar diff = static_cast<Scalar>(a(j)) - static_cast<Scalar>(b(j));
      acc += diff * diff;
    }
  } else {
    for (Index j : spec.features) {
      const Scalar diff = static_cast<Scalar>(a(j)) - static_cast<Scalar>(b(j));
      acc += diff * diff;
    }
  }
  return acc;
}

}  // namespace detail

template <typename Scalar = double, typename A, typename B>
Scalar eval_kernel(const BasisKernelSpec& spec, const Eigen::MatrixBase<A>& x1, const Eigen::MatrixBase<B>& x2) {
  using std::exp;
  using std::pow;
  switch (spec.kind) {
    case KernelKind::linear_feature:
      return static_cast<Scalar>(x1(spec.feature)) * static_cast<Scalar>(x2(spec.feature));
    case KernelKind::polynomial: {
      const Scalar base = Scalar(1) + detail::subset_dot<Scalar>(spec, x1, x2);
      Scalar out = base;
      for (int p = 1; p < spec.degree; ++p) out *= base;
      return out;
    }
    case KernelKind::gaussian:
      return exp(-static_cast<Scalar>(spec.gamma) * detail::subset_sqdist<Scalar>(spec, x1, x2));
  }
  return Scalar(0);
}

/// Symmetric Gram matrix of one basis kernel over the rows of X.
template <typename Scalar, typename Derived>
Matrix<Scalar> gram(const BasisKernelSpec& spec, const Eigen::MatrixBase<Derived>& X) {
  const Index n = X.rows();
  Matrix<Scalar> K(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = j; i < n; ++i) {
      const Scalar v = eval_kernel<Scalar>(spec, X.row(i).transpose(), X.row(j).transpose());
      K(i, j) = v;
      K(j, i) = v;
    }
  }
  return K;
}

/// Polynomial degrees 1..3 and ten Gaussian widths 10^-3..10^3 (log-spaced,
/// endpoints included), on every single feature and on all features jointly:
/// 13 (N + 1) kernels.
std::vector<BasisKernelSpec> default_benchmark_specs(Index n_features);

/// One linear_feature kernel per input feature.
std::vector<BasisKernelSpec> linear_feature_specs(Index n_features);

namespace detail {

template <typename Scalar>
Centering<Scalar> centering_of(const Matrix<Scalar>& K) {
  Centering<Scalar> c;
  const Scalar n = static_cast<Scalar>(K.rows());
  c.column_means = K.colwise().sum().transpose() / n;
  c.grand_mean = c.column_means.sum() / n;
  return c;
}

// Positive denominators below this fraction of their reference magnitude are
// rounding noise from a constant feature, not a real kernel.
template <typename Scalar>
std::optional<Scalar> invert_denominator(Scalar denom, Scalar reference) {
  using std::abs;
  using std::isfinite;
  const Scalar floor = Scalar(1e-12) * abs(reference);
  if (!isfinite(denom) || !(denom > floor) || !(denom > Scalar(0))) return std::nullopt;
  return Scalar(1) / denom;
}

template <typename Scalar, typename Derived, typename Labels>
std::optional<Scalar> fisher_denominator_ratio(const BasisKernelSpec& spec, const Eigen::MatrixBase<Derived>& X,
                                               const Eigen::MatrixBase<Labels>& y, bool nonlinear,
                                               const Matrix<Scalar>* K) {
  // Returns 1 / (within-class scatter) with population (1/l_c) normalization.
  Scalar denom = 0;
  Scalar reference = 0;
  for (const double label : {1.0, -1.0}) {
    std::vector<Index> members;
    for (Index i = 0; i < y.size(); ++i)
      if (static_cast<double>(y(i)) == label) members.push_back(i);
    if (members.empty()) throw Error("fisher scaling needs both classes present in the training labels");
    const Scalar lc = static_cast<Scalar>(members.size());
    if (!nonlinear) {
      Scalar mean = 0;
      for (Index i : members) mean += static_cast<Scalar>(X(i, spec.feature));
      mean /= lc;
      Scalar var = 0;
      for (Index i : members) {
        const Scalar diff = static_cast<Scalar>(X(i, spec.feature)) - mean;
        var += diff * diff;
        reference += static_cast<Scalar>(X(i, spec.feature)) * static_cast<Scalar>(X(i, spec.feature));
      }
      denom += var / lc;
    } else {
      Scalar diag = 0;
      Scalar block = 0;
      for (Index i : members) {
        diag += (*K)(i, i);
        for (Index j : members) block += (*K)(i, j);
      }
      denom += diag / lc - block / (lc * lc);
      reference += diag;
    }
  }
  return invert_denominator<Scalar>(denom, reference / static_cast<Scalar>(y.size()));
}

// Scaling from a precomputed training Gram matrix. nullopt marks a degenerate kernel.
template <typename Scalar, typename Derived, typename Labels>
std::optional<Scalar> scaling_from_gram(const ScalingRule& rule, const BasisKernelSpec& spec,
                                        const Eigen::MatrixBase<Derived>& X, const Eigen::MatrixBase<Labels>& y,
                                        const Matrix<Scalar>* test_X, const Matrix<Scalar>& K) {
  using std::sqrt;
  if (rule.transductive && test_X == nullptr) throw Error("transductive scaling needs test inputs");
  if (rule.transductive && rule.needs_labels()) throw Error("fisher scalings cannot be transductive");
  if ((rule.kind == ScalingKind::feature_norm_inverse || rule.kind == ScalingKind::fisher ||
       rule.kind == ScalingKind::fisher_sqrt) &&
      spec.kind != KernelKind::linear_feature)
    throw Error("scaling rule '" + to_string(rule.kind) + "' applies to linear_feature kernels only, got " +
                spec.describe());
  if (rule.needs_labels() && y.size() != X.rows()) throw Error("fisher scaling needs one label per example");

  switch (rule.kind) {
    case ScalingKind::unit:
      return Scalar(1);
    case ScalingKind::trace_inverse:
    case ScalingKind::feature_norm_inverse: {
      Scalar trace = K.trace();
      if (rule.transductive) {
        for (Index i = 0; i < test_X->rows(); ++i) {
          const auto row = test_X->row(i).transpose();
          trace += eval_kernel<Scalar>(spec, row, row);
        }
      }
      return invert_denominator<Scalar>(trace, trace);
    }
    case ScalingKind::trace_inverse_centered: {
      const Centering<Scalar> c = centering_of(K);
      const Scalar n = static_cast<Scalar>(K.rows());
      Scalar reference = K.trace();
      Scalar trace = K.trace() - n * c.grand_mean;
      if (rule.transductive) {
        for (Index t = 0; t < test_X->rows(); ++t) {
          const auto row = test_X->row(t).transpose();
          Scalar cross_mean = 0;
          for (Index i = 0; i < X.rows(); ++i) cross_mean += eval_kernel<Scalar>(spec, X.row(i).transpose(), row);
          cross_mean /= n;
          const Scalar self = eval_kernel<Scalar>(spec, row, row);
          trace += self - Scalar(2) * cross_mean + c.grand_mean;
          reference += self;
        }
      }
      return invert_denominator<Scalar>(trace, reference);
    }
    case ScalingKind::fisher:
      return fisher_denominator_ratio<Scalar>(spec, X, y, false, nullptr);
    case ScalingKind::fisher_sqrt: {
      const auto inv = fisher_denominator_ratio<Scalar>(spec, X, y, false, nullptr);
      if (!inv) return std::nullopt;
      return sqrt(*inv);
    }
    case ScalingKind::fisher_nonlinear:
      return fisher_denominator_ratio<Scalar>(spec, X, y, true, &K);
  }
  return std::nullopt;
}

}  // namespace detail

/// Scaling factor s_k of one basis kernel, or nullopt for a degenerate kernel
/// (zero trace, zero feature norm, zero within-class scatter). `y` is only
/// read by the fisher rules and may be empty otherwise.
template <typename Scalar = double>
std::optional<Scalar> scaling_value(const ScalingRule& rule, const BasisKernelSpec& spec, const Matrix<Scalar>& X,
                                    const Vector<Scalar>& y, const Matrix<Scalar>* test_X = nullptr) {
  spec.validate(X.cols());
  const Matrix<Scalar> K = gram<Scalar>(spec, X);
  return detail::scaling_from_gram<Scalar>(rule, spec, X, y, test_X, K);
}

/// Builds the scaled bank. Degenerate kernels are dropped with a warning;
/// an error is raised when nothing survives.
template <typename Scalar>
KernelBank<Scalar> build_bank(const Matrix<Scalar>& X, const Vector<Scalar>& y,
                              const std::vector<BasisKernelSpec>& specs, const ScalingRule& rule,
                              const Matrix<Scalar>* test_X = nullptr);

/// Alignment y' R y between a kernel matrix and the outputs.
template <typename MatDerived, typename VecDerived>
typename MatDerived::Scalar alignment(const Eigen::MatrixBase<MatDerived>& R, const Eigen::MatrixBase<VecDerived>& y) {
  if (R.rows() != y.size() || R.cols() != y.size()) throw Error("alignment: dimension mismatch");
  return y.dot(R * y);
}

/// Entries s * k(x_j, x*) for every training row x_j, centered with the
/// training statistics when `centering` is given.
template <typename Scalar, typename Derived>
Vector<Scalar> cross_kernel_row(const BasisKernelSpec& spec, Scalar s, const Matrix<Scalar>& train_X,
                                const Eigen::MatrixBase<Derived>& x_star,
                                const Centering<Scalar>* centering = nullptr) {
  if (x_star.size() != train_X.cols()) throw Error("cross_kernel_row: input has wrong feature count");
  const Index n = train_X.rows();
  Vector<Scalar> row(n);
  for (Index j = 0; j < n; ++j) row(j) = eval_kernel<Scalar>(spec, train_X.row(j).transpose(), x_star);
  if (centering != nullptr) {
    const Scalar self_mean = row.mean();
    row.array() -= centering->column_means.array() + (self_mean - centering->grand_mean);
  }
  return s * row;
}

template <typename Scalar>
KernelBank<Scalar> build_bank(const Matrix<Scalar>& X, const Vector<Scalar>& y,
                              const std::vector<BasisKernelSpec>& specs, const ScalingRule& rule,
                              const Matrix<Scalar>* test_X) {
  if (specs.empty()) throw Error("build_bank: no kernel specs");
  if (X.rows() < 1) throw Error("build_bank: no training examples");
  if (rule.transductive && test_X == nullptr) throw Error("transductive scaling needs test inputs");
  if (test_X != nullptr && test_X->cols() != X.cols()) throw Error("build_bank: test inputs have wrong feature count");

  KernelBank<Scalar> bank;
  bank.train_X = X;
  bank.rule = rule;
  std::vector<Scalar> scalings;
  std::vector<std::string> dropped;
  for (const auto& spec : specs) {
    spec.validate(X.cols());
    Matrix<Scalar> K = gram<Scalar>(spec, X);
    const auto s = detail::scaling_from_gram<Scalar>(rule, spec, X, y, test_X, K);
    if (!s) {
      dropped.push_back(spec.describe());
      continue;
    }
    if (rule.centered()) {
      Centering<Scalar> c = detail::centering_of(K);
      for (Index j = 0; j < K.cols(); ++j)
        for (Index i = 0; i < K.rows(); ++i) K(i, j) += c.grand_mean - (c.column_means(i) + c.column_means(j));
      bank.centering.push_back(std::move(c));
    }
    K *= *s;
    bank.R.push_back(std::move(K));
    bank.specs.push_back(spec);
    scalings.push_back(*s);
  }
  for (const auto& name : dropped) warn("dropping degenerate kernel " + name);
  if (bank.R.empty()) throw Error("build_bank: every kernel is degenerate");
  bank.s = Eigen::Map<const Vector<Scalar>>(scalings.data(), static_cast<Index>(scalings.size()));
  return bank;
}

/// JSON kernel spec file: {"format": "rls2-kernels", "version": 1, "kernels": [...]}.
std::vector<BasisKernelSpec> parse_kernel_specs(const std::string& text);
std::vector<BasisKernelSpec> read_kernel_specs(const std::filesystem::path& path);
std::string format_kernel_specs(const std::vector<BasisKernelSpec>& specs);
void write_kernel_specs(const std::filesystem::path& path, const std::vector<BasisKernelSpec>& specs);

}  // namespace rls2

#endif  // RLS2_KERNELS_HPP
