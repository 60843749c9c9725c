#include "rls2/kernels.hpp"
#include "testing.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <filesystem>

using namespace rls2;
using namespace rls2::testing;

namespace {

Vector<double> vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

const ScalingRule kUnit{ScalingKind::unit, false};
const ScalingRule kTrace{ScalingKind::trace_inverse, false};

}  // namespace

TEST(EvalKernel, Examples) {
  EXPECT_EQ(eval_kernel(BasisKernelSpec::linear(1), vec({2, 3}), vec({5, 7})), 21.0);
  EXPECT_EQ(eval_kernel(BasisKernelSpec::polynomial(2), vec({1, 0}), vec({1, 0})), 4.0);
  EXPECT_EQ(eval_kernel(BasisKernelSpec::gaussian(0.01), vec({1, 2}), vec({1, 2})), 1.0);
}

TEST(EvalKernel, SubsetsAndDistances) {
  const auto x1 = vec({1, 2, 3});
  const auto x2 = vec({0, 2, 5});
  EXPECT_DOUBLE_EQ(eval_kernel(BasisKernelSpec::gaussian(0.5, {0, 2}), x1, x2), std::exp(-0.5 * 5.0));
  EXPECT_DOUBLE_EQ(eval_kernel(BasisKernelSpec::polynomial(3, {2}), x1, x2), std::pow(16.0, 3));
  EXPECT_DOUBLE_EQ(eval_kernel(BasisKernelSpec::polynomial(1), x1, x2), 1.0 + 19.0);
}

TEST(Spec, ValidateRejectsBadSpecs) {
  EXPECT_THROW(BasisKernelSpec::linear(3).validate(3), Error);
  EXPECT_THROW(BasisKernelSpec::polynomial(0).validate(3), Error);
  EXPECT_THROW(BasisKernelSpec::gaussian(-1.0).validate(3), Error);
  EXPECT_THROW(BasisKernelSpec::gaussian(1.0, {5}).validate(3), Error);
  EXPECT_NO_THROW(BasisKernelSpec::gaussian(1.0, {2}).validate(3));
}

TEST(BenchmarkSpecs, Counts) {
  EXPECT_EQ(default_benchmark_specs(1).size(), 26u);
  EXPECT_EQ(default_benchmark_specs(7).size(), 104u);
  EXPECT_EQ(default_benchmark_specs(13).size(), 182u);
}

TEST(BenchmarkSpecs, Composition) {
  const auto specs = default_benchmark_specs(2);
  // Per single feature then all features: degrees 1..3, then 10 widths.
  for (std::size_t block = 0; block < 3; ++block) {
    for (int p = 0; p < 3; ++p) {
      const auto& s = specs[block * 13 + static_cast<std::size_t>(p)];
      EXPECT_EQ(s.kind, KernelKind::polynomial);
      EXPECT_EQ(s.degree, p + 1);
    }
    const auto& first_rbf = specs[block * 13 + 3];
    const auto& last_rbf = specs[block * 13 + 12];
    EXPECT_DOUBLE_EQ(first_rbf.gamma, 1e-3);
    EXPECT_DOUBLE_EQ(last_rbf.gamma, 1e3);
  }
  EXPECT_EQ(specs[0].features, std::vector<Index>{0});
  EXPECT_EQ(specs[13].features, std::vector<Index>{1});
  EXPECT_TRUE(specs[26].features.empty());
}

TEST(Scaling, UnitAndTrace) {
  Rng rng(1);
  const MatrixXd X = normal_matrix(rng, 5, 2);
  const VectorXd none;
  const auto unit = build_bank<double>(X, none, default_benchmark_specs(2), kUnit);
  EXPECT_EQ(unit.s, VectorXd::Ones(unit.size()));
  EXPECT_DOUBLE_EQ(*scaling_value(kTrace, BasisKernelSpec::gaussian(0.3), X, none), 1.0 / 5.0);
}

TEST(Scaling, TransductiveTrace) {
  Rng rng(2);
  const MatrixXd X = normal_matrix(rng, 5, 2);
  const MatrixXd T = normal_matrix(rng, 5, 2);
  const ScalingRule rule{ScalingKind::trace_inverse, true};
  EXPECT_DOUBLE_EQ(*scaling_value(rule, BasisKernelSpec::gaussian(2.0), X, VectorXd(), &T), 1.0 / 10.0);
  EXPECT_THROW(scaling_value(rule, BasisKernelSpec::gaussian(2.0), X, VectorXd()), Error);
}

TEST(Scaling, FeatureNorm) {
  MatrixXd X(2, 1);
  X << 3, 4;
  const ScalingRule rule{ScalingKind::feature_norm_inverse, false};
  EXPECT_DOUBLE_EQ(*scaling_value(rule, BasisKernelSpec::linear(0), X, VectorXd()), 1.0 / 25.0);
  EXPECT_THROW(scaling_value(rule, BasisKernelSpec::polynomial(1), X, VectorXd()), Error);
}

TEST(Scaling, FisherRules) {
  // Class +1 has values {0, 1} (variance 1/4), class -1 has {0, sqrt 3} (variance 3/4).
  MatrixXd X(4, 1);
  X << 0, 1, 0, std::sqrt(3.0);
  const VectorXd y = vec({1, 1, -1, -1});
  const auto spec = BasisKernelSpec::linear(0);
  EXPECT_NEAR(*scaling_value(ScalingRule{ScalingKind::fisher, false}, spec, X, y), 1.0, 1e-15);
  EXPECT_NEAR(*scaling_value(ScalingRule{ScalingKind::fisher_sqrt, false}, spec, X, y), 1.0, 1e-15);
  // Doubling the feature quadruples the scatter.
  const MatrixXd X2 = 2.0 * X;
  EXPECT_NEAR(*scaling_value(ScalingRule{ScalingKind::fisher, false}, spec, X2, y), 0.25, 1e-15);
  EXPECT_NEAR(*scaling_value(ScalingRule{ScalingKind::fisher_sqrt, false}, spec, X2, y), 0.5, 1e-15);
  EXPECT_THROW(scaling_value(ScalingRule{ScalingKind::fisher, false}, spec, X, vec({1, 1, 1, 1})), Error);
}

TEST(Scaling, NonlinearFisherReducesToFisherOnLinearKernels) {
  Rng rng(4);
  const MatrixXd X = normal_matrix(rng, 12, 3);
  VectorXd y(12);
  for (Index i = 0; i < 12; ++i) y(i) = i % 3 == 0 ? 1.0 : -1.0;
  for (Index j = 0; j < 3; ++j) {
    const auto spec = BasisKernelSpec::linear(j);
    const double plain = *scaling_value(ScalingRule{ScalingKind::fisher, false}, spec, X, y);
    const double nl = *scaling_value(ScalingRule{ScalingKind::fisher_nonlinear, false}, spec, X, y);
    EXPECT_NEAR(nl, plain, 1e-12 * plain);
  }
}

TEST(Scaling, CenteredTraceMatchesExplicitCentering) {
  Rng rng(5);
  const MatrixXd X = normal_matrix(rng, 7, 2);
  const auto spec = BasisKernelSpec::polynomial(2);
  const MatrixXd K = gram<double>(spec, X);
  const MatrixXd C = MatrixXd::Identity(7, 7) - MatrixXd::Constant(7, 7, 1.0 / 7.0);
  const double expected = 1.0 / (C * K * C).trace();
  EXPECT_NEAR(*scaling_value(ScalingRule{ScalingKind::trace_inverse_centered, false}, spec, X, VectorXd()), expected,
              1e-12 * expected);
}

TEST(Scaling, TransductiveCenteredTraceUsesTrainingMean) {
  Rng rng(6);
  const MatrixXd X = normal_matrix(rng, 6, 2);
  const MatrixXd T = normal_matrix(rng, 3, 2);
  const auto spec = BasisKernelSpec::gaussian(0.7);
  // Squared feature-space distance of every point to the training mean.
  auto k = [&](const VectorXd& a, const VectorXd& b) { return eval_kernel(spec, a, b); };
  double grand = 0.0;
  for (Index i = 0; i < 6; ++i)
    for (Index j = 0; j < 6; ++j) grand += k(X.row(i), X.row(j));
  grand /= 36.0;
  double total = 0.0;
  for (const MatrixXd* M : {&X, &T})
    for (Index t = 0; t < M->rows(); ++t) {
      double cross = 0.0;
      for (Index i = 0; i < 6; ++i) cross += k(X.row(i), M->row(t));
      total += k(M->row(t), M->row(t)) - 2.0 * cross / 6.0 + grand;
    }
  const double s = *scaling_value(ScalingRule{ScalingKind::trace_inverse_centered, true}, spec, X, VectorXd(), &T);
  EXPECT_NEAR(s, 1.0 / total, 1e-12 / total);
}

TEST(BuildBank, DropsDegenerateKernels) {
  MatrixXd X(3, 2);
  X << 0, 1, 0, 2, 0, 3;
  std::vector<std::string> warnings;
  set_warning_handler([&](const std::string& m) { warnings.push_back(m); });
  const ScalingRule rule{ScalingKind::feature_norm_inverse, false};
  const auto bank = build_bank<double>(X, VectorXd(), linear_feature_specs(2), rule);
  EXPECT_EQ(bank.size(), 1);
  EXPECT_EQ(bank.specs[0].feature, 1);
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_THROW(build_bank<double>(X, VectorXd(), {BasisKernelSpec::linear(0)}, rule), Error);
  set_warning_handler(nullptr);
}

TEST(BuildBank, ScaledMatricesAreSymmetricPsdWithUnitTrace) {
  Rng rng(7);
  const MatrixXd X = normal_matrix(rng, 15, 2);
  for (const auto kind : {ScalingKind::trace_inverse, ScalingKind::trace_inverse_centered}) {
    const auto bank = build_bank<double>(X, VectorXd(), default_benchmark_specs(2), ScalingRule{kind, false});
    for (const auto& R : bank.R) {
      EXPECT_EQ(R, R.transpose());
      EXPECT_NEAR(R.trace(), 1.0, 1e-12);
      EXPECT_GT(Eigen::SelfAdjointEigenSolver<MatrixXd>(R).eigenvalues().minCoeff(), -1e-10);
    }
    if (kind == ScalingKind::trace_inverse_centered) {
      for (const auto& R : bank.R) EXPECT_LT(R.rowwise().sum().cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(BuildBank, TraceScalingIsScaleInvariantForLinearKernels) {
  Rng rng(8);
  const MatrixXd X = normal_matrix(rng, 9, 3);
  const auto a = build_bank<double>(X, VectorXd(), linear_feature_specs(3), kTrace);
  const MatrixXd X5 = 5.0 * X;
  const auto b = build_bank<double>(X5, VectorXd(), linear_feature_specs(3), kTrace);
  for (std::size_t k = 0; k < a.R.size(); ++k) EXPECT_LT((a.R[k] - b.R[k]).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Alignment, SquaredCosineUnderFeatureNormScaling) {
  MatrixXd X(3, 2);
  X << 1, 1, 2, -1, 3, 0;
  const VectorXd y = vec({2, 4, 6});  // parallel to feature 0
  const ScalingRule rule{ScalingKind::feature_norm_inverse, false};
  const auto bank = build_bank<double>(X, y, linear_feature_specs(2), rule);
  EXPECT_NEAR(alignment(bank.R[0], y) / y.squaredNorm(), 1.0, 1e-14);
  const double c = X.col(1).dot(y) / (X.col(1).norm() * y.norm());
  EXPECT_NEAR(alignment(bank.R[1], y) / y.squaredNorm(), c * c, 1e-14);

  MatrixXd P(2, 1);
  P << 1, -1;
  const auto ortho = build_bank<double>(P, vec({1, 1}), linear_feature_specs(1), rule);
  EXPECT_EQ(alignment(ortho.R[0], vec({1, 1})), 0.0);
}

TEST(Alignment, MatchesTripleLoop) {
  Rng rng(9);
  const MatrixXd A = normal_matrix(rng, 4, 4);
  const MatrixXd R = A * A.transpose();
  const VectorXd y = normal_vector(rng, 4);
  double loops = 0.0;
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 4; ++j) loops += y(i) * R(i, j) * y(j);
  EXPECT_NEAR(alignment(R, y), loops, 1e-12 * std::abs(loops));
}

TEST(CrossKernelRow, MatchesGramColumns) {
  Rng rng(10);
  const MatrixXd X = normal_matrix(rng, 6, 3);
  const auto bank = build_bank<double>(X, VectorXd(), default_benchmark_specs(3), kTrace);
  for (Index k = 0; k < bank.size(); k += 5) {
    const auto& spec = bank.specs[static_cast<std::size_t>(k)];
    const VectorXd row = cross_kernel_row(spec, bank.s(k), X, X.row(2).transpose());
    EXPECT_LT((row - bank.R[static_cast<std::size_t>(k)].col(2)).cwiseAbs().maxCoeff(), 1e-15);
  }
  const VectorXd x_star = normal_vector(rng, 3);
  const VectorXd lin = cross_kernel_row(BasisKernelSpec::linear(1), 0.5, X, x_star);
  EXPECT_LT((lin - 0.5 * X.col(1) * x_star(1)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(CrossKernelRow, CenteredRowMatchesExplicitCentering) {
  Rng rng(11);
  const MatrixXd X = normal_matrix(rng, 8, 2);
  const auto spec = BasisKernelSpec::gaussian(0.4);
  const auto bank = build_bank<double>(X, VectorXd(), {spec}, ScalingRule{ScalingKind::trace_inverse_centered, false});
  const VectorXd x_star = normal_vector(rng, 2);
  // Centered kernel with training statistics only, evaluated by loops.
  auto k = [&](const VectorXd& a, const VectorXd& b) { return eval_kernel(spec, a, b); };
  double grand = 0.0;
  VectorXd mean_j = VectorXd::Zero(8);
  for (Index i = 0; i < 8; ++i)
    for (Index j = 0; j < 8; ++j) {
      mean_j(j) += k(X.row(i), X.row(j)) / 8.0;
      grand += k(X.row(i), X.row(j)) / 64.0;
    }
  double mean_star = 0.0;
  for (Index i = 0; i < 8; ++i) mean_star += k(X.row(i), x_star) / 8.0;
  VectorXd expected(8);
  for (Index j = 0; j < 8; ++j) expected(j) = bank.s(0) * (k(X.row(j), x_star) - mean_j(j) - mean_star + grand);
  const VectorXd row = cross_kernel_row(spec, bank.s(0), X, x_star, &bank.centering[0]);
  EXPECT_LT((row - expected).cwiseAbs().maxCoeff(), 1e-14);
  // At a training point the centered row is a column of the centered bank matrix.
  const VectorXd at_train = cross_kernel_row(spec, bank.s(0), X, X.row(3).transpose(), &bank.centering[0]);
  EXPECT_LT((at_train - bank.R[0].col(3)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(SpecFile, RoundTrip) {
  std::vector<BasisKernelSpec> specs = default_benchmark_specs(2);
  specs.push_back(BasisKernelSpec::linear(1));
  specs.push_back(BasisKernelSpec::gaussian(0.1 + 1e-17, {0, 1}));
  const auto path = std::filesystem::temp_directory_path() / "rls2_test_specs.json";
  write_kernel_specs(path, specs);
  const auto back = read_kernel_specs(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back, specs);
  EXPECT_EQ(format_kernel_specs(back), format_kernel_specs(specs));
}

TEST(SpecFile, RejectsMalformedInput) {
  EXPECT_THROW(parse_kernel_specs("{"), Error);
  EXPECT_THROW(parse_kernel_specs(R"({"format":"other","version":1,"kernels":[]})"), Error);
  EXPECT_THROW(parse_kernel_specs(R"({"format":"rls2-kernels","version":1,"kernels":[{"kind":"cubic"}]})"), Error);
  const auto specs = parse_kernel_specs(
      R"({"format":"rls2-kernels","version":1,"kernels":[{"kind":"gaussian","gamma":0.5,"features":"all"}]})");
  ASSERT_EQ(specs.size(), 1u);
  EXPECT_EQ(specs[0].gamma, 0.5);
}

TEST(ScalingNames, RoundTrip) {
  for (const auto kind : {ScalingKind::unit, ScalingKind::trace_inverse, ScalingKind::trace_inverse_centered,
                          ScalingKind::feature_norm_inverse, ScalingKind::fisher, ScalingKind::fisher_sqrt,
                          ScalingKind::fisher_nonlinear})
    EXPECT_EQ(scaling_from_string(to_string(kind)), kind);
  EXPECT_THROW(scaling_from_string("bogus"), Error);
}
