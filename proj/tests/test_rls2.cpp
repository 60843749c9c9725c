#include "rls2/rls2.hpp"
#include "testing.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace rls2;
using namespace rls2::testing;

namespace {

KernelBankd bank_of(std::vector<MatrixXd> mats) {
  KernelBankd bank;
  const Index l = mats.front().rows();
  bank.train_X = MatrixXd::Zero(l, 1);
  bank.s = VectorXd::Ones(static_cast<Index>(mats.size()));
  for (auto& M : mats) {
    bank.R.push_back(std::move(M));
    bank.specs.push_back(BasisKernelSpec::linear(0));
  }
  return bank;
}

double relative(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

using NoStart = std::optional<FitStart<double>>;

}  // namespace

TEST(AssembleR, Examples) {
  Rng rng(1);
  const KernelBankd bank = factor_bank(rng, 4, 3);
  EXPECT_EQ(assemble_R(bank, (VectorXd(3) << 1, 0, 0).finished()), bank.R[0]);
  const MatrixXd half = assemble_R(bank, (VectorXd(3) << 0.5, 0.5, 0).finished());
  EXPECT_LT((half - (bank.R[0] + bank.R[1]) / 2).cwiseAbs().maxCoeff(), 1e-15);
  const VectorXd d = simplex_point(rng, 3);
  const MatrixXd R = assemble_R(bank, d);
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 4; ++j) {
      double sum = 0.0;
      for (Index k = 0; k < 3; ++k) sum += d(k) * bank.R[static_cast<std::size_t>(k)](i, j);
      EXPECT_NEAR(R(i, j), sum, 1e-15);
    }
  const VectorXd c = normal_vector(rng, 4);
  EXPECT_LT((apply_R(bank, c, d) - R * c).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(SolveC, Examples) {
  const VectorXd y = (VectorXd(2) << 2, 4).finished();
  const auto zero = solve_c(MatrixXd::Zero(2, 2), y, 4.0, VectorXd(), 1e-12);
  EXPECT_LT((zero.c - y / 4.0).norm(), 1e-12);
  const auto ident = solve_c(MatrixXd::Identity(2, 2), y, 1.0, VectorXd(), 1e-12);
  EXPECT_LT((ident.c - (VectorXd(2) << 1, 2).finished()).norm(), 1e-12);
  const auto yzero = solve_c(MatrixXd::Identity(2, 2), VectorXd::Zero(2), 1.0, VectorXd(), 1e-2);
  EXPECT_EQ(yzero.c, VectorXd::Zero(2));
}

TEST(SolveC, MatchesDenseSolve) {
  Rng rng(2);
  for (int t = 0; t < 10; ++t) {
    const MatrixXd A = normal_matrix(rng, 5, 5);
    const MatrixXd R = A * A.transpose();
    const VectorXd y = normal_vector(rng, 5);
    const double lambda = log_uniform(rng, 1e-2, 1e2);
    const auto cg = solve_c(R, y, lambda, VectorXd(), 1e-12);
    const VectorXd dense = (R + lambda * MatrixXd::Identity(5, 5)).llt().solve(y);
    EXPECT_LE((cg.c - dense).norm(), 1e-8 * dense.norm());
    EXPECT_LE(cg.relative_residual, 1e-12);
  }
}

TEST(SolveC, StoppingRuleAndWarmStart) {
  Rng rng(3);
  const MatrixXd A = normal_matrix(rng, 30, 30);
  const MatrixXd R = A * A.transpose() / 30.0;
  const VectorXd y = normal_vector(rng, 30);
  const auto loose = solve_c(R, y, 0.1, VectorXd(), 1e-2);
  EXPECT_LE(((R + 0.1 * MatrixXd::Identity(30, 30)) * loose.c - y).norm(), 1e-2 * y.norm());
  const auto tight = solve_c(R, y, 0.1, VectorXd(), 1e-10);
  const auto warm = solve_c(R, y, 0.1, tight.c, 1e-10);
  EXPECT_EQ(warm.iterations, 0);
  EXPECT_THROW(solve_c(R, y, 0.0, VectorXd(), 1e-2), Error);
  EXPECT_THROW(solve_c(R, y, 1.0, VectorXd(), 0.0), Error);
  EXPECT_THROW(solve_c(R, y, 1e-9, VectorXd(), 1e-14, 1), Error);
}

TEST(InitD, AlignmentExamples) {
  const VectorXd y = (VectorXd(2) << 1, 0).finished();
  MatrixXd R1 = MatrixXd::Zero(2, 2);
  MatrixXd R2 = MatrixXd::Zero(2, 2);
  R1(0, 0) = 3;
  R2(0, 0) = 7;
  EXPECT_EQ(init_d(bank_of({R1, R2}), y).index, 1);
  EXPECT_EQ(init_d(bank_of({R1, R2}), y).d, (VectorXd(2) << 0, 1).finished());
  EXPECT_EQ(init_d(bank_of({R1, R1}), y).index, 0);
}

TEST(InitD, MatchesBruteForceScan) {
  Rng rng(4);
  for (int t = 0; t < 10; ++t) {
    const KernelBankd bank = factor_bank(rng, 8, 6);
    const VectorXd y = normal_vector(rng, 8);
    Index best = 0;
    double best_val = -1e300;
    for (Index k = 0; k < 6; ++k) {
      double v = 0.0;
      for (Index i = 0; i < 8; ++i)
        for (Index j = 0; j < 8; ++j) v += y(i) * bank.R[static_cast<std::size_t>(k)](i, j) * y(j);
      if (v > best_val) {
        best_val = v;
        best = k;
      }
    }
    EXPECT_EQ(init_d(bank, y).index, best);
  }
}

TEST(Subproblem, Examples) {
  Rng rng(5);
  const KernelBankd bank = factor_bank(rng, 6, 3);
  const VectorXd y = normal_vector(rng, 6);
  const auto zero = build_subproblem(bank, VectorXd::Zero(6).eval(), 2.0, y);
  EXPECT_EQ(zero.V, MatrixXd::Zero(6, 3));
  EXPECT_EQ(zero.u, y);

  const MatrixXd X = normal_matrix(rng, 6, 1);
  const auto lin = build_bank<double>(X, y, {BasisKernelSpec::linear(0)}, ScalingRule{ScalingKind::unit, false});
  const VectorXd c = normal_vector(rng, 6);
  const auto sp = build_subproblem(lin, c, 1.0, y);
  EXPECT_LT((sp.V.col(0) - X.col(0) * X.col(0).dot(c)).cwiseAbs().maxCoeff(), 1e-13);

  const auto full = build_subproblem(bank, c, 0.5, y);
  for (Index k = 0; k < 3; ++k)
    for (Index i = 0; i < 6; ++i) {
      double v = 0.0;
      for (Index j = 0; j < 6; ++j) v += bank.R[static_cast<std::size_t>(k)](i, j) * c(j);
      EXPECT_NEAR(full.V(i, k), v, 1e-14);
    }
  EXPECT_LT((full.u - (y - 0.25 * c)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Objective, Examples) {
  Rng rng(6);
  const KernelBankd bank = factor_bank(rng, 7, 3);
  const VectorXd y = normal_vector(rng, 7);
  const VectorXd d = simplex_point(rng, 3);
  EXPECT_DOUBLE_EQ(objective(bank, VectorXd::Zero(7).eval(), d, 0.3, y), 0.5 * y.squaredNorm());
  const VectorXd c = normal_vector(rng, 7);
  // Straight-line recomputation.
  MatrixXd R = MatrixXd::Zero(7, 7);
  for (Index k = 0; k < 3; ++k) R += d(k) * bank.R[static_cast<std::size_t>(k)];
  double fit = 0.0;
  double pen = 0.0;
  for (Index i = 0; i < 7; ++i) {
    double Rc = 0.0;
    for (Index j = 0; j < 7; ++j) Rc += R(i, j) * c(j);
    fit += (y(i) - Rc) * (y(i) - Rc);
    pen += c(i) * Rc;
  }
  EXPECT_NEAR(objective(bank, c, d, 0.3, y), 0.5 * fit + 0.15 * pen, 1e-12 * (fit + pen));
}

TEST(Objective, ReducedFormAtTheCOptimum) {
  Rng rng(7);
  for (int t = 0; t < 10; ++t) {
    const KernelBankd bank = kernel_bank(rng, 20, 5);
    const VectorXd y = normal_vector(rng, 20);
    const VectorXd d = simplex_point(rng, 5);
    const double lambda = log_uniform(rng, 1e-2, 1e1);
    const auto cg = solve_c(assemble_R(bank, d), y, lambda, VectorXd(), 1e-12);
    const double obj = objective(bank, cg.c, d, lambda, y);
    EXPECT_LE(std::abs(obj - 0.5 * lambda * y.dot(cg.c)), 1e-8 * (1.0 + obj));
  }
}

TEST(Objective, SubproblemOffsetDoesNotDependOnD) {
  Rng rng(8);
  const KernelBankd bank = kernel_bank(rng, 15, 6);
  const VectorXd y = normal_vector(rng, 15);
  const VectorXd c = normal_vector(rng, 15);
  const double lambda = 0.7;
  const auto sp = build_subproblem(bank, c, lambda, y);
  const double expected = 0.5 * lambda * c.dot(y) - lambda * lambda * c.squaredNorm() / 8.0;
  for (int p = 0; p < 5; ++p) {
    const VectorXd d = simplex_point(rng, 6);
    const double offset = objective(bank, c, d, lambda, y) - 0.5 * (sp.V * d - sp.u).squaredNorm();
    EXPECT_LE(relative(offset, expected), 1e-10);
  }
}

TEST(Fit, LargeLambdaConvergesInOneIteration) {
  Rng rng(9);
  for (int t = 0; t < 5; ++t) {
    const KernelBankd bank = kernel_bank(rng, 12, 5);
    const VectorXd y = normal_vector(rng, 12);
    const auto f = fit(bank, y, 1e9);
    EXPECT_EQ(f.outer_iterations, 1);
    EXPECT_TRUE(f.converged);
    EXPECT_EQ(f.d, init_d(bank, y).d);
    EXPECT_LE(f.c.norm(), 2.0 * y.norm() / 1e9);
    const auto path = fit_path(bank, y, std::vector<double>{1e9});
    EXPECT_EQ(path.fits.front().d, f.d);
    EXPECT_EQ(path.fits.front().outer_iterations, 1);
  }
}

TEST(Fit, SingleKernelIsKernelRidge) {
  Rng rng(10);
  const KernelBankd bank = kernel_bank(rng, 10, 1);
  const VectorXd y = normal_vector(rng, 10);
  FitOptions opt;
  opt.delta = 1e-12;
  const auto f = fit(bank, y, 0.05, NoStart{}, opt);
  EXPECT_EQ(f.d, VectorXd::Ones(1));
  const VectorXd ridge = (bank.R[0] + 0.05 * MatrixXd::Identity(10, 10)).llt().solve(y);
  EXPECT_LE((f.c - ridge).norm(), 1e-8 * ridge.norm());
}

TEST(Fit, RandomStartsReachTheSameObjective) {
  Rng rng(11);
  FitOptions opt;
  opt.delta = 1e-10;
  opt.max_outer = 5000;
  const KernelBankd bank = kernel_bank(rng, 20, 5);
  const VectorXd y = normal_vector(rng, 20);
  std::vector<double> objs;
  for (int r = 0; r < 3; ++r) {
    FitStart<double> start{normal_vector(rng, 20), simplex_point(rng, 5)};
    const auto f = fit(bank, y, 0.1, std::optional<FitStart<double>>(start), opt);
    EXPECT_TRUE(monotone(f.objective_history));
    objs.push_back(f.objective);
  }
  EXPECT_LE(relative(objs[1], objs[0]), 1e-4);
  EXPECT_LE(relative(objs[2], objs[0]), 1e-4);
}

TEST(Fit, ObjectiveHistoryIsMonotoneAndDIsOnTheSimplex) {
  Rng rng(12);
  for (int t = 0; t < 10; ++t) {
    const KernelBankd bank = kernel_bank(rng, uniform_int(rng, 5, 25), uniform_int(rng, 2, 10));
    const VectorXd y = normal_vector(rng, bank.samples());
    const auto f = fit(bank, y, log_uniform(rng, 1e-4, 1e2));
    EXPECT_TRUE(monotone(f.objective_history));
    EXPECT_TRUE(on_simplex(f.d));
    EXPECT_EQ(f.objective, f.objective_history.back());
    for (Index k : f.active_set) EXPECT_GT(f.d(k), kSupportThreshold);
    EXPECT_LT((f.w.array().square() * bank.s.array() - f.d.array()).abs().maxCoeff(), 1e-14);
  }
}

TEST(Fit, IterationCapReportsNonConvergence) {
  Rng rng(13);
  const KernelBankd bank = kernel_bank(rng, 20, 6);
  const VectorXd y = normal_vector(rng, 20);
  FitOptions opt;
  opt.max_outer = 1;
  opt.delta = 1e-12;
  opt.d_change_tol = 0.0;
  const auto f = fit(bank, y, 1e-3, NoStart{}, opt);
  EXPECT_EQ(f.outer_iterations, 1);
  EXPECT_FALSE(f.converged);
}

TEST(Fit, Errors) {
  Rng rng(14);
  const KernelBankd bank = kernel_bank(rng, 6, 2);
  const VectorXd y = normal_vector(rng, 6);
  EXPECT_THROW(fit(bank, y, 0.0), Error);
  EXPECT_THROW(fit(bank, VectorXd::Ones(5).eval(), 1.0), Error);
  FitStart<double> bad{VectorXd::Zero(6), VectorXd::Ones(2)};
  EXPECT_THROW(fit(bank, y, 1.0, std::optional<FitStart<double>>(bad)), Error);
}

TEST(FitPath, WarmStartMatchesColdFits) {
  Rng rng(15);
  const KernelBankd bank = kernel_bank(rng, 25, 8);
  const VectorXd y = normal_vector(rng, 25);
  FitOptions opt;
  opt.delta = 1e-8;
  opt.max_outer = 2000;
  const auto grid = log_grid(1e-3, 1e3, 7);
  const auto path = fit_path(bank, y, grid, opt);
  ASSERT_EQ(path.fits.size(), grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto cold = fit(bank, y, grid[i], NoStart{}, opt);
    EXPECT_LE(relative(path.fits[i].objective, cold.objective), 1e-4) << "lambda " << grid[i];
    EXPECT_EQ(path.diagnostics[i].lambda, grid[i]);
    EXPECT_EQ(path.diagnostics[i].n_kernels, static_cast<Index>(path.fits[i].active_set.size()));
  }
}

TEST(FitPath, GridValidationAndCsv) {
  Rng rng(16);
  const KernelBankd bank = kernel_bank(rng, 6, 2);
  const VectorXd y = normal_vector(rng, 6);
  EXPECT_THROW(fit_path(bank, y, std::vector<double>{1.0, 2.0}), Error);
  EXPECT_THROW(fit_path(bank, y, std::vector<double>{1.0, -1.0}), Error);
  EXPECT_THROW(fit_path(bank, y, std::vector<double>{}), Error);

  const auto grid = default_lambda_grid();
  ASSERT_EQ(grid.size(), 30u);
  EXPECT_DOUBLE_EQ(grid.front(), 1e6);
  EXPECT_DOUBLE_EQ(grid.back(), 1e-6);
  const auto path = fit_path(bank, y, grid);
  std::ostringstream a;
  std::ostringstream b;
  write_path_csv(a, path.diagnostics, false);
  write_path_csv(b, fit_path(bank, y, grid).diagnostics, false);
  const std::string text = a.str();
  EXPECT_EQ(text, b.str());
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 31);
  EXPECT_EQ(text.substr(0, text.find('\n')), "lambda,objective,n_kernels,outer_iterations,wall_seconds");
}

TEST(LogGrid, Shapes) {
  EXPECT_EQ(log_grid(2.0, 2.0, 1), std::vector<double>{2.0});
  const auto g = log_grid(1e-2, 1e2, 5);
  ASSERT_EQ(g.size(), 5u);
  EXPECT_DOUBLE_EQ(g[2], 1.0);
  EXPECT_THROW(log_grid(1.0, 0.5, 3), Error);
  EXPECT_THROW(log_grid(0.0, 1.0, 3), Error);
}
