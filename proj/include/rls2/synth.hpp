#ifndef RLS2_SYNTH_HPP
#define RLS2_SYNTH_HPP

// Noisy sparse linear target on random binary strings: bits are fair coin
// flips and y = x_1 + x_2 + x_3 + noise. Linear RLS2 with norm scaling should
// put all its kernel weight on the first three bits.

#include "rls2/common.hpp"
#include "rls2/rls2.hpp"

#include <cstdint>
#include <vector>

namespace rls2 {

struct BinaryStringsConfig {
  std::uint64_t seed = 1;
  int n_strings = 250;
  int n_bits = 100;
  int n_test = 100;  // the last n_test strings
  int n_train = 150; // taken from the front
  double sigma = 0.01;
  std::vector<double> lambdas = default_lambda_grid();
  FitOptions fit;
};

struct BinaryStringsData {
  MatrixXd X_train;
  VectorXd y_train;
  MatrixXd X_test;
  VectorXd y_test;
};

BinaryStringsData make_binary_strings(const BinaryStringsConfig& config);

struct BinaryStringsReport {
  std::vector<double> lambdas;
  std::vector<double> test_rmse;
  std::vector<double> df;
  std::size_t best = 0;
  double best_rmse = 0.0;
  VectorXd d_best;   // per-bit kernel weights at the best lambda
  VectorXd d_final;  // at the smallest lambda
  VectorXd a_best;   // linear weights at the best lambda
  std::vector<PathDiagnostics> diagnostics;
  std::vector<std::vector<double>> objective_histories;
};

/// Linear RLS2 (one kernel per bit, feature-norm scaling, no centering and no
/// intercept) along the lambda grid; best lambda by test RMSE.
BinaryStringsReport run_binary_strings(const BinaryStringsConfig& config);

}  // namespace rls2

#endif  // RLS2_SYNTH_HPP
