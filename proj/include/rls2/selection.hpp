#ifndef RLS2_SELECTION_HPP
#define RLS2_SELECTION_HPP

#include "rls2/common.hpp"
#include "rls2/data_io.hpp"
#include "rls2/kernels.hpp"
#include "rls2/rls2.hpp"

#include <cstdint>
#include <ostream>
#include <vector>

namespace rls2 {

enum class KernelSet { benchmark, linear, custom };

/// Everything needed to turn a training set into a fitted bank: which basis
/// kernels, how they are scaled, and the optimizer settings.
struct TrainingSettings {
  KernelSet kernels = KernelSet::benchmark;
  std::vector<BasisKernelSpec> custom_specs;
  ScalingRule scaling;
  FitOptions fit;

  std::vector<BasisKernelSpec> specs_for(Index n_features) const;
};

/// Bank over `train`, labels passed through for the fisher rules. With a
/// transductive rule `test_X` must be given.
KernelBankd make_bank(const Dataset& train, const TrainingSettings& settings, const MatrixXd* test_X = nullptr);

/// s_k K_k(x_new, x_j) for every kernel of the bank, as (n_new x l) blocks.
std::vector<MatrixXd> cross_kernel_blocks(const KernelBankd& bank, const MatrixXd& X_new);

/// sum_k d_k B_k c + intercept over the active kernels.
VectorXd predict_from_blocks(const std::vector<MatrixXd>& blocks, const VectorXd& c, const VectorXd& d,
                             double intercept);

/// Regression output centering: intercept = training mean of y. Classification has none.
double output_intercept(const Dataset& train);

enum class SelectionRule {
  one_standard_error,  // largest lambda within one SE of the best mean loss
  best,                // largest lambda attaining the best mean loss
};

/// Validation loss per lambda: mean squared error for regression,
/// misclassification rate for classification.
struct ValidationCurve {
  std::vector<double> lambdas;
  std::vector<double> mean_loss;
  std::vector<double> std_error;  // sample std over folds / sqrt(k)
  std::vector<std::vector<double>> fold_loss;  // [fold][lambda]
};

/// Runs a warm-started path on every fold. Transductive scaling uses the
/// validation inputs of each fold.
ValidationCurve cross_validate(const Dataset& ds, const TrainingSettings& settings, const std::vector<double>& lambdas,
                               const std::vector<Fold>& folds);

/// Index of the selected lambda on the curve.
std::size_t select_lambda(const ValidationCurve& curve, SelectionRule rule);

/// lambda,mean_loss,std_error
void write_curve_csv(std::ostream& os, const ValidationCurve& curve);

}  // namespace rls2

#endif  // RLS2_SELECTION_HPP
