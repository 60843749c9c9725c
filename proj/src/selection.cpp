#include "rls2/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rls2 {

std::vector<BasisKernelSpec> TrainingSettings::specs_for(Index n_features) const {
  switch (kernels) {
    case KernelSet::benchmark: return default_benchmark_specs(n_features);
    case KernelSet::linear: return linear_feature_specs(n_features);
    case KernelSet::custom: return custom_specs;
  }
  return {};
}

KernelBankd make_bank(const Dataset& train, const TrainingSettings& settings, const MatrixXd* test_X) {
  return build_bank<double>(train.X, train.y, settings.specs_for(train.features()), settings.scaling, test_X);
}

std::vector<MatrixXd> cross_kernel_blocks(const KernelBankd& bank, const MatrixXd& X_new) {
  if (X_new.cols() != bank.train_X.cols()) throw Error("cross_kernel_blocks: input has wrong feature count");
  std::vector<MatrixXd> blocks;
  blocks.reserve(static_cast<std::size_t>(bank.size()));
  for (Index k = 0; k < bank.size(); ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const Centering<double>* centering = bank.centered() ? &bank.centering[ks] : nullptr;
    MatrixXd block(X_new.rows(), bank.samples());
    for (Index i = 0; i < X_new.rows(); ++i)
      block.row(i) = cross_kernel_row(bank.specs[ks], bank.s(k), bank.train_X, X_new.row(i).transpose(), centering)
                         .transpose();
    blocks.push_back(std::move(block));
  }
  return blocks;
}

VectorXd predict_from_blocks(const std::vector<MatrixXd>& blocks, const VectorXd& c, const VectorXd& d,
                             double intercept) {
  if (blocks.empty()) throw Error("predict_from_blocks: no kernels");
  VectorXd out = VectorXd::Constant(blocks.front().rows(), intercept);
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const double dk = d(static_cast<Index>(k));
    if (dk > kSupportThreshold) out.noalias() += dk * (blocks[k] * c);
  }
  return out;
}

double output_intercept(const Dataset& train) {
  return train.task == Task::regression ? train.y.mean() : 0.0;
}

namespace {

double fold_loss(Task task, const VectorXd& y, const VectorXd& prediction) {
  if (task == Task::regression) return (y - prediction).squaredNorm() / static_cast<double>(y.size());
  Index wrong = 0;
  for (Index i = 0; i < y.size(); ++i) {
    const double label = prediction(i) >= 0.0 ? 1.0 : -1.0;
    if (label != y(i)) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(y.size());
}

}  // namespace

ValidationCurve cross_validate(const Dataset& ds, const TrainingSettings& settings, const std::vector<double>& lambdas,
                               const std::vector<Fold>& folds) {
  if (ds.task == Task::multiclass) throw Error("cross_validate: relabel multiclass data per class first");
  if (folds.size() < 2) throw Error("cross_validate: need at least two folds");
  ValidationCurve curve;
  curve.lambdas = lambdas;
  for (const auto& fold : folds) {
    if (fold.train.empty() || fold.validation.empty()) throw Error("cross_validate: empty fold");
    Dataset train = ds.subset(fold.train);
    const Dataset valid = ds.subset(fold.validation);
    const double intercept = output_intercept(train);
    train.y.array() -= intercept;
    const MatrixXd* test_X = settings.scaling.transductive ? &valid.X : nullptr;
    const KernelBankd bank = make_bank(train, settings, test_X);
    const auto path = fit_path(bank, train.y, lambdas, settings.fit);
    const auto blocks = cross_kernel_blocks(bank, valid.X);
    std::vector<double> losses;
    for (const auto& f : path.fits)
      losses.push_back(fold_loss(ds.task, valid.y, predict_from_blocks(blocks, f.c, f.d, intercept)));
    curve.fold_loss.push_back(std::move(losses));
  }
  const double k = static_cast<double>(folds.size());
  for (std::size_t l = 0; l < lambdas.size(); ++l) {
    double sum = 0.0;
    for (const auto& fl : curve.fold_loss) sum += fl[l];
    const double mean = sum / k;
    double ss = 0.0;
    for (const auto& fl : curve.fold_loss) ss += (fl[l] - mean) * (fl[l] - mean);
    curve.mean_loss.push_back(mean);
    curve.std_error.push_back(std::sqrt(ss / (k - 1.0)) / std::sqrt(k));
  }
  return curve;
}

std::size_t select_lambda(const ValidationCurve& curve, SelectionRule rule) {
  if (curve.mean_loss.empty()) throw Error("select_lambda: empty curve");
  for (std::size_t i = 1; i < curve.lambdas.size(); ++i)
    if (!(curve.lambdas[i] < curve.lambdas[i - 1])) throw Error("select_lambda: lambdas must be decreasing");
  // Lambdas decrease along the curve, so the first qualifying index is the largest lambda.
  const auto best_it = std::min_element(curve.mean_loss.begin(), curve.mean_loss.end());
  const std::size_t best = static_cast<std::size_t>(best_it - curve.mean_loss.begin());
  const double threshold =
      rule == SelectionRule::one_standard_error ? curve.mean_loss[best] + curve.std_error[best] : curve.mean_loss[best];
  for (std::size_t i = 0; i < curve.mean_loss.size(); ++i)
    if (curve.mean_loss[i] <= threshold) return i;
  return best;
}

void write_curve_csv(std::ostream& os, const ValidationCurve& curve) {
  os << "lambda,mean_loss,std_error\n";
  os.precision(17);
  for (std::size_t i = 0; i < curve.lambdas.size(); ++i)
    os << curve.lambdas[i] << ',' << curve.mean_loss[i] << ',' << curve.std_error[i] << '\n';
}

}  // namespace rls2
