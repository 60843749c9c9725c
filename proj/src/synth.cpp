#include "rls2/synth.hpp"

#include "rls2/kernels.hpp"
#include "rls2/linear.hpp"
#include "rls2/model.hpp"

#include <random>

namespace rls2 {

BinaryStringsData make_binary_strings(const BinaryStringsConfig& config) {
  if (config.n_bits < 3) throw Error("binary strings: need at least 3 bits");
  if (config.n_test < 1 || config.n_test >= config.n_strings) throw Error("binary strings: bad test size");
  if (config.n_train < 1 || config.n_train > config.n_strings - config.n_test)
    throw Error("binary strings: n_train must lie in [1, " + std::to_string(config.n_strings - config.n_test) + "]");
  if (!(config.sigma >= 0.0)) throw Error("binary strings: sigma must be non-negative");

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  MatrixXd X(config.n_strings, config.n_bits);
  VectorXd y(config.n_strings);
  for (int i = 0; i < config.n_strings; ++i) {
    for (int j = 0; j < config.n_bits; ++j) X(i, j) = static_cast<double>(rng() >> 63);
    y(i) = X(i, 0) + X(i, 1) + X(i, 2) + config.sigma * noise(rng);
  }
  BinaryStringsData data;
  data.X_train = X.topRows(config.n_train);
  data.y_train = y.head(config.n_train);
  data.X_test = X.bottomRows(config.n_test);
  data.y_test = y.tail(config.n_test);
  return data;
}

BinaryStringsReport run_binary_strings(const BinaryStringsConfig& config) {
  const BinaryStringsData data = make_binary_strings(config);
  ScalingRule rule;
  rule.kind = ScalingKind::feature_norm_inverse;
  const KernelBankd bank = build_bank<double>(data.X_train, data.y_train, linear_feature_specs(config.n_bits), rule);
  const auto path = fit_path(bank, data.y_train, config.lambdas, config.fit);

  BinaryStringsReport report;
  report.lambdas = config.lambdas;
  report.diagnostics = path.diagnostics;
  std::vector<LinearRls2Model<double>> models;
  for (const auto& f : path.fits) {
    models.push_back(extract_linear_model(f, bank, 0.0));
    report.test_rmse.push_back(rmse(data.y_test, models.back().predict(data.X_test)));
    report.df.push_back(degrees_of_freedom(data.X_train, models.back().d, models.back().s, f.lambda));
    report.objective_histories.push_back(f.objective_history);
  }
  for (std::size_t i = 1; i < report.test_rmse.size(); ++i)
    if (report.test_rmse[i] < report.test_rmse[report.best]) report.best = i;
  report.best_rmse = report.test_rmse[report.best];
  report.d_best = models[report.best].d;
  report.a_best = models[report.best].a;
  report.d_final = models.back().d;
  return report;
}

}  // namespace rls2
