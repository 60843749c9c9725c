#ifndef RLS2_MODEL_HPP
#define RLS2_MODEL_HPP

#include "rls2/common.hpp"
#include "rls2/data_io.hpp"
#include "rls2/kernels.hpp"
#include "rls2/rls2.hpp"
#include "rls2/selection.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rls2 {

/// A fitted predictor
///
///   f(x) = sum_k d_k s_k sum_j c_j K_k(x_j, x) + intercept
///
/// restricted to the kernels with d_k > 0. Inputs given to predict() must
/// already be in the space the model was trained in; `input_transform`
/// records the standardization applied to raw data, if any.
struct TrainedModel {
  Task task = Task::regression;
  std::vector<BasisKernelSpec> specs;
  VectorXd s;
  VectorXd d;
  std::vector<Centering<double>> centering;  // empty when uncentered
  ScalingRule scaling;
  MatrixXd train_X;
  VectorXd c;
  double lambda = 0.0;
  double intercept = 0.0;
  std::optional<Standardizer> input_transform;
  std::vector<std::string> class_names;
  std::vector<std::string> feature_names;
};

/// Keeps only the active kernels of the fit.
TrainedModel make_model(const KernelBankd& bank, const Rls2Fit<double>& fit, double intercept, Task task);

VectorXd predict(const TrainedModel& model, const MatrixXd& X);

/// Sign of the prediction; an exact zero maps to +1.
std::vector<int> predict_class(const TrainedModel& model, const MatrixXd& X);

int sign_label(double value);

/// One binary model per class, each trained on "this class" (+1) versus the rest (-1).
struct OvaModel {
  std::vector<std::string> class_names;
  std::vector<TrainedModel> models;
  std::vector<double> lambdas;  // selected per class
};

struct OvaSettings {
  TrainingSettings training;
  std::vector<double> lambdas = default_lambda_grid();
  int folds = 8;
  bool stratified = true;
  std::uint64_t seed = 0;
  SelectionRule rule = SelectionRule::best;
  // Pick one lambda for every class from the OVA validation accuracy instead of per class.
  bool shared_lambda = false;
};

/// +1 / -1 relabeling of a multiclass dataset for class `cls`.
Dataset one_vs_rest(const Dataset& ds, Index cls);

OvaModel ova_fit(const Dataset& ds, const OvaSettings& settings, const MatrixXd* test_X = nullptr);

/// n x K real-valued outputs, one column per class.
MatrixXd ova_confidences(const OvaModel& model, const MatrixXd& X);

/// Class id maximizing the confidence; ties go to the smallest id.
std::vector<Index> ova_predict(const OvaModel& model, const MatrixXd& X);

Index argmax_first(const Eigen::Ref<const VectorXd>& values);

double rmse(const VectorXd& y, const VectorXd& prediction);
double accuracy(const std::vector<double>& labels, const std::vector<double>& predicted);

std::string serialize_model(const TrainedModel& model);
TrainedModel deserialize_model(const std::string& text);
void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

std::string serialize_ova_model(const OvaModel& model);
OvaModel deserialize_ova_model(const std::string& text);
void save_ova_model(const OvaModel& model, const std::filesystem::path& path);
OvaModel load_ova_model(const std::filesystem::path& path);

/// Reads the "format" tag of a model file without decoding the rest.
std::string model_file_format(const std::filesystem::path& path);

}  // namespace rls2

#endif  // RLS2_MODEL_HPP
