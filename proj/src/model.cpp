#include "rls2/model.hpp"

#include "json_codec.hpp"

#include <fstream>
#include <sstream>

namespace rls2 {

TrainedModel make_model(const KernelBankd& bank, const Rls2Fit<double>& fit, double intercept, Task task) {
  if (fit.d.size() != bank.size() || fit.c.size() != bank.samples())
    throw Error("make_model: fit does not belong to this bank");
  TrainedModel model;
  model.task = task;
  model.scaling = bank.rule;
  model.train_X = bank.train_X;
  model.c = fit.c;
  model.lambda = fit.lambda;
  model.intercept = intercept;
  std::vector<double> s;
  std::vector<double> d;
  for (Index k : fit.active_set) {
    const auto ks = static_cast<std::size_t>(k);
    model.specs.push_back(bank.specs[ks]);
    s.push_back(bank.s(k));
    d.push_back(fit.d(k));
    if (bank.centered()) model.centering.push_back(bank.centering[ks]);
  }
  model.s = Eigen::Map<VectorXd>(s.data(), static_cast<Index>(s.size()));
  model.d = Eigen::Map<VectorXd>(d.data(), static_cast<Index>(d.size()));
  return model;
}

VectorXd predict(const TrainedModel& model, const MatrixXd& X) {
  if (X.cols() != model.train_X.cols())
    throw Error("predict: inputs have " + std::to_string(X.cols()) + " features, model expects " +
                std::to_string(model.train_X.cols()));
  VectorXd out = VectorXd::Constant(X.rows(), model.intercept);
  for (std::size_t k = 0; k < model.specs.size(); ++k) {
    const double dk = model.d(static_cast<Index>(k));
    if (!(dk > 0.0)) continue;
    const Centering<double>* centering = model.centering.empty() ? nullptr : &model.centering[k];
    for (Index i = 0; i < X.rows(); ++i) {
      const VectorXd row =
          cross_kernel_row(model.specs[k], model.s(static_cast<Index>(k)), model.train_X, X.row(i).transpose(), centering);
      out(i) += dk * row.dot(model.c);
    }
  }
  return out;
}

int sign_label(double value) { return value >= 0.0 ? 1 : -1; }

std::vector<int> predict_class(const TrainedModel& model, const MatrixXd& X) {
  if (model.task != Task::binary) throw Error("predict_class: model was not trained for binary classification");
  const VectorXd f = predict(model, X);
  std::vector<int> labels(static_cast<std::size_t>(f.size()));
  for (Index i = 0; i < f.size(); ++i) labels[static_cast<std::size_t>(i)] = sign_label(f(i));
  return labels;
}

Dataset one_vs_rest(const Dataset& ds, Index cls) {
  Dataset out = ds;
  out.task = Task::binary;
  for (Index i = 0; i < ds.size(); ++i) out.y(i) = ds.y(i) == static_cast<double>(cls) ? 1.0 : -1.0;
  const auto& name = static_cast<std::size_t>(cls) < ds.class_names.size() ? ds.class_names[static_cast<std::size_t>(cls)]
                                                                           : std::to_string(cls);
  out.class_names = {"rest", name};
  return out;
}

namespace {

Index class_count(const Dataset& ds) {
  if (!ds.class_names.empty()) return static_cast<Index>(ds.class_names.size());
  return ds.size() == 0 ? 0 : static_cast<Index>(ds.y.maxCoeff()) + 1;
}

TrainedModel fit_class_model(const Dataset& binary, const OvaSettings& settings, std::size_t selected,
                             const MatrixXd* test_X) {
  const KernelBankd bank = make_bank(binary, settings.training, test_X);
  const std::vector<double> prefix(settings.lambdas.begin(),
                                   settings.lambdas.begin() + static_cast<std::ptrdiff_t>(selected) + 1);
  const auto path = fit_path(bank, binary.y, prefix, settings.training.fit);
  return make_model(bank, path.fits.back(), 0.0, Task::binary);
}

// Curve of OVA misclassification rate when every class shares the same lambda.
ValidationCurve shared_curve(const Dataset& ds, Index n_classes, const OvaSettings& settings,
                             const std::vector<Fold>& folds) {
  ValidationCurve curve;
  curve.lambdas = settings.lambdas;
  const std::size_t n_lambda = settings.lambdas.size();
  for (const auto& fold : folds) {
    const Dataset valid = ds.subset(fold.validation);
    std::vector<MatrixXd> conf(n_lambda, MatrixXd(valid.size(), n_classes));
    for (Index cls = 0; cls < n_classes; ++cls) {
      const Dataset train = one_vs_rest(ds.subset(fold.train), cls);
      const MatrixXd* test_X = settings.training.scaling.transductive ? &valid.X : nullptr;
      const KernelBankd bank = make_bank(train, settings.training, test_X);
      const auto path = fit_path(bank, train.y, settings.lambdas, settings.training.fit);
      const auto blocks = cross_kernel_blocks(bank, valid.X);
      for (std::size_t l = 0; l < n_lambda; ++l)
        conf[l].col(cls) = predict_from_blocks(blocks, path.fits[l].c, path.fits[l].d, 0.0);
    }
    std::vector<double> losses;
    for (std::size_t l = 0; l < n_lambda; ++l) {
      Index wrong = 0;
      for (Index i = 0; i < valid.size(); ++i)
        if (static_cast<double>(argmax_first(conf[l].row(i).transpose())) != valid.y(i)) ++wrong;
      losses.push_back(static_cast<double>(wrong) / static_cast<double>(valid.size()));
    }
    curve.fold_loss.push_back(std::move(losses));
  }
  const double k = static_cast<double>(folds.size());
  for (std::size_t l = 0; l < n_lambda; ++l) {
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

}  // namespace

OvaModel ova_fit(const Dataset& ds, const OvaSettings& settings, const MatrixXd* test_X) {
  if (ds.task != Task::multiclass) throw Error("ova_fit: dataset is not multiclass");
  const Index n_classes = class_count(ds);
  if (n_classes < 2) throw Error("ova_fit: need at least two classes");
  for (Index cls = 0; cls < n_classes; ++cls) {
    if (!(ds.y.array() == static_cast<double>(cls)).any()) {
      const std::string name = static_cast<std::size_t>(cls) < ds.class_names.size()
                                   ? ds.class_names[static_cast<std::size_t>(cls)]
                                   : std::to_string(cls);
      throw Error("ova_fit: class '" + name + "' has no training examples");
    }
  }
  const auto folds =
      settings.stratified ? stratified_kfold(ds, settings.folds, settings.seed) : kfold(ds.size(), settings.folds, settings.seed);

  OvaModel model;
  model.class_names = ds.class_names;
  if (model.class_names.empty())
    for (Index cls = 0; cls < n_classes; ++cls) model.class_names.push_back(std::to_string(cls));

  std::size_t shared = 0;
  if (settings.shared_lambda) shared = select_lambda(shared_curve(ds, n_classes, settings, folds), settings.rule);

  for (Index cls = 0; cls < n_classes; ++cls) {
    const Dataset binary = one_vs_rest(ds, cls);
    std::size_t selected = shared;
    if (!settings.shared_lambda)
      selected = select_lambda(cross_validate(binary, settings.training, settings.lambdas, folds), settings.rule);
    model.models.push_back(fit_class_model(binary, settings, selected, test_X));
    model.lambdas.push_back(settings.lambdas[selected]);
  }
  return model;
}

MatrixXd ova_confidences(const OvaModel& model, const MatrixXd& X) {
  MatrixXd conf(X.rows(), static_cast<Index>(model.models.size()));
  for (std::size_t k = 0; k < model.models.size(); ++k) conf.col(static_cast<Index>(k)) = predict(model.models[k], X);
  return conf;
}

Index argmax_first(const Eigen::Ref<const VectorXd>& values) {
  if (values.size() == 0) throw Error("argmax_first: empty input");
  Index best = 0;
  for (Index i = 1; i < values.size(); ++i)
    if (values(i) > values(best)) best = i;
  return best;
}

std::vector<Index> ova_predict(const OvaModel& model, const MatrixXd& X) {
  const MatrixXd conf = ova_confidences(model, X);
  std::vector<Index> out(static_cast<std::size_t>(X.rows()));
  for (Index i = 0; i < X.rows(); ++i) out[static_cast<std::size_t>(i)] = argmax_first(conf.row(i).transpose());
  return out;
}

double rmse(const VectorXd& y, const VectorXd& prediction) {
  if (y.size() == 0) throw Error("rmse: empty input");
  if (y.size() != prediction.size()) throw Error("rmse: length mismatch");
  return std::sqrt((y - prediction).squaredNorm() / static_cast<double>(y.size()));
}

double accuracy(const std::vector<double>& labels, const std::vector<double>& predicted) {
  if (labels.empty()) throw Error("accuracy: empty input");
  if (labels.size() != predicted.size()) throw Error("accuracy: length mismatch");
  std::size_t right = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == predicted[i]) ++right;
  return static_cast<double>(right) / static_cast<double>(labels.size());
}

namespace {

constexpr int kModelVersion = 1;

nlohmann::json model_to_json(const TrainedModel& model) {
  using namespace codec;
  nlohmann::json j;
  j["format"] = "rls2-model";
  j["version"] = kModelVersion;
  j["task"] = std::string(to_string(model.task));
  j["scaling"] = {{"rule", to_string(model.scaling.kind)}, {"transductive", model.scaling.transductive}};
  j["lambda"] = encode_double(model.lambda);
  j["intercept"] = encode_double(model.intercept);
  nlohmann::json kernels = nlohmann::json::array();
  for (std::size_t k = 0; k < model.specs.size(); ++k) {
    nlohmann::json entry;
    entry["spec"] = spec_to_json(model.specs[k]);
    entry["s"] = encode_double(model.s(static_cast<Index>(k)));
    entry["d"] = encode_double(model.d(static_cast<Index>(k)));
    if (!model.centering.empty()) {
      entry["centering"] = {{"column_means", encode_array(model.centering[k].column_means)},
                            {"grand_mean", encode_double(model.centering[k].grand_mean)}};
    }
    kernels.push_back(std::move(entry));
  }
  j["kernels"] = std::move(kernels);
  j["train_X"] = encode_matrix(model.train_X);
  j["c"] = encode_array(model.c);
  j["class_names"] = model.class_names;
  j["feature_names"] = model.feature_names;
  if (model.input_transform) {
    const Standardizer& st = *model.input_transform;
    j["standardizer"] = {{"mean", encode_array(st.mean)},
                         {"std", encode_array(st.std)},
                         {"constant", st.constant},
                         {"output_intercept", encode_double(st.output_intercept)}};
  }
  return j;
}

TrainedModel model_from_json(const nlohmann::json& j) {
  using namespace codec;
  if (j.value("format", "") != "rls2-model") throw Error("not an rls2 model file");
  const int version = j.at("version").get<int>();
  if (version != kModelVersion)
    throw Error("model file version " + std::to_string(version) + " is not supported (expected " +
                std::to_string(kModelVersion) + ")");
  TrainedModel model;
  model.task = task_from_string(j.at("task").get<std::string>());
  model.scaling.kind = scaling_from_string(j.at("scaling").at("rule").get<std::string>());
  model.scaling.transductive = j.at("scaling").at("transductive").get<bool>();
  model.lambda = decode_double(j.at("lambda"));
  model.intercept = decode_double(j.at("intercept"));
  model.train_X = decode_matrix(j.at("train_X"));
  model.c = decode_vector(j.at("c"));
  if (model.c.size() != model.train_X.rows()) throw Error("model file: c does not match the training inputs");
  const auto& kernels = j.at("kernels");
  model.s.resize(static_cast<Index>(kernels.size()));
  model.d.resize(static_cast<Index>(kernels.size()));
  for (std::size_t k = 0; k < kernels.size(); ++k) {
    const auto& entry = kernels[k];
    model.specs.push_back(spec_from_json(entry.at("spec")));
    model.specs.back().validate(model.train_X.cols());
    model.s(static_cast<Index>(k)) = decode_double(entry.at("s"));
    model.d(static_cast<Index>(k)) = decode_double(entry.at("d"));
    if (entry.contains("centering")) {
      Centering<double> c;
      c.column_means = decode_vector(entry.at("centering").at("column_means"));
      c.grand_mean = decode_double(entry.at("centering").at("grand_mean"));
      if (c.column_means.size() != model.train_X.rows()) throw Error("model file: centering has the wrong length");
      model.centering.push_back(std::move(c));
    }
  }
  if (!model.centering.empty() && model.centering.size() != model.specs.size())
    throw Error("model file: centering given for some kernels only");
  model.class_names = j.at("class_names").get<std::vector<std::string>>();
  model.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  if (!model.feature_names.empty() && static_cast<Index>(model.feature_names.size()) != model.train_X.cols())
    throw Error("model file: feature names do not match the training inputs");
  if (j.contains("standardizer")) {
    const auto& sj = j.at("standardizer");
    Standardizer st;
    st.mean = decode_vector(sj.at("mean"));
    st.std = decode_vector(sj.at("std"));
    st.constant = sj.at("constant").get<std::vector<bool>>();
    st.output_intercept = decode_double(sj.at("output_intercept"));
    if (st.mean.size() != model.train_X.cols() || st.std.size() != st.mean.size() ||
        static_cast<Index>(st.constant.size()) != st.mean.size())
      throw Error("model file: standardizer has the wrong length");
    model.input_transform = std::move(st);
  }
  return model;
}

template <typename Fn>
auto guarded(const char* what, Fn&& fn) {
  try {
    return fn();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string(what) + ": " + e.what());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

}  // namespace

std::string serialize_model(const TrainedModel& model) { return model_to_json(model).dump(1) + "\n"; }

TrainedModel deserialize_model(const std::string& text) {
  return guarded("corrupt model file", [&] { return model_from_json(nlohmann::json::parse(text)); });
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  write_file(path, serialize_model(model));
}

TrainedModel load_model(const std::filesystem::path& path) { return deserialize_model(read_file(path)); }

std::string serialize_ova_model(const OvaModel& model) {
  nlohmann::json j;
  j["format"] = "rls2-ova-model";
  j["version"] = kModelVersion;
  j["class_names"] = model.class_names;
  j["lambdas"] = codec::encode_array(Eigen::Map<const VectorXd>(model.lambdas.data(), static_cast<Index>(model.lambdas.size())));
  j["models"] = nlohmann::json::array();
  for (const auto& m : model.models) j["models"].push_back(model_to_json(m));
  return j.dump(1) + "\n";
}

OvaModel deserialize_ova_model(const std::string& text) {
  return guarded("corrupt model file", [&] {
    const auto j = nlohmann::json::parse(text);
    if (j.value("format", "") != "rls2-ova-model") throw Error("not an rls2 OVA model file");
    const int version = j.at("version").get<int>();
    if (version != kModelVersion) throw Error("model file version " + std::to_string(version) + " is not supported");
    OvaModel model;
    model.class_names = j.at("class_names").get<std::vector<std::string>>();
    const VectorXd lambdas = codec::decode_vector(j.at("lambdas"));
    model.lambdas.assign(lambdas.data(), lambdas.data() + lambdas.size());
    for (const auto& m : j.at("models")) model.models.push_back(model_from_json(m));
    if (model.models.size() != model.class_names.size()) throw Error("OVA model file: one model per class expected");
    return model;
  });
}

void save_ova_model(const OvaModel& model, const std::filesystem::path& path) {
  write_file(path, serialize_ova_model(model));
}

OvaModel load_ova_model(const std::filesystem::path& path) { return deserialize_ova_model(read_file(path)); }

std::string model_file_format(const std::filesystem::path& path) {
  return guarded("corrupt model file", [&] {
    const auto j = nlohmann::json::parse(read_file(path));
    return j.value("format", std::string{});
  });
}

}  // namespace rls2
