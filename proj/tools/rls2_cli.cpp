// rls2: train, validate and apply multiple-kernel RLS models from the shell.
//
// Every failure ends with one line "error: <message>" on stderr and exit code
// 1; output files are written only after the command has succeeded.

#include "rls2/data_io.hpp"
#include "rls2/kernels.hpp"
#include "rls2/linear.hpp"
#include "rls2/model.hpp"
#include "rls2/rls2.hpp"
#include "rls2/selection.hpp"
#include "rls2/synth.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace rls2;

namespace {

struct DataArgs {
  std::string data;
  std::string test;
  std::string target;
  std::string task = "reg";
  char delimiter = ',';
  bool no_header = false;
  bool standardize = false;
};

struct KernelArgs {
  std::string kernels = "default";
  std::string scaling = "trace";
  bool transductive = false;
  double delta = 1e-2;
  int max_outer = 200;
};

void add_data_options(CLI::App* cmd, DataArgs& a, bool need_target = true) {
  cmd->add_option("--data", a.data, need_target ? "training CSV" : "input CSV")->required()->check(CLI::ExistingFile);
  auto* target = cmd->add_option("--target", a.target, need_target ? "name of the label column" : "label column, if present");
  if (need_target) target->required();
  cmd->add_option("--task", a.task, "reg, class or multiclass")
      ->check(CLI::IsMember({"reg", "regression", "class", "binary", "multiclass"}));
  cmd->add_option("--delimiter", a.delimiter, "field separator");
  cmd->add_flag("--no-header", a.no_header, "first row is data; columns are named c0, c1, ...");
}

void add_kernel_options(CLI::App* cmd, KernelArgs& k, DataArgs& a) {
  cmd->add_option("--kernels", k.kernels, "default, linear or a kernel spec file");
  cmd->add_option("--scaling", k.scaling, "unit, trace, trace-centered, feature-norm, fisher, fisher-sqrt, fisher-nl");
  cmd->add_flag("--transductive", k.transductive, "include the --test inputs in the trace scaling");
  cmd->add_option("--delta", k.delta, "relative residual of the inner CG solve")->check(CLI::PositiveNumber);
  cmd->add_option("--max-outer", k.max_outer, "outer iteration cap")->check(CLI::PositiveNumber);
  cmd->add_flag("--standardize", a.standardize, "zero-mean unit-variance inputs (statistics from the training set)");
}

Dataset read_dataset(const std::string& path, const std::string& target, Task task, const DataArgs& a) {
  CsvOptions opts;
  opts.delimiter = a.delimiter;
  opts.header = !a.no_header;
  return load_csv(path, target, task, opts);
}

// Training data, optional test data aligned to its columns, the standardizer
// fitted on the training part and the regression output intercept (already
// subtracted from both label vectors).
struct Prepared {
  Dataset train;
  std::optional<Dataset> test;
  std::optional<Standardizer> standardizer;
  double intercept = 0.0;
  std::vector<std::string> raw_feature_names;
};

std::string label_name(const Dataset& ds, Index i) {
  if (ds.task == Task::binary)
    return ds.class_names.size() == 2 ? ds.class_names[ds.y(i) > 0 ? 1 : 0] : ds.class_names.front();
  return ds.class_names[static_cast<std::size_t>(ds.y(i))];
}

// Re-codes class labels of `test` through the class names seen in training.
void recode_labels(Dataset& test, const Dataset& train) {
  if (test.class_names == train.class_names) return;
  VectorXd y(test.size());
  for (Index i = 0; i < test.size(); ++i) {
    const std::string name = label_name(test, i);
    const auto it = std::find(train.class_names.begin(), train.class_names.end(), name);
    if (it == train.class_names.end()) throw Error("test label '" + name + "' does not occur in the training data");
    const auto id = static_cast<double>(it - train.class_names.begin());
    y(i) = train.task == Task::binary ? (id > 0 ? 1.0 : -1.0) : id;
  }
  test.y = y;
  test.class_names = train.class_names;
}

Prepared prepare(const DataArgs& a) {
  const Task task = task_from_string(a.task);
  Prepared p;
  p.train = read_dataset(a.data, a.target, task, a);
  p.raw_feature_names = p.train.feature_names;
  if (!a.test.empty()) {
    Dataset test = align_features(read_dataset(a.test, a.target, task, a), p.train.feature_names);
    if (task != Task::regression) recode_labels(test, p.train);
    p.test = std::move(test);
  }
  if (a.standardize) {
    std::vector<Dataset> others;
    if (p.test) others.push_back(*p.test);
    auto st = standardize(p.train, others);
    p.standardizer = st.standardizer;
    p.intercept = st.standardizer.output_intercept;
    p.train = std::move(st.train);
    if (p.test) p.test = std::move(st.others.front());
  } else if (task == Task::regression) {
    p.intercept = p.train.y.mean();
    p.train.y.array() -= p.intercept;
    if (p.test) p.test->y.array() -= p.intercept;
  }
  return p;
}

TrainingSettings make_settings(const KernelArgs& k, const Prepared& p) {
  TrainingSettings s;
  if (k.kernels == "default") {
    s.kernels = KernelSet::benchmark;
  } else if (k.kernels == "linear") {
    s.kernels = KernelSet::linear;
  } else {
    s.kernels = KernelSet::custom;
    s.custom_specs = read_kernel_specs(k.kernels);
  }
  s.scaling.kind = scaling_from_string(k.scaling);
  s.scaling.transductive = k.transductive;
  if (k.transductive && !p.test) throw Error("--transductive needs --test data");
  s.fit.delta = k.delta;
  s.fit.max_outer = k.max_outer;
  return s;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
  if (parts.size() != 3) throw Error("lambda grid must look like lo:hi:n");
  try {
    return log_grid(std::stod(parts[0]), std::stod(parts[1]), std::stoi(parts[2]));
  } catch (const std::logic_error&) {
    throw Error("lambda grid must look like lo:hi:n");
  }
}

// Writes `content` to `path` only after the whole text exists.
void write_text(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  os << content;
  if (!os) throw Error("write to '" + path + "' failed");
}

TrainedModel finish_model(TrainedModel model, const Prepared& p, const std::optional<Standardizer>& transform) {
  model.input_transform = transform;
  model.class_names = p.train.class_names;
  model.feature_names = p.raw_feature_names;
  return model;
}

std::string metric_line(Task task, const VectorXd& y, const VectorXd& f) {
  std::ostringstream os;
  os.precision(6);
  if (task == Task::regression) {
    os << "test_rmse=" << rmse(y, f);
  } else {
    std::vector<double> labels(y.data(), y.data() + y.size());
    std::vector<double> pred;
    for (Index i = 0; i < f.size(); ++i) pred.push_back(sign_label(f(i)));
    os << "test_accuracy=" << accuracy(labels, pred);
  }
  return os.str();
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  DataArgs data;
  KernelArgs kernels;
  double lambda = 0.0;
  std::string grid = "1e-6:1e6:30";
  int folds = 8;
  std::uint64_t seed = 0;
  std::string out;
};

int run_train(const TrainArgs& t) {
  const auto t0 = std::chrono::steady_clock::now();
  Prepared p = prepare(t.data);
  const TrainingSettings settings = make_settings(t.kernels, p);
  const MatrixXd* test_X = p.test ? &p.test->X : nullptr;

  if (p.train.task == Task::multiclass) {
    OvaSettings ova;
    ova.training = settings;
    ova.lambdas = parse_grid(t.grid);
    ova.folds = t.folds;
    ova.seed = t.seed;
    OvaModel model = ova_fit(p.train, ova, test_X);
    for (auto& m : model.models) m = finish_model(std::move(m), p, p.standardizer);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "classes=" << model.class_names.size();
    for (std::size_t k = 0; k < model.models.size(); ++k)
      std::cout << " lambda[" << model.class_names[k] << "]=" << model.lambdas[k]
                << " kernels[" << model.class_names[k] << "]=" << model.models[k].specs.size();
    if (p.test) {
      const auto pred = ova_predict(model, p.test->X);
      std::vector<double> labels(p.test->y.data(), p.test->y.data() + p.test->size());
      std::vector<double> predicted(pred.begin(), pred.end());
      std::cout << " test_accuracy=" << accuracy(labels, predicted);
    }
    std::cout << " seconds=" << secs << '\n';
    if (!t.out.empty()) write_text(t.out, serialize_ova_model(model));
    return 0;
  }

  if (!(t.lambda > 0.0)) throw Error("--lambda must be a positive number");
  const KernelBankd bank = make_bank(p.train, settings, test_X);
  const auto f = fit(bank, p.train.y, t.lambda, std::optional<FitStart<double>>{}, settings.fit);
  const TrainedModel model =
      finish_model(make_model(bank, f, p.intercept, p.train.task), p, p.standardizer);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout.precision(10);
  std::cout << "objective=" << f.objective << " kernels=" << f.active_set.size() << "/" << bank.size()
            << " outer_iterations=" << f.outer_iterations << " converged=" << (f.converged ? "yes" : "no");
  if (p.test) {
    VectorXd pred = predict(model, p.test->X);
    VectorXd truth = p.test->y.array() + (p.train.task == Task::regression ? p.intercept : 0.0);
    std::cout << ' ' << metric_line(p.train.task, truth, pred);
  }
  std::cout << " seconds=" << secs << '\n';
  for (Index k : f.active_set)
    std::cout << "  d=" << f.d(k) << ' ' << bank.specs[static_cast<std::size_t>(k)].describe() << '\n';
  if (!t.out.empty()) write_text(t.out, serialize_model(model));
  return 0;
}

// ---------------------------------------------------------------- path

struct PathArgs {
  DataArgs data;
  KernelArgs kernels;
  std::string grid = "1e-6:1e6:30";
  std::string out;
  std::string coef_out;
  std::string model_dir;
  bool timing = false;
  bool check_refit = false;
};

int run_path(const PathArgs& a) {
  Prepared p = prepare(a.data);
  if (p.train.task == Task::multiclass) throw Error("path does not support multiclass data");
  const TrainingSettings settings = make_settings(a.kernels, p);
  const KernelBankd bank = make_bank(p.train, settings, p.test ? &p.test->X : nullptr);
  const auto lambdas = parse_grid(a.grid);
  const auto path = fit_path(bank, p.train.y, lambdas, settings.fit);

  std::ostringstream csv;
  write_path_csv(csv, path.diagnostics, a.timing);

  std::string coef_text;
  if (!a.coef_out.empty()) {
    std::vector<CoefficientRow> rows;
    for (const auto& f : path.fits) {
      const auto lin = extract_linear_model(f, bank, p.intercept);
      rows.push_back({f.lambda, degrees_of_freedom(p.train.X, lin.d, lin.s, f.lambda), lin.a});
    }
    std::ostringstream os;
    write_coefficient_csv(os, rows);
    coef_text = os.str();
  }

  if (a.check_refit) {
    // At the default delta each fit is only accurate to about delta |y|^2, so
    // the comparison reruns the path and the cold starts with a tight c-step.
    FitOptions tight = settings.fit;
    tight.delta = 1e-10;
    tight.max_outer = std::max(tight.max_outer, 5000);
    const auto warm = fit_path(bank, p.train.y, lambdas, tight);
    // Fits that hit max_outer are reported but not compared; at very small
    // lambda the alternation can be slow.
    double worst = 0.0;
    std::size_t compared = 0;
    for (const auto& f : warm.fits) {
      const auto cold = fit(bank, p.train.y, f.lambda, std::optional<FitStart<double>>{}, tight);
      if (!f.converged || !cold.converged) continue;
      ++compared;
      worst = std::max(worst, std::abs(cold.objective - f.objective) / std::max(std::abs(f.objective), 1e-300));
    }
    std::cout << "refit_max_relative_gap=" << worst << " compared=" << compared << '/' << warm.fits.size()
              << (worst <= 1e-6 ? " ok" : " MISMATCH") << '\n';
    if (worst > 1e-6) throw Error("warm-started path disagrees with cold refits");
  }

  if (a.out.empty())
    std::cout << csv.str();
  else
    write_text(a.out, csv.str());
  if (!a.coef_out.empty()) write_text(a.coef_out, coef_text);
  if (!a.model_dir.empty()) {
    fs::create_directories(a.model_dir);
    for (std::size_t i = 0; i < path.fits.size(); ++i) {
      const TrainedModel model = finish_model(make_model(bank, path.fits[i], p.intercept, p.train.task), p, p.standardizer);
      write_text((fs::path(a.model_dir) / ("model_" + std::to_string(i) + ".json")).string(), serialize_model(model));
    }
  }
  return 0;
}

// ---------------------------------------------------------------- cv

struct CvArgs {
  DataArgs data;
  KernelArgs kernels;
  std::string grid = "1e-6:1e6:30";
  int folds = 10;
  bool stratified = false;
  std::uint64_t seed = 0;
  std::string rule = "one-se";
  std::string out;
  std::string folds_dir;
};

int run_cv(const CvArgs& a) {
  Prepared p = prepare(a.data);
  if (p.train.task == Task::multiclass) throw Error("cv works on regression or binary data; use train for multiclass");
  const TrainingSettings settings = make_settings(a.kernels, p);
  if (settings.scaling.transductive) throw Error("cv uses each validation fold for transductive scaling; drop --transductive");
  const auto lambdas = parse_grid(a.grid);
  const auto folds =
      a.stratified ? stratified_kfold(p.train, a.folds, a.seed) : kfold(p.train.size(), a.folds, a.seed);
  const ValidationCurve curve = cross_validate(p.train, settings, lambdas, folds);
  const SelectionRule rule = a.rule == "best" ? SelectionRule::best : SelectionRule::one_standard_error;
  const std::size_t chosen = select_lambda(curve, rule);

  std::ostringstream csv;
  write_curve_csv(csv, curve);
  std::cout.precision(17);
  std::cout << "selected_lambda=" << curve.lambdas[chosen] << " mean_loss=" << curve.mean_loss[chosen]
            << " std_error=" << curve.std_error[chosen] << '\n';
  if (a.out.empty())
    std::cout << csv.str();
  else
    write_text(a.out, csv.str());
  if (!a.folds_dir.empty()) {
    fs::create_directories(a.folds_dir);
    for (std::size_t f = 0; f < folds.size(); ++f) {
      write_indices(fs::path(a.folds_dir) / ("fold" + std::to_string(f) + "_train.txt"), folds[f].train);
      write_indices(fs::path(a.folds_dir) / ("fold" + std::to_string(f) + "_validation.txt"), folds[f].validation);
    }
  }
  return 0;
}

// ---------------------------------------------------------------- predict

struct PredictArgs {
  std::string model;
  DataArgs data;
  std::string out;
};

MatrixXd model_inputs(const Dataset& raw, const std::vector<std::string>& names, const std::optional<Standardizer>& st) {
  Dataset ds = names.empty() ? raw : align_features(raw, names);
  return st ? st->transform(ds.X) : ds.X;
}

int run_predict(const PredictArgs& a) {
  const std::string format = model_file_format(a.model);
  std::ostringstream out;
  out.precision(17);
  if (format == "rls2-ova-model") {
    const OvaModel model = load_ova_model(a.model);
    const Dataset raw = read_dataset(a.data.data, a.data.target, Task::multiclass, a.data);
    const auto& first = model.models.front();
    const MatrixXd X = model_inputs(raw, first.feature_names, first.input_transform);
    const auto pred = ova_predict(model, X);
    out << "id,prediction" << (a.data.target.empty() ? "" : ",label") << '\n';
    for (Index i = 0; i < X.rows(); ++i) {
      out << i << ',' << model.class_names[static_cast<std::size_t>(pred[static_cast<std::size_t>(i)])];
      if (!a.data.target.empty()) out << ',' << label_name(raw, i);
      out << '\n';
    }
  } else {
    const TrainedModel model = load_model(a.model);
    const Dataset raw = read_dataset(a.data.data, a.data.target, model.task, a.data);
    const MatrixXd X = model_inputs(raw, model.feature_names, model.input_transform);
    const VectorXd f = predict(model, X);
    out << "id,prediction" << (a.data.target.empty() ? "" : ",label") << '\n';
    for (Index i = 0; i < f.size(); ++i) {
      out << i << ',';
      if (model.task == Task::binary) {
        const int s = sign_label(f(i));
        out << (model.class_names.size() == 2 ? model.class_names[s > 0 ? 1 : 0] : std::to_string(s));
      } else {
        out << f(i);
      }
      if (!a.data.target.empty()) {
        out << ',';
        if (model.task == Task::binary)
          out << label_name(raw, i);
        else
          out << raw.y(i);
      }
      out << '\n';
    }
  }
  if (a.out.empty())
    std::cout << out.str();
  else
    write_text(a.out, out.str());
  return 0;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  BinaryStringsConfig config;
  std::string grid = "1e-6:1e6:30";
  std::string out;
  std::string coef_out;
};

int run_synth(SynthArgs a) {
  a.config.lambdas = parse_grid(a.grid);
  const auto t0 = std::chrono::steady_clock::now();
  const BinaryStringsReport rep = run_binary_strings(a.config);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::ostringstream csv;
  csv.precision(17);
  csv << "lambda,test_rmse,df,n_kernels,outer_iterations\n";
  for (std::size_t i = 0; i < rep.lambdas.size(); ++i)
    csv << rep.lambdas[i] << ',' << rep.test_rmse[i] << ',' << rep.df[i] << ',' << rep.diagnostics[i].n_kernels << ','
        << rep.diagnostics[i].outer_iterations << '\n';

  std::cout.precision(6);
  std::cout << "best_lambda=" << rep.lambdas[rep.best] << " test_rmse=" << rep.best_rmse << " seconds=" << secs << '\n';
  std::cout << "d_best[0..2]=" << rep.d_best(0) << ',' << rep.d_best(1) << ',' << rep.d_best(2)
            << " max_other=" << (rep.d_best.size() > 3 ? rep.d_best.tail(rep.d_best.size() - 3).maxCoeff() : 0.0)
            << '\n';
  if (a.out.empty())
    std::cout << csv.str();
  else
    write_text(a.out, csv.str());
  if (!a.coef_out.empty()) {
    std::ostringstream os;
    os.precision(17);
    os << "bit,d_best,a_best\n";
    for (Index j = 0; j < rep.d_best.size(); ++j) os << j << ',' << rep.d_best(j) << ',' << rep.a_best(j) << '\n';
    write_text(a.coef_out, os.str());
  }
  return 0;
}

std::string one_line(std::string s) {
  for (char& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiple kernel regularized least squares"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "fit one model (multiclass: one-vs-rest with CV per class)");
  add_data_options(train_cmd, train.data);
  add_kernel_options(train_cmd, train.kernels, train.data);
  train_cmd->add_option("--test", train.data.test, "held-out CSV for evaluation or transductive scaling")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--lambda", train.lambda, "regularization parameter");
  train_cmd->add_option("--lambda-grid", train.grid, "multiclass CV grid lo:hi:n");
  train_cmd->add_option("--folds", train.folds, "multiclass CV folds");
  train_cmd->add_option("--seed", train.seed, "fold shuffling seed");
  train_cmd->add_option("--out", train.out, "model file (JSON)");

  PathArgs path;
  auto* path_cmd = app.add_subcommand("path", "warm-started regularization path");
  add_data_options(path_cmd, path.data);
  add_kernel_options(path_cmd, path.kernels, path.data);
  path_cmd->add_option("--test", path.data.test, "inputs for transductive scaling")->check(CLI::ExistingFile);
  path_cmd->add_option("--lambda-grid", path.grid, "lo:hi:n, fitted from hi down to lo (v:v:1 for one value)");
  path_cmd->add_option("--out", path.out, "diagnostics CSV (stdout when omitted)");
  path_cmd->add_option("--coef-out", path.coef_out, "linear weights per lambda (linear kernels only)");
  path_cmd->add_option("--model-dir", path.model_dir, "write model_<i>.json for every lambda here");
  path_cmd->add_flag("--timing", path.timing, "record wall-clock seconds per fit");
  path_cmd->add_flag("--check-refit", path.check_refit, "compare every fit against a cold start");

  CvArgs cv;
  auto* cv_cmd = app.add_subcommand("cv", "k-fold validation curve and lambda selection");
  add_data_options(cv_cmd, cv.data);
  add_kernel_options(cv_cmd, cv.kernels, cv.data);
  cv_cmd->add_option("--lambda-grid", cv.grid, "lo:hi:n");
  cv_cmd->add_option("--folds", cv.folds, "number of folds");
  cv_cmd->add_flag("--stratified", cv.stratified, "keep class proportions in every fold");
  cv_cmd->add_option("--seed", cv.seed, "fold shuffling seed");
  cv_cmd->add_option("--rule", cv.rule, "one-se or best")->check(CLI::IsMember({"one-se", "best"}));
  cv_cmd->add_option("--out", cv.out, "curve CSV (stdout when omitted)");
  cv_cmd->add_option("--folds-dir", cv.folds_dir, "write fold index files here");

  PredictArgs pred;
  auto* pred_cmd = app.add_subcommand("predict", "apply a saved model");
  pred_cmd->add_option("--model", pred.model, "model file")->required()->check(CLI::ExistingFile);
  add_data_options(pred_cmd, pred.data, false);
  pred_cmd->add_option("--out", pred.out, "predictions CSV (stdout when omitted)");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "binary-strings experiment with linear kernels");
  synth_cmd->add_option("--seed", synth.config.seed, "generator seed");
  synth_cmd->add_option("--n-train", synth.config.n_train, "training strings");
  synth_cmd->add_option("--n-bits", synth.config.n_bits, "bits per string");
  synth_cmd->add_option("--sigma", synth.config.sigma, "noise standard deviation");
  synth_cmd->add_option("--lambda-grid", synth.grid, "lo:hi:n");
  synth_cmd->add_option("--delta", synth.config.fit.delta, "relative residual of the c-system")
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--out", synth.out, "per-lambda CSV (stdout when omitted)");
  synth_cmd->add_option("--coef-out", synth.coef_out, "per-bit weights at the best lambda");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << one_line(e.what()) << '\n';
    return 2;
  }

  try {
    if (*train_cmd) return run_train(train);
    if (*path_cmd) return run_path(path);
    if (*cv_cmd) return run_cv(cv);
    if (*pred_cmd) return run_predict(pred);
    if (*synth_cmd) return run_synth(synth);
  } catch (const ParseError& e) {
    std::cerr << "error: line " << e.line() << ": " << one_line(e.what()) << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << one_line(e.what()) << '\n';
    return 1;
  }
  return 1;
}
