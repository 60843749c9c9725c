#ifndef RLS2_DATA_IO_HPP
#define RLS2_DATA_IO_HPP

#include "rls2/common.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace rls2 {

/// Rows of X are examples. For binary tasks y holds -1/+1; for multiclass it
/// holds class ids 0..K-1 indexing class_names.
struct Dataset {
  MatrixXd X;
  VectorXd y;
  std::vector<std::string> feature_names;
  Task task = Task::regression;
  std::vector<std::string> class_names;

  Index size() const { return X.rows(); }
  Index features() const { return X.cols(); }

  /// Copy of the listed rows, in the given order.
  Dataset subset(const std::vector<Index>& rows) const;
};

struct CsvOptions {
  char delimiter = ',';
  bool header = true;
};

/// Reads a delimited text file. Rows with any missing field are dropped,
/// non-numeric feature columns become one 0/1 indicator column per category.
/// Without a header the columns are named "c0", "c1", ... An empty
/// `target_column` reads every column as a feature and leaves y at zero.
Dataset load_csv(const std::filesystem::path& path, const std::string& target_column, Task task,
                 const CsvOptions& options = {});

/// Reorders the columns of `ds` to match `names`. Indicator columns
/// ("column=value") absent from `ds` are filled with zeros; any other absent
/// column is an error. Extra columns are ignored.
Dataset align_features(const Dataset& ds, const std::vector<std::string>& names);

/// Same as load_csv but parses an in-memory buffer.
Dataset parse_csv(const std::string& text, const std::string& target_column, Task task,
                  const CsvOptions& options = {});

/// Per-feature affine map x -> (x - mean) / std fitted on training inputs.
struct Standardizer {
  VectorXd mean;
  VectorXd std;
  std::vector<bool> constant;  // flagged features pass through untouched
  double output_intercept = 0.0;

  MatrixXd transform(const MatrixXd& X) const;
  MatrixXd inverse_transform(const MatrixXd& X) const;
  Dataset transform(const Dataset& ds) const;
};

struct Standardized {
  Standardizer standardizer;
  Dataset train;
  std::vector<Dataset> others;
};

/// Fits the map on `train` (sample std, divisor n-1) and applies it to every
/// dataset. For regression the training mean of y becomes the output
/// intercept and is subtracted from every y.
Standardized standardize(const Dataset& train, const std::vector<Dataset>& apply_to = {});

struct SplitIndices {
  std::vector<Index> train;
  std::vector<Index> test;
};

/// Random partition with floor(fraction * n) training rows; both index lists
/// are sorted ascending.
SplitIndices split_indices(Index n, double train_fraction, std::uint64_t seed);

struct TrainTest {
  Dataset train;
  Dataset test;
};

TrainTest split(const Dataset& ds, double train_fraction, std::uint64_t seed);

struct Fold {
  std::vector<Index> train;
  std::vector<Index> validation;
};

/// Plain shuffled k-fold partition of 0..n-1.
std::vector<Fold> kfold(Index n, int k, std::uint64_t seed);

/// k folds that keep class proportions. Regression data falls back to kfold.
std::vector<Fold> stratified_kfold(const Dataset& ds, int k, std::uint64_t seed);

/// One index per line.
void write_indices(const std::filesystem::path& path, const std::vector<Index>& indices);

}  // namespace rls2

#endif  // RLS2_DATA_IO_HPP
