#include "rls2/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

namespace rls2 {

std::string_view to_string(Task task) {
  switch (task) {
    case Task::regression: return "regression";
    case Task::binary: return "binary";
    case Task::multiclass: return "multiclass";
  }
  return "regression";
}

Task task_from_string(std::string_view name) {
  if (name == "regression" || name == "reg") return Task::regression;
  if (name == "binary" || name == "class") return Task::binary;
  if (name == "multiclass") return Task::multiclass;
  throw Error("unknown task '" + std::string(name) + "'");
}

namespace {

std::mutex g_warning_mutex;
WarningHandler g_warning_handler;

struct CsvRow {
  std::vector<std::string> fields;
  long line = 0;
};

// RFC-4180 records: quoted fields may contain delimiters, doubled quotes and newlines.
std::vector<CsvRow> read_records(const std::string& text, char delim) {
  std::vector<CsvRow> rows;
  CsvRow row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  long line = 1;
  row.line = 1;
  auto end_field = [&] {
    row.fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    const bool blank = row.fields.size() == 1 && row.fields[0].empty();
    if (!blank) rows.push_back(std::move(row));
    row = CsvRow{};
    row.line = line;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (ch == '\n') ++line;
        field.push_back(ch);
      }
      continue;
    }
    if (ch == '"') {
      if (field_started && !field.empty())
        throw ParseError("unexpected quote inside unquoted field", line);
      in_quotes = true;
      field_started = true;
    } else if (ch == delim) {
      end_field();
    } else if (ch == '\r') {
      // CRLF line endings
    } else if (ch == '\n') {
      ++line;
      end_row();
    } else {
      field.push_back(ch);
      field_started = true;
    }
  }
  if (in_quotes) throw ParseError("unterminated quoted field", row.line);
  if (!field.empty() || !row.fields.empty()) end_row();
  return rows;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

bool is_missing(const std::string& s) {
  return s.empty() || s == "?" || s == "NA" || s == "na" || s == "NaN" || s == "nan";
}

std::optional<double> parse_number(const std::string& s) {
  double value = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) return std::nullopt;
  return value;
}

// Sorted distinct labels: numerically when every label parses, lexicographically otherwise.
std::vector<std::string> sorted_labels(const std::vector<std::string>& values) {
  std::vector<std::string> distinct(values.begin(), values.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  const bool numeric = std::all_of(distinct.begin(), distinct.end(),
                                   [](const std::string& v) { return parse_number(v).has_value(); });
  if (numeric) {
    std::stable_sort(distinct.begin(), distinct.end(), [](const std::string& a, const std::string& b) {
      return *parse_number(a) < *parse_number(b);
    });
  }
  return distinct;
}

}  // namespace

void set_warning_handler(WarningHandler handler) {
  std::lock_guard lock(g_warning_mutex);
  g_warning_handler = std::move(handler);
}

void warn(const std::string& message) {
  std::lock_guard lock(g_warning_mutex);
  if (g_warning_handler)
    g_warning_handler(message);
  else
    std::cerr << "warning: " << message << '\n';
}

Dataset Dataset::subset(const std::vector<Index>& rows) const {
  Dataset out;
  out.X.resize(static_cast<Index>(rows.size()), X.cols());
  out.y.resize(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.X.row(static_cast<Index>(r)) = X.row(rows[r]);
    out.y(static_cast<Index>(r)) = y(rows[r]);
  }
  out.feature_names = feature_names;
  out.task = task;
  out.class_names = class_names;
  return out;
}

Dataset parse_csv(const std::string& text, const std::string& target_column, Task task,
                  const CsvOptions& options) {
  std::vector<CsvRow> records = read_records(text, options.delimiter);
  if (records.empty()) throw Error("empty input");

  std::vector<std::string> names;
  std::size_t first_data = 0;
  if (options.header) {
    for (const auto& f : records.front().fields) names.push_back(trim(f));
    first_data = 1;
  } else {
    for (std::size_t j = 0; j < records.front().fields.size(); ++j) names.push_back("c" + std::to_string(j));
  }
  const std::size_t width = names.size();
  const bool has_target = !target_column.empty();
  std::size_t target = width;  // sentinel: no target column
  if (has_target) {
    const auto target_it = std::find(names.begin(), names.end(), target_column);
    if (target_it == names.end()) throw Error("target column '" + target_column + "' not found");
    target = static_cast<std::size_t>(target_it - names.begin());
  }
  if (width < (has_target ? 2u : 1u)) throw Error("need at least one feature column besides the target");

  // Keep complete rows only; short rows count as having missing fields.
  std::vector<CsvRow> kept;
  for (std::size_t r = first_data; r < records.size(); ++r) {
    CsvRow& rec = records[r];
    if (rec.fields.size() > width)
      throw ParseError("expected " + std::to_string(width) + " fields, found " + std::to_string(rec.fields.size()),
                       rec.line);
    for (auto& f : rec.fields) f = trim(f);
    const bool complete = rec.fields.size() == width &&
                          std::none_of(rec.fields.begin(), rec.fields.end(), is_missing);
    if (complete) kept.push_back(std::move(rec));
  }
  if (const std::size_t dropped = records.size() - first_data - kept.size(); dropped > 0)
    warn("dropped " + std::to_string(dropped) + (dropped == 1 ? " row" : " rows") + " with missing values");
  if (kept.empty()) throw Error("dataset is empty after removing rows with missing values");

  struct Column {
    bool categorical = false;
    std::vector<std::string> categories;
  };
  std::vector<Column> columns(width);
  for (std::size_t j = 0; j < width; ++j) {
    if (j == target) continue;
    for (const auto& rec : kept) {
      if (!parse_number(rec.fields[j])) {
        columns[j].categorical = true;
        break;
      }
    }
    if (columns[j].categorical) {
      std::vector<std::string> values;
      for (const auto& rec : kept) values.push_back(rec.fields[j]);
      std::sort(values.begin(), values.end());
      values.erase(std::unique(values.begin(), values.end()), values.end());
      columns[j].categories = std::move(values);
    }
  }

  Dataset ds;
  ds.task = task;
  for (std::size_t j = 0; j < width; ++j) {
    if (j == target) continue;
    if (columns[j].categorical) {
      for (const auto& cat : columns[j].categories) ds.feature_names.push_back(names[j] + "=" + cat);
    } else {
      ds.feature_names.push_back(names[j]);
    }
  }
  const Index n = static_cast<Index>(kept.size());
  ds.X.resize(n, static_cast<Index>(ds.feature_names.size()));
  ds.y.resize(n);

  for (Index i = 0; i < n; ++i) {
    const CsvRow& rec = kept[static_cast<std::size_t>(i)];
    Index col = 0;
    for (std::size_t j = 0; j < width; ++j) {
      if (j == target) continue;
      if (columns[j].categorical) {
        for (const auto& cat : columns[j].categories) ds.X(i, col++) = rec.fields[j] == cat ? 1.0 : 0.0;
      } else {
        ds.X(i, col++) = *parse_number(rec.fields[j]);
      }
    }
  }

  if (!has_target) {
    ds.y = VectorXd::Zero(n);
    return ds;
  }
  std::vector<std::string> targets;
  for (const auto& rec : kept) targets.push_back(rec.fields[target]);
  switch (task) {
    case Task::regression:
      for (Index i = 0; i < n; ++i) {
        const auto v = parse_number(targets[static_cast<std::size_t>(i)]);
        if (!v) throw ParseError("non-numeric regression target '" + targets[static_cast<std::size_t>(i)] + "'",
                                 kept[static_cast<std::size_t>(i)].line);
        ds.y(i) = *v;
      }
      break;
    case Task::binary: {
      const auto labels = sorted_labels(targets);
      const bool signed_labels = std::all_of(labels.begin(), labels.end(), [](const std::string& v) {
        const auto x = parse_number(v);
        return x && (*x == 1.0 || *x == -1.0);
      });
      if (!signed_labels && labels.size() != 2)
        throw Error("binary task needs labels in {-1,+1} or exactly two distinct values, found " +
                    std::to_string(labels.size()));
      for (Index i = 0; i < n; ++i) {
        const std::string& t = targets[static_cast<std::size_t>(i)];
        ds.y(i) = signed_labels ? *parse_number(t) : (t == labels[0] ? -1.0 : 1.0);
      }
      ds.class_names = labels;
      break;
    }
    case Task::multiclass: {
      ds.class_names = sorted_labels(targets);
      std::map<std::string, double> id;
      for (std::size_t c = 0; c < ds.class_names.size(); ++c) id[ds.class_names[c]] = static_cast<double>(c);
      for (Index i = 0; i < n; ++i) ds.y(i) = id.at(targets[static_cast<std::size_t>(i)]);
      break;
    }
  }
  return ds;
}

Dataset align_features(const Dataset& ds, const std::vector<std::string>& names) {
  Dataset out = ds;
  out.feature_names = names;
  out.X = MatrixXd::Zero(ds.size(), static_cast<Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) {
    const auto it = std::find(ds.feature_names.begin(), ds.feature_names.end(), names[j]);
    if (it != ds.feature_names.end()) {
      out.X.col(static_cast<Index>(j)) = ds.X.col(static_cast<Index>(it - ds.feature_names.begin()));
    } else if (names[j].find('=') == std::string::npos) {
      throw Error("input data lacks feature column '" + names[j] + "'");
    }
  }
  return out;
}

Dataset load_csv(const std::filesystem::path& path, const std::string& target_column, Task task,
                 const CsvOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str(), target_column, task, options);
}

MatrixXd Standardizer::transform(const MatrixXd& X) const {
  if (X.cols() != mean.size()) throw Error("standardizer: feature count mismatch");
  MatrixXd out = X;
  for (Index j = 0; j < X.cols(); ++j) {
    if (constant[static_cast<std::size_t>(j)]) continue;
    out.col(j) = (X.col(j).array() - mean(j)) / std(j);
  }
  return out;
}

MatrixXd Standardizer::inverse_transform(const MatrixXd& X) const {
  if (X.cols() != mean.size()) throw Error("standardizer: feature count mismatch");
  MatrixXd out = X;
  for (Index j = 0; j < X.cols(); ++j) {
    if (constant[static_cast<std::size_t>(j)]) continue;
    out.col(j) = X.col(j).array() * std(j) + mean(j);
  }
  return out;
}

Dataset Standardizer::transform(const Dataset& ds) const {
  Dataset out = ds;
  out.X = transform(ds.X);
  if (ds.task == Task::regression) out.y.array() -= output_intercept;
  return out;
}

Standardized standardize(const Dataset& train, const std::vector<Dataset>& apply_to) {
  if (train.size() == 0) throw Error("standardize: empty training set");
  const Index n = train.size();
  Standardizer st;
  st.mean = train.X.colwise().mean().transpose();
  st.std = VectorXd::Zero(train.features());
  st.constant.assign(static_cast<std::size_t>(train.features()), true);
  if (n > 1) {
    for (Index j = 0; j < train.features(); ++j) {
      const double ss = (train.X.col(j).array() - st.mean(j)).square().sum();
      st.std(j) = std::sqrt(ss / static_cast<double>(n - 1));
      st.constant[static_cast<std::size_t>(j)] = !(st.std(j) > 0.0);
    }
  }
  if (train.task == Task::regression) st.output_intercept = train.y.mean();

  Standardized out;
  out.train = st.transform(train);
  for (const auto& ds : apply_to) out.others.push_back(st.transform(ds));
  out.standardizer = std::move(st);
  return out;
}

SplitIndices split_indices(Index n, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw Error("split: train fraction must lie in (0,1)");
  const auto n_train = static_cast<Index>(std::floor(train_fraction * static_cast<double>(n)));
  if (n_train < 1) throw Error("split: training part would be empty");
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  SplitIndices out;
  out.train.assign(perm.begin(), perm.begin() + n_train);
  out.test.assign(perm.begin() + n_train, perm.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

TrainTest split(const Dataset& ds, double train_fraction, std::uint64_t seed) {
  const auto idx = split_indices(ds.size(), train_fraction, seed);
  return {ds.subset(idx.train), ds.subset(idx.test)};
}

namespace {

std::vector<Fold> folds_from_assignment(const std::vector<int>& fold_of, int k) {
  std::vector<Fold> folds(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    for (int f = 0; f < k; ++f) {
      auto& fold = folds[static_cast<std::size_t>(f)];
      (fold_of[i] == f ? fold.validation : fold.train).push_back(static_cast<Index>(i));
    }
  }
  return folds;
}

void check_k(Index n, int k) {
  if (k < 2 || k > n)
    throw Error("k-fold: need 2 <= k <= " + std::to_string(n) + ", got " + std::to_string(k));
}

}  // namespace

std::vector<Fold> kfold(Index n, int k, std::uint64_t seed) {
  check_k(n, k);
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> fold_of(static_cast<std::size_t>(n));
  for (std::size_t p = 0; p < perm.size(); ++p)
    fold_of[static_cast<std::size_t>(perm[p])] = static_cast<int>(p % static_cast<std::size_t>(k));
  return folds_from_assignment(fold_of, k);
}

std::vector<Fold> stratified_kfold(const Dataset& ds, int k, std::uint64_t seed) {
  if (ds.task == Task::regression) return kfold(ds.size(), k, seed);
  check_k(ds.size(), k);
  std::map<double, std::vector<Index>> by_class;
  for (Index i = 0; i < ds.size(); ++i) by_class[ds.y(i)].push_back(i);

  std::mt19937_64 rng(seed);
  std::vector<int> fold_of(static_cast<std::size_t>(ds.size()));
  // Deal each class round-robin; the cursor carries over so fold sizes stay balanced too.
  std::size_t cursor = 0;
  for (auto& [label, members] : by_class) {
    if (static_cast<int>(members.size()) < k)
      warn("stratified k-fold: class " + std::to_string(label) + " has " + std::to_string(members.size()) +
           " members, fewer than k = " + std::to_string(k));
    std::shuffle(members.begin(), members.end(), rng);
    for (Index i : members) {
      fold_of[static_cast<std::size_t>(i)] = static_cast<int>(cursor % static_cast<std::size_t>(k));
      ++cursor;
    }
  }
  return folds_from_assignment(fold_of, k);
}

void write_indices(const std::filesystem::path& path, const std::vector<Index>& indices) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  for (Index i : indices) out << i << '\n';
}

}  // namespace rls2
