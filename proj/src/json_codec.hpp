#ifndef RLS2_SRC_JSON_CODEC_HPP
#define RLS2_SRC_JSON_CODEC_HPP

// Shared JSON encoding for the kernel spec and model files.

#include "rls2/common.hpp"
#include "rls2/kernels.hpp"

#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <string>

namespace rls2::codec {

// Hexadecimal float text ("%a") round-trips every double bit-for-bit.
inline std::string encode_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline double decode_double(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  const std::string text = j.get<std::string>();
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || *end != '\0') throw Error("malformed number '" + text + "'");
  return v;
}

template <typename Derived>
nlohmann::json encode_array(const Eigen::DenseBase<Derived>& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(encode_double(static_cast<double>(v(i))));
  return out;
}

inline VectorXd decode_vector(const nlohmann::json& j) {
  VectorXd v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = decode_double(j[i]);
  return v;
}

// Row-major flattening, with explicit shape.
inline nlohmann::json encode_matrix(const MatrixXd& m) {
  nlohmann::json out;
  out["rows"] = m.rows();
  out["cols"] = m.cols();
  nlohmann::json data = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) data.push_back(encode_double(m(i, j)));
  out["data"] = std::move(data);
  return out;
}

inline MatrixXd decode_matrix(const nlohmann::json& j) {
  const Index rows = j.at("rows").get<Index>();
  const Index cols = j.at("cols").get<Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || static_cast<Index>(data.size()) != rows * cols)
    throw Error("matrix payload does not match its shape");
  MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Index i = 0; i < rows; ++i)
    for (Index jj = 0; jj < cols; ++jj) m(i, jj) = decode_double(data[k++]);
  return m;
}

nlohmann::json spec_to_json(const BasisKernelSpec& spec);
BasisKernelSpec spec_from_json(const nlohmann::json& j);

}  // namespace rls2::codec

#endif  // RLS2_SRC_JSON_CODEC_HPP
