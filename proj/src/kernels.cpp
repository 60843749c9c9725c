#include "rls2/kernels.hpp"

#include "json_codec.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace rls2 {

void BasisKernelSpec::validate(Index n_features) const {
  auto check_index = [&](Index j) {
    if (j < 0 || j >= n_features)
      throw Error("kernel " + describe() + ": feature index " + std::to_string(j) + " out of range [0, " +
                  std::to_string(n_features) + ")");
  };
  switch (kind) {
    case KernelKind::linear_feature:
      check_index(feature);
      return;
    case KernelKind::polynomial:
      if (degree < 1) throw Error("polynomial kernel degree must be >= 1");
      break;
    case KernelKind::gaussian:
      if (!(gamma > 0.0) || !std::isfinite(gamma)) throw Error("gaussian kernel width must be positive");
      break;
  }
  for (Index j : features) check_index(j);
}

std::string BasisKernelSpec::describe() const {
  std::ostringstream os;
  auto subset = [&] {
    if (all_features()) return std::string("all");
    std::string out;
    for (std::size_t i = 0; i < features.size(); ++i) out += (i ? "," : "") + std::to_string(features[i]);
    return out;
  };
  switch (kind) {
    case KernelKind::linear_feature: os << "linear(" << feature << ")"; break;
    case KernelKind::polynomial: os << "poly(n=" << degree << "; " << subset() << ")"; break;
    case KernelKind::gaussian: os << "rbf(gamma=" << gamma << "; " << subset() << ")"; break;
  }
  return os.str();
}

std::string to_string(ScalingKind kind) {
  switch (kind) {
    case ScalingKind::unit: return "unit";
    case ScalingKind::trace_inverse: return "trace";
    case ScalingKind::trace_inverse_centered: return "trace-centered";
    case ScalingKind::feature_norm_inverse: return "feature-norm";
    case ScalingKind::fisher: return "fisher";
    case ScalingKind::fisher_sqrt: return "fisher-sqrt";
    case ScalingKind::fisher_nonlinear: return "fisher-nl";
  }
  return "unit";
}

ScalingKind scaling_from_string(const std::string& name) {
  for (auto kind : {ScalingKind::unit, ScalingKind::trace_inverse, ScalingKind::trace_inverse_centered,
                    ScalingKind::feature_norm_inverse, ScalingKind::fisher, ScalingKind::fisher_sqrt,
                    ScalingKind::fisher_nonlinear}) {
    if (to_string(kind) == name) return kind;
  }
  throw Error("unknown scaling rule '" + name + "'");
}

std::vector<BasisKernelSpec> default_benchmark_specs(Index n_features) {
  if (n_features < 1) throw Error("default_benchmark_specs: need at least one feature");
  std::vector<std::vector<Index>> subsets;
  for (Index j = 0; j < n_features; ++j) subsets.push_back({j});
  subsets.push_back({});

  std::vector<BasisKernelSpec> specs;
  for (const auto& subset : subsets) {
    for (int degree = 1; degree <= 3; ++degree) specs.push_back(BasisKernelSpec::polynomial(degree, subset));
    for (int g = 0; g < 10; ++g) {
      const double gamma = std::pow(10.0, -3.0 + 6.0 * g / 9.0);
      specs.push_back(BasisKernelSpec::gaussian(gamma, subset));
    }
  }
  return specs;
}

std::vector<BasisKernelSpec> linear_feature_specs(Index n_features) {
  std::vector<BasisKernelSpec> specs;
  for (Index j = 0; j < n_features; ++j) specs.push_back(BasisKernelSpec::linear(j));
  return specs;
}

namespace codec {

nlohmann::json spec_to_json(const BasisKernelSpec& spec) {
  nlohmann::json j;
  switch (spec.kind) {
    case KernelKind::linear_feature:
      j["kind"] = "linear_feature";
      j["feature"] = spec.feature;
      return j;
    case KernelKind::polynomial:
      j["kind"] = "polynomial";
      j["degree"] = spec.degree;
      break;
    case KernelKind::gaussian:
      j["kind"] = "gaussian";
      j["gamma"] = encode_double(spec.gamma);
      break;
  }
  if (spec.all_features())
    j["features"] = "all";
  else
    j["features"] = spec.features;
  return j;
}

BasisKernelSpec spec_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  BasisKernelSpec spec;
  if (kind == "linear_feature") {
    spec.kind = KernelKind::linear_feature;
    spec.feature = j.at("feature").get<Index>();
    return spec;
  }
  if (kind == "polynomial") {
    spec.kind = KernelKind::polynomial;
    spec.degree = j.at("degree").get<int>();
  } else if (kind == "gaussian") {
    spec.kind = KernelKind::gaussian;
    spec.gamma = decode_double(j.at("gamma"));
  } else {
    throw Error("unknown kernel kind '" + kind + "'");
  }
  const auto& features = j.at("features");
  if (features.is_string()) {
    if (features.get<std::string>() != "all") throw Error("kernel features must be \"all\" or an index list");
  } else {
    spec.features = features.get<std::vector<Index>>();
  }
  return spec;
}

}  // namespace codec

std::vector<BasisKernelSpec> parse_kernel_specs(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(std::string("kernel spec file: ") + e.what());
  }
  try {
    if (doc.value("format", "") != "rls2-kernels") throw Error("kernel spec file: missing format tag");
    if (doc.at("version").get<int>() != 1)
      throw Error("kernel spec file: unsupported version " + doc.at("version").dump());
    std::vector<BasisKernelSpec> specs;
    for (const auto& entry : doc.at("kernels")) specs.push_back(codec::spec_from_json(entry));
    if (specs.empty()) throw Error("kernel spec file lists no kernels");
    return specs;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("kernel spec file: ") + e.what());
  }
}

std::vector<BasisKernelSpec> read_kernel_specs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_kernel_specs(buffer.str());
}

std::string format_kernel_specs(const std::vector<BasisKernelSpec>& specs) {
  nlohmann::json doc;
  doc["format"] = "rls2-kernels";
  doc["version"] = 1;
  doc["kernels"] = nlohmann::json::array();
  for (const auto& spec : specs) doc["kernels"].push_back(codec::spec_to_json(spec));
  return doc.dump(2) + "\n";
}

void write_kernel_specs(const std::filesystem::path& path, const std::vector<BasisKernelSpec>& specs) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << format_kernel_specs(specs);
}

}  // namespace rls2
