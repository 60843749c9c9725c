#include "rls2/linear.hpp"
#include "rls2/rls2.hpp"

namespace rls2 {

void write_path_csv(std::ostream& os, const std::vector<PathDiagnostics>& diagnostics, bool timing) {
  os << "lambda,objective,n_kernels,outer_iterations,wall_seconds\n";
  os.precision(17);
  for (const auto& d : diagnostics) {
    os << d.lambda << ',' << d.objective << ',' << d.n_kernels << ',' << d.outer_iterations << ',';
    if (timing)
      os << d.wall_seconds;
    else
      os << "NA";
    os << '\n';
  }
}

void write_coefficient_csv(std::ostream& os, const std::vector<CoefficientRow>& rows) {
  os << "lambda,df";
  const Index n = rows.empty() ? 0 : rows.front().a.size();
  for (Index j = 1; j <= n; ++j) os << ",a_" << j;
  os << '\n';
  os.precision(17);
  for (const auto& row : rows) {
    os << row.lambda << ',' << row.df;
    for (Index j = 0; j < row.a.size(); ++j) os << ',' << row.a(j);
    os << '\n';
  }
}

}  // namespace rls2
