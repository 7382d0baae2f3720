#include "arnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace arnn {

double finite_diff_check(const std::function<Tensor()>& f, std::span<const Tensor> params,
                         double epsilon) {
  if (!(epsilon > 0.0)) throw ContractError("finite_diff_check: epsilon must be positive");
  std::vector<Tensor> handles(params.begin(), params.end());
  for (auto& p : handles) p.zero_grad();
  f().backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(handles.size());
  for (const auto& p : handles) {
    const auto g = p.grad();
    analytic.emplace_back(g.empty() ? std::vector<double>(p.numel(), 0.0)
                                    : std::vector<double>(g.begin(), g.end()));
  }

  NoGradGuard no_grad;
  double worst = 0.0;
  for (std::size_t pi = 0; pi < handles.size(); ++pi) {
    auto values = handles[pi].mutable_values();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      values[k] = saved + epsilon;
      const double up = f().item();
      values[k] = saved - epsilon;
      const double down = f().item();
      values[k] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[pi][k];
      const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      if (std::isnan(err)) return std::numeric_limits<double>::quiet_NaN();
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace arnn
