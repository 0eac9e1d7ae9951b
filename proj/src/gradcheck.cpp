#include "asc/nn/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "asc/error.h"
#include "asc/random.h"

namespace asc::nn {

double GradCheckResult::max_rel_error() const {
  double worst = 0.0;
  for (const auto& b : blocks) worst = std::max(worst, b.max_rel_error);
  return worst;
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult grad_check(const std::function<double()>& loss, ParamSet<double>& params,
                           const ParamSet<double>& analytic, double eps, int coords_per_block,
                           std::uint64_t seed) {
  if (!params.same_layout(analytic)) throw DataError("grad_check: gradient layout mismatch");
  GradCheckResult result;
  for (int b = 0; b < params.size(); ++b) {
    auto& values = params[b].values;
    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > static_cast<std::size_t>(coords_per_block)) {
      Rng rng(derive_seed(seed, params[b].name));
      shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<std::size_t>(coords_per_block));
      std::sort(coords.begin(), coords.end());
    }
    BlockCheck check{params[b].name, coords.size(), 0.0, 0.0};
    for (std::size_t i : coords) {
      const double orig = values[i];
      values[i] = orig + eps;
      const double up = loss();
      values[i] = orig - eps;
      const double down = loss();
      values[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[b].values[i];
      check.max_rel_error = std::max(check.max_rel_error, relative_error(a, numeric));
      check.max_abs_error = std::max(check.max_abs_error, std::abs(a - numeric));
    }
    result.blocks.push_back(std::move(check));
  }
  return result;
}

}  // namespace asc::nn
