#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "asc/nn/params.h"

namespace asc::nn {

struct BlockCheck {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradCheckResult {
  std::vector<BlockCheck> blocks;

  double max_rel_error() const;
};

/// Denominators below this are clamped so exact zeros compare as absolute
/// error.
inline constexpr double kGradCheckFloor = 1e-6;

double relative_error(double analytic, double numeric);

/// Central differences on a seeded sample of at least `coords_per_block`
/// coordinates per block (every coordinate when the block is smaller). The
/// loss is re-evaluated with `params` perturbed in place and restored.
GradCheckResult grad_check(const std::function<double()>& loss, ParamSet<double>& params,
                           const ParamSet<double>& analytic, double eps = 1e-5,
                           int coords_per_block = 200, std::uint64_t seed = 0);

}  // namespace asc::nn
