#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "asc/models.h"
#include "asc/nn/gradcheck.h"

namespace asc {

struct GradCheckRow {
  std::string target;  // layer or architecture
  std::string block;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  bool pass = false;
};

struct GradCheckSuiteOptions {
  double tolerance = 1e-4;
  /// Central-difference step. 1e-4 balances truncation against the ~1e-15
  /// rounding noise of a loss of order one.
  double eps = 1e-4;
  int coords_per_block = 200;
  std::uint64_t seed = 0;
  /// Negates the analytic GRU recurrent-weight gradient (negative control).
  bool corrupt_gru = false;
};

/// The "tiny" profile: Q=4, H=8, M=8, C=3, T=12.
Architecture tiny_architecture(ModelKind kind, EarlyFusion fusion = EarlyFusion::sum);

/// fp64 check of one architecture on a fixed random batch, in train mode
/// with fixed dropout masks and lambda = 1e-3.
nn::GradCheckResult check_architecture(const Architecture& arch, const GradCheckSuiteOptions& opts);

/// Layer-level checks (dense, sigmoid, softmax cross-entropy, GRU step)
/// followed by CNN, RNN and the three C-RNN fusions.
std::vector<GradCheckRow> run_gradcheck_suite(const GradCheckSuiteOptions& opts = {});

}  // namespace asc
