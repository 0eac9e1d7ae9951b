#pragma once

#include <cmath>

#include "asc/error.h"
#include "asc/nn/params.h"

namespace asc::nn {

template <typename Real>
struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  ParamSet<Real> m;  // first moment
  ParamSet<Real> v;  // second moment
};

/// Bias-corrected Adam update; moments are allocated on first use.
template <typename Real>
void adam_step(ParamSet<Real>& params, const ParamSet<Real>& grads, AdamState<Real>& st) {
  if (!params.same_layout(grads)) throw DataError("adam_step: gradient layout does not match");
  if (st.m.size() == 0) {
    st.m = params.zeros_like();
    st.v = params.zeros_like();
  } else if (!params.same_layout(st.m)) {
    throw DataError("adam_step: optimizer state layout does not match");
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  const double step_size = st.lr / c1;
  for (int b = 0; b < params.size(); ++b) {
    auto& p = params[b].values;
    const auto& g = grads[b].values;
    auto& m = st.m[b].values;
    auto& v = st.v[b].values;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mi = st.beta1 * m[i] + (1.0 - st.beta1) * gi;
      const double vi = st.beta2 * v[i] + (1.0 - st.beta2) * gi * gi;
      m[i] = static_cast<Real>(mi);
      v[i] = static_cast<Real>(vi);
      p[i] = static_cast<Real>(p[i] - step_size * mi / (std::sqrt(vi / c2) + st.eps));
    }
  }
}

}  // namespace asc::nn
