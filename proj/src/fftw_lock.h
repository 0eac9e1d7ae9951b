#pragma once

#include <mutex>

namespace asc::detail {

// FFTW's planner is not reentrant; only fftw_execute is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace asc::detail
