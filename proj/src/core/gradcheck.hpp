#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tape.hpp"

namespace dipm::ad {

// f is evaluated two ways from the same callable: once on a tape with every
// input registered as a parameter (reverse-mode gradient), and 2n times on
// constants for central finite differences.
using ScalarFn = std::function<Value(std::span<const Value>)>;

struct GradCheckResult {
  double max_rel_err = 0.0;   // max_i |g_ad - g_fd| / max(1, |g_fd|)
  size_t worst_index = 0;
  std::vector<double> ad_grad;
  std::vector<double> fd_grad;
};

GradCheckResult grad_check(const ScalarFn& f, std::span<const double> params,
                           double h = 1e-6);

}  // namespace dipm::ad
