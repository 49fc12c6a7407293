#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vtt/parameters.hpp"

namespace vtt {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-3;
  /// Check at most this many randomly chosen entries per tensor; 0 checks all.
  std::size_t max_entries_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
  bool passed = true;
};

/// Compares reverse-mode gradients of `loss` against central differences.
///
/// `loss` must rebuild the tape from the current parameter values on every
/// call and be deterministic. The relative error of one entry is
/// |a - n| / max(|a|, |n|, floor) with floor = 1e-6 * max(1, max |a|), so
/// entries whose true gradient is zero do not divide by zero. Throws
/// ValidationError naming the parameter if any loss or gradient is non-finite.
GradCheckReport finite_diff_check(const std::function<Tensor<double>()>& loss,
                                  const std::vector<NamedTensor<double>>& params,
                                  const GradCheckOptions& options = {});

}  // namespace vtt
