#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vtt/config.hpp"
#include "vtt/gradcheck.hpp"

namespace vtt {

struct ModuleCheck {
  std::string module;
  GradCheckReport report;
};

/// Finite-difference checks in double precision at d=8, h=2, N=1, d_z=4:
/// encoder with both heads and compression, concat, PoE, the sequence model
/// loss through the VTT encoder, and both SAC losses.
std::vector<ModuleCheck> gradcheck_suite(std::uint64_t seed, const GradCheckOptions& options = {});

struct ParamRow {
  std::string name;
  std::size_t count = 0;
};

/// Per-module counts for the configured fusion kind, ending with "total".
std::vector<ParamRow> parameter_table(const ExperimentConfig& cfg);

/// Encoder-only counts at full scale: vtt, concat, poe and the adjusted baselines.
struct FullScaleParams {
  std::size_t vtt = 0, concat = 0, poe = 0, concat_adjusted = 0, poe_adjusted = 0;
  double vtt_concat_ratio() const { return static_cast<double>(vtt) / static_cast<double>(concat); }
};
FullScaleParams full_scale_parameter_counts();

}  // namespace vtt
