#pragma once

#include <cstdint>
#include <string>

#include "vtt/env.hpp"
#include "vtt/fusion.hpp"
#include "vtt/latent.hpp"
#include "vtt/policy.hpp"

namespace vtt {

/// Episode mixture for gen-data; the rest of the mass goes to the random policy.
struct DataConfig {
  int episodes = 50;
  double mix_orbit = 0.7;
  double mix_scripted = 0.25;  // goal-directed pusher with action noise
};

struct ReprConfig {
  int steps = 3000;
  int batch = 8;
  int window = 8;
  double lr = 1e-3;
  double max_grad_norm = 20.0;
  double holdout = 0.2;  // fraction of episodes held out for head accuracy
  bool contact_loss = true;
  bool align_loss = true;
};

struct RlConfig {
  int env_steps = 20000;
  int warmup_steps = 2000;  // uniform random actions, no updates
  int update_every = 2;
  int batch = 16;
  int window = 4;
  int hidden = 64;
  double model_lr = 3e-4;
  double critic_lr = 3e-4;
  double actor_lr = 3e-4;
  double alpha = 0.1;
  double gamma = 0.99;
  double rho = 0.005;
  int eval_episodes = 50;
  int random_episodes = 50;
};

struct HeatmapConfig {
  int episodes = 10;
  bool all_layers = false;  // mean over layers instead of the final layer
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  FusionKind fusion = FusionKind::kVtt;
  int image_hw = 24;
  int patch_px = 4;
  VttConfig vtt;  // image_hw/patch_px and token flags are derived
  BaselineConfig baseline;
  EnvConfig env;
  LatentConfig latent;
  DataConfig data;
  ReprConfig repr;
  RlConfig rl;
  HeatmapConfig heatmap;

  /// Copies the shared keys into the sub-configs and checks everything.
  void validate();
  /// VTT config with the ablation implied by `fusion` applied.
  VttConfig effective_vtt() const;
  SacConfig sac(int z_dim) const;

  /// key = value lines, '#' comments. Unknown or repeated keys are ConfigErrors.
  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig load(const std::string& path);
  /// Every key with its effective value; parse(to_text()) reproduces the config.
  std::string to_text() const;
  void save(const std::string& path) const;
  /// Applies one key=value override.
  void set(const std::string& key, const std::string& value);
};

}  // namespace vtt
