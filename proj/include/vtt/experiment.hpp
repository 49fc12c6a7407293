#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vtt/archive.hpp"
#include "vtt/config.hpp"
#include "vtt/heatmap.hpp"

namespace vtt {

struct EpisodeDataset {
  int image_hw = 0;
  std::vector<Episode> episodes;

  std::size_t steps() const;
  double contact_fraction() const;

  /// Tensors "meta.image_hw", "meta.episodes" and, per episode i,
  /// "episode.<i>.{image,wrench,action,reward,contact,done,success}".
  TensorArchive to_archive() const;
  static EpisodeDataset from_archive(const TensorArchive& a);
  void save(const std::string& path) const { to_archive().save(path); }
  static EpisodeDataset load(const std::string& path) { return from_archive(TensorArchive::load(path)); }
};

/// Episode i is rolled out with SeededRng(seed).split(i), so the file does not
/// depend on generation order. Its policy is drawn from the configured mixture.
EpisodeDataset generate_dataset(const ExperimentConfig& cfg);
Episode generate_episode(const ExperimentConfig& cfg, int index);

/// Fusion model, latent model, actor and critic for one configuration.
class Agent {
 public:
  explicit Agent(const ExperimentConfig& cfg);

  const ExperimentConfig& config() const { return cfg_; }
  FusionModel<float>& fusion() { return *fusion_; }
  const FusionModel<float>& fusion() const { return *fusion_; }
  LatentModel<float>& latent() { return *latent_; }
  const LatentModel<float>& latent() const { return *latent_; }
  Actor<float>& actor() { return *actor_; }
  const Actor<float>& actor() const { return *actor_; }
  Critic<float>& critic() { return *critic_; }
  const Critic<float>& critic() const { return *critic_; }

  /// Fusion and latent-model parameters.
  std::vector<Tensor<float>> model_params() const;

  /// All parameters plus "meta.fusion"; critic targets are stored under "target.".
  TensorArchive to_archive() const;
  /// Throws ConfigError when the archive was written for another configuration.
  void load(const TensorArchive& a);

  /// Deterministic (null rng) or sampled action for one observation.
  std::array<double, 2> act(const Observation& obs, const std::array<double, 2>& prev_action, SeededRng* rng) const;

 private:
  ExperimentConfig cfg_;
  std::unique_ptr<FusionModel<float>> fusion_;
  std::unique_ptr<LatentModel<float>> latent_;
  std::unique_ptr<Actor<float>> actor_;
  std::unique_ptr<Critic<float>> critic_;
};

/// B windows of `window` consecutive tuples from episodes at least that long,
/// with one misaligned pair per aligned step when `negatives` is set (wrench
/// from a uniformly drawn step at least 3 steps away in the same episode).
SequenceBatch<float> sample_windows(const std::vector<const Episode*>& episodes, int image_hw, int batch, int window,
                                    bool negatives, SeededRng& rng);

struct ReprStepMetrics {
  int step = 0;
  double total = 0, reconstruction = 0, reward = 0, kl = 0, vtt = 0, regularizer = 0;
};

struct HeadAccuracy {
  double contact = -1;  // -1 when the model has no such head
  double align = -1;
  std::size_t contact_samples = 0;
  std::size_t align_samples = 0;
};

struct ReprResult {
  std::vector<ReprStepMetrics> log;
  HeadAccuracy holdout;
  std::size_t train_episodes = 0;
  std::size_t holdout_episodes = 0;
  double final_kl_per_step = 0;  // mean over the last 100 logged steps
};

/// Positives are every step of `episodes`; each gets one misaligned partner.
HeadAccuracy evaluate_heads(const FusionModel<float>& fusion, const std::vector<const Episode*>& episodes, int image_hw,
                            SeededRng& rng);

/// Adam on the model loss over windows of the training split; the last
/// `repr.holdout` fraction of episodes is held out for head accuracy.
ReprResult train_repr(Agent& agent, const EpisodeDataset& data,
                      const std::function<void(const ReprStepMetrics&)>& on_step = {});

struct EpisodeReturn {
  int episode = 0;
  double ret = 0;
  bool success = false;
  int steps = 0;
};

struct ReturnStats {
  double mean = 0;
  double std_error = 0;
  double success_rate = 0;
  int episodes = 0;
};
ReturnStats summarize(const std::vector<EpisodeReturn>& eps);

struct RlResult {
  std::vector<EpisodeReturn> episodes;  // training episodes in order
  ReturnStats last;                     // last 50 training episodes
  ReturnStats random;                   // uniform-random policy baseline
  ReturnStats eval;                     // deterministic policy after training
  long env_steps = 0;
  long updates = 0;
};

std::vector<EpisodeReturn> run_policy_episodes(const ExperimentConfig& cfg, const Agent* agent, int count,
                                               std::uint64_t stream);

/// Interleaves environment steps with model, critic and actor updates.
RlResult train_rl(Agent& agent, const std::function<void(const EpisodeReturn&)>& on_episode = {});

struct AttentionShift {
  int episodes = 0;
  std::size_t in_contact_steps = 0;
  std::size_t pre_contact_steps = 0;
  double in_contact_tactile = 0;  // mean tactile proportion over in-contact steps
  double pre_contact_tactile = 0;
  double pre_contact_visual = 0;
};

/// Scripted-pusher episodes through the trained encoder. With a non-empty
/// `out_dir`, writes episode_<k>/t_<t>.ppm per step and episode_<k>/proportions.csv.
AttentionShift analyze_attention(const Agent& agent, int episodes, const std::string& out_dir);

}  // namespace vtt
