#pragma once

#include "vtt/fusion.hpp"

namespace vtt {

struct LatentConfig {
  int z_vtt = 64;  // width of the fusion code
  int action_dim = 2;
  int d_z = 32;
  int hidden = 64;
  int decoder_hidden = 128;
  int image_hw = 24;
  double kl_beta = 1.0;

  void validate() const;
};

/// Diagonal Gaussian belief with its reparameterized sample.
template <class T>
struct LatentBelief {
  Tensor<T> mu;
  Tensor<T> logvar;  // clamped to [-10, 4]
  Tensor<T> sample;  // mu + exp(logvar / 2) * eps
  Tensor<T> eps;

  Tensor<T> var() const { return exp(logvar); }
};

template <class T>
class LatentModel {
 public:
  LatentModel(const LatentConfig& cfg, SeededRng& rng);

  const LatentConfig& config() const { return cfg_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }

  /// Learned prior for the first step of a window, broadcast to `batch` rows.
  LatentBelief<T> initial_prior(int batch, SeededRng* rng) const;
  /// First-step posterior from the current code.
  LatentBelief<T> initial_posterior(const Tensor<T>& z_vtt, SeededRng* rng) const;
  /// p(z^d_t | z^d_{t-1}, a_{t-1}).
  LatentBelief<T> prior_step(const Tensor<T>& zd_prev, const Tensor<T>& action, SeededRng* rng) const;
  /// q(z^d_t | z^d_{t-1}, z_{t-1}, a_{t-1}).
  LatentBelief<T> posterior_step(const Tensor<T>& zd_prev, const Tensor<T>& z_vtt_prev, const Tensor<T>& action,
                                 SeededRng* rng) const;

  /// [B x H*W*3] decoded image mean.
  Tensor<T> decode_image(const Tensor<T>& zd, const Tensor<T>& action) const;
  /// [B x 1] predicted reward.
  Tensor<T> predict_reward(const Tensor<T>& zd, const Tensor<T>& action) const;

 private:
  LatentBelief<T> make_belief(const Tensor<T>& out, SeededRng* rng) const;

  LatentConfig cfg_;
  ParameterSet<T> params_;
  Tensor<T> init_mu_, init_logvar_;
  Mlp2<T> init_post_, prior_, post_, decoder_, reward_;
};

/// Build a belief from explicit mean, log-variance and noise (sample = mu + exp(lv/2) eps).
template <class T>
LatentBelief<T> belief_from(const Tensor<T>& mu, const Tensor<T>& logvar, const Tensor<T>& eps);

/// Closed-form KL(q || p) for diagonal Gaussians, summed over features and
/// averaged over rows.
template <class T>
Tensor<T> kl_gaussians(const LatentBelief<T>& q, const LatentBelief<T>& p);

/// Unit-variance Gaussian negative log-likelihood, summed over features and
/// averaged over rows: 0.5 |x - mean|^2 (+ 0.5 D log 2 pi when requested).
template <class T>
Tensor<T> gaussian_nll(const Tensor<T>& mean, const Tensor<T>& target, bool with_constant = true);

template <class T>
Tensor<T> reconstruction_loss(const LatentModel<T>& m, const Tensor<T>& zd, const Tensor<T>& action,
                              const Tensor<T>& target_images, bool with_constant = true);
template <class T>
Tensor<T> reward_loss(const LatentModel<T>& m, const Tensor<T>& zd, const Tensor<T>& action,
                      const Tensor<T>& target_rewards, bool with_constant = true);

/// A batch of B windows of length `steps`, stored time-major (row t*B + b).
template <class T>
struct SequenceBatch {
  int batch = 0;
  int steps = 0;
  ObservationBatch<T> obs;    // [steps*B] aligned pairs
  Tensor<T> prev_actions;     // [steps*B x action_dim], a_{t-1} (zeros at episode start)
  Tensor<T> rewards;          // [steps*B x 1], reward for arriving at step t
  Tensor<T> reward_mask;      // [steps*B x 1], 0 where no transition precedes step t
  Tensor<T> contacts;         // [steps*B x 1]
  ObservationBatch<T> negatives;  // misaligned pairs; batch may be 0
};

struct ModelLossOptions {
  bool contact_loss = true;
  bool align_loss = true;
  /// Weight of the fusion regularizer (PoE only).
  double regularizer_weight = 1.0;
  /// Add the Gaussian normalization constants (gradient-free).
  bool with_constants = false;
};

template <class T>
struct ModelLossTerms {
  Tensor<T> total;
  double reconstruction = 0, reward = 0, kl = 0, vtt = 0, regularizer = 0;
  /// Posterior samples per step, [steps*B x d_z].
  Tensor<T> latents;
  /// Fusion codes of the aligned observations, [steps*B x z].
  Tensor<T> codes;
  Tensor<T> contact_logits, align_logits, negative_logits;
};

/// Sum over the window of reconstruction + reward + beta*KL + vtt terms,
/// averaged over the batch. Misaligned pairs contribute only the alignment
/// BCE (label 0), scaled so one negative per aligned step has the same weight
/// as a positive.
template <class T>
ModelLossTerms<T> model_loss(const FusionModel<T>& fusion, const LatentModel<T>& model, const SequenceBatch<T>& b,
                             SeededRng& rng, const ModelLossOptions& opt = {});

}  // namespace vtt
