#pragma once

#include "vtt/nn.hpp"

namespace vtt {

struct SacConfig {
  int actor_input = 66;  // z_t plus a_{t-1}
  int latent_dim = 32;   // z^d fed to the critics
  int action_dim = 2;
  int hidden = 64;
  double alpha = 0.1;
  double gamma = 0.99;
  double rho = 0.005;

  void validate() const;
};

template <class T>
struct ActorSample {
  Tensor<T> action;    // tanh(u), [B x A]
  Tensor<T> log_prob;  // [B x 1], includes the tanh Jacobian
  Tensor<T> pre_tanh;  // u
  Tensor<T> mean;
  Tensor<T> log_std;   // clamped to [-5, 2]
};

/// Tanh-squashed diagonal Gaussian policy.
template <class T>
class Actor {
 public:
  Actor(const SacConfig& cfg, SeededRng& rng);

  const SacConfig& config() const { return cfg_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }

  /// Reparameterized sample. With a null rng the noise is zero, which gives
  /// the deterministic action tanh(mean).
  ActorSample<T> sample(const Tensor<T>& input, SeededRng* rng) const;

 private:
  SacConfig cfg_;
  ParameterSet<T> params_;
  Mlp2<T> net_;
};

/// Twin Q maps on (z^d, a) with delayed copies.
template <class T>
class Critic {
 public:
  Critic(const SacConfig& cfg, SeededRng& rng);

  const SacConfig& config() const { return cfg_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }
  ParameterSet<T>& target_params() { return target_params_; }
  const ParameterSet<T>& target_params() const { return target_params_; }

  std::pair<Tensor<T>, Tensor<T>> q(const Tensor<T>& zd, const Tensor<T>& action) const;
  std::pair<Tensor<T>, Tensor<T>> target_q(const Tensor<T>& zd, const Tensor<T>& action) const;

 private:
  SacConfig cfg_;
  ParameterSet<T> params_, target_params_;
  Mlp2<T> q1_, q2_, t1_, t2_;
};

/// Transitions for one SAC update. Rows of `zd` are posterior latents that may
/// still carry gradient into the representation.
template <class T>
struct SacBatch {
  Tensor<T> zd, actor_in;            // state at tau
  Tensor<T> action, reward, done;    // [B x A], [B x 1], [B x 1]
  Tensor<T> next_zd, next_actor_in;  // state at tau + 1
};

/// Mean over the batch of 0.5 (Q_i - y)^2 summed over both critics, with
/// y = r + gamma (1 - done) (min target Q(z', a') - alpha log pi(a')).
template <class T>
Tensor<T> critic_loss(const Actor<T>& actor, const Critic<T>& critic, const SacBatch<T>& b, SeededRng& rng);

/// Mean of alpha log pi(a) - min Q(z, a) with a reparameterized; states are
/// detached so nothing upstream of the latents receives policy gradient.
template <class T>
Tensor<T> actor_loss(const Actor<T>& actor, const Critic<T>& critic, const SacBatch<T>& b, SeededRng& rng);

/// target <- (1 - rho) target + rho main.
template <class T>
void target_update(Critic<T>& critic, double rho);

}  // namespace vtt
