#include "vtt/policy.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace vtt {

namespace {

constexpr double kLogStdMin = -5.0;
constexpr double kLogStdMax = 2.0;

void require(const Shape& got, const Shape& want, const char* what) {
  if (got != want) throw ShapeError(std::string(what) + ": expected " + shape_str(want) + ", got " + shape_str(got));
}

}  // namespace

void SacConfig::validate() const {
  if (actor_input <= 0 || latent_dim <= 0 || action_dim <= 0 || hidden <= 0) {
    throw ConfigError("sac config: widths must be positive");
  }
  if (!(alpha >= 0.0)) throw ConfigError("sac config: alpha must be non-negative");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("sac config: gamma must lie in [0, 1]");
  if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("sac config: rho must lie in [0, 1]");
}

template <class T>
Actor<T>::Actor(const SacConfig& cfg, SeededRng& rng) : cfg_(cfg) {
  cfg_.validate();
  net_ = make_mlp2(params_, "actor", cfg_.actor_input, cfg_.hidden, 2 * cfg_.action_dim, rng);
}

template <class T>
ActorSample<T> Actor<T>::sample(const Tensor<T>& input, SeededRng* rng) const {
  const int B = input.rows(), A = cfg_.action_dim;
  require(input.shape(), {B, cfg_.actor_input}, "actor input");
  Tensor<T> out = net_(input);
  ActorSample<T> s;
  s.mean = slice_cols(out, 0, A);
  s.log_std = clamp(slice_cols(out, A, A), static_cast<T>(kLogStdMin), static_cast<T>(kLogStdMax));
  std::vector<T> e(static_cast<std::size_t>(B) * A, T{0});
  if (rng) {
    for (auto& x : e) x = static_cast<T>(rng->normal());
  }
  Tensor<T> eps = Tensor<T>::from({B, A}, e);
  s.pre_tanh = s.mean + exp(s.log_std) * eps;
  // tanh rounds to exactly +-1 once |u| passes ~9 (float) or ~19 (double);
  // keep the action strictly inside the box. The gradient there is already 0.
  const T edge = T{1} - std::numeric_limits<T>::epsilon();
  s.action = clamp(tanh(s.pre_tanh), -edge, edge);
  // log N(u; mean, std) with u - mean = std * eps, minus log |d tanh/du| written
  // as 2 (log 2 - u - softplus(-2u)) for stability.
  const T half_log_2pi = static_cast<T>(0.5 * std::log(2.0 * std::numbers::pi));
  Tensor<T> gauss = add_scalar(scale(square(eps), T{-0.5}) - s.log_std, -half_log_2pi);
  Tensor<T> jac = scale(add_scalar(scale(s.pre_tanh, T{-1}) - softplus(scale(s.pre_tanh, T{-2})),
                                   static_cast<T>(std::numbers::ln2)),
                        T{2});
  s.log_prob = row_sum(gauss - jac);
  return s;
}

template <class T>
Critic<T>::Critic(const SacConfig& cfg, SeededRng& rng) : cfg_(cfg) {
  cfg_.validate();
  const int in = cfg_.latent_dim + cfg_.action_dim;
  q1_ = make_mlp2(params_, "critic.q1", in, cfg_.hidden, 1, rng);
  q2_ = make_mlp2(params_, "critic.q2", in, cfg_.hidden, 1, rng);
  SeededRng unused(0);
  t1_ = make_mlp2(target_params_, "critic.q1", in, cfg_.hidden, 1, unused);
  t2_ = make_mlp2(target_params_, "critic.q2", in, cfg_.hidden, 1, unused);
  target_params_.copy_from(params_);
  for (const auto& e : target_params_.entries()) {
    Tensor<T> t = e.tensor;
    t.set_requires_grad(false);
  }
}

template <class T>
std::pair<Tensor<T>, Tensor<T>> Critic<T>::q(const Tensor<T>& zd, const Tensor<T>& action) const {
  require(zd.shape(), {zd.rows(), cfg_.latent_dim}, "critic latent");
  require(action.shape(), {zd.rows(), cfg_.action_dim}, "critic action");
  Tensor<T> x = concat_cols<T>({zd, action});
  return {q1_(x), q2_(x)};
}

template <class T>
std::pair<Tensor<T>, Tensor<T>> Critic<T>::target_q(const Tensor<T>& zd, const Tensor<T>& action) const {
  require(zd.shape(), {zd.rows(), cfg_.latent_dim}, "critic latent");
  require(action.shape(), {zd.rows(), cfg_.action_dim}, "critic action");
  Tensor<T> x = concat_cols<T>({zd, action});
  return {t1_(x), t2_(x)};
}

template <class T>
Tensor<T> critic_loss(const Actor<T>& actor, const Critic<T>& critic, const SacBatch<T>& b, SeededRng& rng) {
  const SacConfig& cfg = critic.config();
  const int B = b.zd.rows();
  require(b.reward.shape(), {B, 1}, "critic_loss reward");
  require(b.done.shape(), {B, 1}, "critic_loss done");
  Tensor<T> y;
  {
    NoGradGuard guard;
    ActorSample<T> next = actor.sample(b.next_actor_in.detach(), &rng);
    auto [t1, t2] = critic.target_q(b.next_zd.detach(), next.action);
    Tensor<T> v = minimum(t1, t2) - scale(next.log_prob, static_cast<T>(cfg.alpha));
    Tensor<T> not_done = add_scalar(scale(b.done, T{-1}), T{1});
    y = (b.reward + scale(not_done * v, static_cast<T>(cfg.gamma))).detach();
  }
  auto [q1, q2] = critic.q(b.zd, b.action);
  Tensor<T> err = square(q1 - y) + square(q2 - y);
  return scale(sum(err), static_cast<T>(0.5 / B));
}

template <class T>
Tensor<T> actor_loss(const Actor<T>& actor, const Critic<T>& critic, const SacBatch<T>& b, SeededRng& rng) {
  const SacConfig& cfg = critic.config();
  ActorSample<T> s = actor.sample(b.actor_in.detach(), &rng);
  auto [q1, q2] = critic.q(b.zd.detach(), s.action);
  Tensor<T> obj = scale(s.log_prob, static_cast<T>(cfg.alpha)) - minimum(q1, q2);
  return mean(obj);
}

template <class T>
void target_update(Critic<T>& critic, double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw ValidationError("target_update: rho must lie in [0, 1]");
  const auto& main = critic.params().entries();
  const auto& target = critic.target_params().entries();
  for (std::size_t i = 0; i < main.size(); ++i) {
    Tensor<T> dst = target[i].tensor;
    auto d = dst.mutable_data();
    auto s = main[i].tensor.data();
    for (std::size_t k = 0; k < d.size(); ++k) {
      d[k] = static_cast<T>((1.0 - rho) * static_cast<double>(d[k]) + rho * static_cast<double>(s[k]));
    }
  }
}

#define VTT_INSTANTIATE(T)                                                                            \
  template class Actor<T>;                                                                            \
  template class Critic<T>;                                                                           \
  template Tensor<T> critic_loss<T>(const Actor<T>&, const Critic<T>&, const SacBatch<T>&, SeededRng&); \
  template Tensor<T> actor_loss<T>(const Actor<T>&, const Critic<T>&, const SacBatch<T>&, SeededRng&);  \
  template void target_update<T>(Critic<T>&, double);

VTT_INSTANTIATE(float)
VTT_INSTANTIATE(double)

}  // namespace vtt
