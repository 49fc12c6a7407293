#include "vtt/latent.hpp"

#include <cmath>
#include <numbers>

namespace vtt {

namespace {

constexpr double kLogVarMin = -10.0;
constexpr double kLogVarMax = 4.0;

template <class T>
Tensor<T> noise_like(int rows, int cols, SeededRng* rng) {
  std::vector<T> e(static_cast<std::size_t>(rows) * cols, T{0});
  if (rng) {
    for (auto& x : e) x = static_cast<T>(rng->normal());
  }
  return Tensor<T>::from({rows, cols}, std::move(e));
}

template <class T>
void require_rows(const Tensor<T>& x, int rows, int cols, const char* what) {
  if (x.shape() != Shape{rows, cols}) {
    throw ShapeError(std::string(what) + ": expected " + shape_str({rows, cols}) + ", got " + shape_str(x.shape()));
  }
}

}  // namespace

void LatentConfig::validate() const {
  if (z_vtt <= 0 || action_dim <= 0 || d_z <= 0 || hidden <= 0 || decoder_hidden <= 0 || image_hw <= 0) {
    throw ConfigError("latent config: widths must be positive");
  }
  if (!(kl_beta >= 0.0)) throw ConfigError("latent config: kl_beta must be non-negative");
}

template <class T>
LatentBelief<T> belief_from(const Tensor<T>& mu, const Tensor<T>& logvar, const Tensor<T>& eps) {
  LatentBelief<T> b;
  b.mu = mu;
  b.logvar = logvar;
  b.eps = eps;
  b.sample = mu + exp(scale(logvar, T{0.5})) * eps;
  return b;
}

template <class T>
LatentModel<T>::LatentModel(const LatentConfig& cfg, SeededRng& rng) : cfg_(cfg) {
  cfg_.validate();
  const int dz = cfg_.d_z, a = cfg_.action_dim, h = cfg_.hidden;
  init_mu_ = params_.add("latent.init_prior.mu", Tensor<T>::zeros({1, dz}));
  init_logvar_ = params_.add("latent.init_prior.logvar", Tensor<T>::zeros({1, dz}));
  init_post_ = make_mlp2(params_, "latent.init_posterior", cfg_.z_vtt, h, 2 * dz, rng);
  prior_ = make_mlp2(params_, "latent.prior", dz + a, h, 2 * dz, rng);
  post_ = make_mlp2(params_, "latent.posterior", dz + cfg_.z_vtt + a, h, 2 * dz, rng);
  decoder_ = make_mlp2(params_, "latent.decoder", dz + a, cfg_.decoder_hidden, cfg_.image_hw * cfg_.image_hw * 3, rng);
  reward_ = make_mlp2(params_, "latent.reward", dz + a, h, 1, rng);
}

template <class T>
LatentBelief<T> LatentModel<T>::make_belief(const Tensor<T>& out, SeededRng* rng) const {
  const int dz = cfg_.d_z;
  Tensor<T> mu = slice_cols(out, 0, dz);
  Tensor<T> lv = clamp(slice_cols(out, dz, dz), static_cast<T>(kLogVarMin), static_cast<T>(kLogVarMax));
  return belief_from(mu, lv, noise_like<T>(out.rows(), dz, rng));
}

template <class T>
LatentBelief<T> LatentModel<T>::initial_prior(int batch, SeededRng* rng) const {
  auto zeros = Tensor<T>::zeros({batch, cfg_.d_z});
  Tensor<T> lv = clamp(add_row(zeros, init_logvar_), static_cast<T>(kLogVarMin), static_cast<T>(kLogVarMax));
  return belief_from(add_row(zeros, init_mu_), lv, noise_like<T>(batch, cfg_.d_z, rng));
}

template <class T>
LatentBelief<T> LatentModel<T>::initial_posterior(const Tensor<T>& z_vtt, SeededRng* rng) const {
  require_rows(z_vtt, z_vtt.rows(), cfg_.z_vtt, "initial_posterior code");
  return make_belief(init_post_(z_vtt), rng);
}

template <class T>
LatentBelief<T> LatentModel<T>::prior_step(const Tensor<T>& zd_prev, const Tensor<T>& action, SeededRng* rng) const {
  require_rows(zd_prev, zd_prev.rows(), cfg_.d_z, "prior_step latent");
  require_rows(action, zd_prev.rows(), cfg_.action_dim, "prior_step action");
  return make_belief(prior_(concat_cols<T>({zd_prev, action})), rng);
}

template <class T>
LatentBelief<T> LatentModel<T>::posterior_step(const Tensor<T>& zd_prev, const Tensor<T>& z_vtt_prev,
                                               const Tensor<T>& action, SeededRng* rng) const {
  require_rows(zd_prev, zd_prev.rows(), cfg_.d_z, "posterior_step latent");
  require_rows(z_vtt_prev, zd_prev.rows(), cfg_.z_vtt, "posterior_step code");
  require_rows(action, zd_prev.rows(), cfg_.action_dim, "posterior_step action");
  return make_belief(post_(concat_cols<T>({zd_prev, z_vtt_prev, action})), rng);
}

template <class T>
Tensor<T> LatentModel<T>::decode_image(const Tensor<T>& zd, const Tensor<T>& action) const {
  return decoder_(concat_cols<T>({zd, action}));
}

template <class T>
Tensor<T> LatentModel<T>::predict_reward(const Tensor<T>& zd, const Tensor<T>& action) const {
  return reward_(concat_cols<T>({zd, action}));
}

template <class T>
Tensor<T> kl_gaussians(const LatentBelief<T>& q, const LatentBelief<T>& p) {
  if (q.mu.shape() != p.mu.shape()) {
    throw ShapeError("kl_gaussians: " + shape_str(q.mu.shape()) + " vs " + shape_str(p.mu.shape()));
  }
  // 0.5 * (lv_p - lv_q + (var_q + (mu_q - mu_p)^2) / var_p - 1)
  Tensor<T> inv_var_p = exp(scale(p.logvar, T{-1}));
  Tensor<T> ratio = (exp(q.logvar) + square(q.mu - p.mu)) * inv_var_p;
  Tensor<T> per = scale(add_scalar(p.logvar - q.logvar + ratio, T{-1}), T{0.5});
  return scale(sum(per), static_cast<T>(1.0 / q.mu.rows()));
}

template <class T>
Tensor<T> gaussian_nll(const Tensor<T>& mean, const Tensor<T>& target, bool with_constant) {
  if (mean.shape() != target.shape()) {
    throw ShapeError("gaussian_nll: prediction " + shape_str(mean.shape()) + " vs target " + shape_str(target.shape()));
  }
  const T rows = static_cast<T>(mean.rows());
  Tensor<T> loss = scale(sum(square(mean - target)), static_cast<T>(0.5) / rows);
  if (with_constant) {
    loss = add_scalar(loss, static_cast<T>(0.5 * mean.cols() * std::log(2.0 * std::numbers::pi)));
  }
  return loss;
}

template <class T>
Tensor<T> reconstruction_loss(const LatentModel<T>& m, const Tensor<T>& zd, const Tensor<T>& action,
                              const Tensor<T>& target_images, bool with_constant) {
  return gaussian_nll(m.decode_image(zd, action), target_images, with_constant);
}

template <class T>
Tensor<T> reward_loss(const LatentModel<T>& m, const Tensor<T>& zd, const Tensor<T>& action,
                      const Tensor<T>& target_rewards, bool with_constant) {
  return gaussian_nll(m.predict_reward(zd, action), target_rewards, with_constant);
}

template <class T>
ModelLossTerms<T> model_loss(const FusionModel<T>& fusion, const LatentModel<T>& model, const SequenceBatch<T>& b,
                             SeededRng& rng, const ModelLossOptions& opt) {
  const int B = b.batch, S = b.steps, N = B * S;
  const auto& cfg = model.config();
  if (B <= 0 || S <= 0 || b.obs.batch != N) throw ShapeError("model_loss: observation count must be steps*batch");
  require_rows(b.prev_actions, N, cfg.action_dim, "model_loss actions");
  require_rows(b.rewards, N, 1, "model_loss rewards");
  require_rows(b.reward_mask, N, 1, "model_loss reward mask");
  require_rows(b.contacts, N, 1, "model_loss contacts");

  ModelLossTerms<T> out;
  FusionOutput<T> f = fusion.encode(b.obs, &rng, false);
  out.codes = f.z;
  const T inv_b = static_cast<T>(1.0 / B);
  const T log2pi = static_cast<T>(std::log(2.0 * std::numbers::pi));

  std::vector<Tensor<T>> latents;
  Tensor<T> recon, rew, kl;
  Tensor<T> zd;
  for (int t = 0; t < S; ++t) {
    Tensor<T> a_prev = slice_rows(b.prev_actions, t * B, B);
    LatentBelief<T> q, p;
    if (t == 0) {
      q = model.initial_posterior(slice_rows(f.z, 0, B), &rng);
      p = model.initial_prior(B, nullptr);
    } else {
      q = model.posterior_step(zd, slice_rows(f.z, (t - 1) * B, B), a_prev, &rng);
      p = model.prior_step(zd, a_prev, nullptr);
    }
    zd = q.sample;
    latents.push_back(zd);
    Tensor<T> kl_t = kl_gaussians(q, p);
    Tensor<T> rec_t = gaussian_nll(model.decode_image(zd, a_prev), slice_rows(b.obs.images, t * B, B), false);
    Tensor<T> mask = slice_rows(b.reward_mask, t * B, B);
    Tensor<T> diff = (model.predict_reward(zd, a_prev) - slice_rows(b.rewards, t * B, B)) * mask;
    Tensor<T> rew_t = scale(sum(square(diff)), static_cast<T>(0.5) * inv_b);
    kl = kl.defined() ? kl + kl_t : kl_t;
    recon = recon.defined() ? recon + rec_t : rec_t;
    rew = rew.defined() ? rew + rew_t : rew_t;
  }
  out.latents = concat_rows(latents);

  Tensor<T> total = recon + rew + scale(kl, static_cast<T>(cfg.kl_beta));
  if (opt.with_constants) {
    double valid = 0;
    for (T m : b.reward_mask.data()) valid += static_cast<double>(m);
    const double c = 0.5 * log2pi * (static_cast<double>(S) * b.obs.images.cols() + valid / B);
    total = add_scalar(total, static_cast<T>(c));
  }

  // Classification terms: means over the N aligned rows, times S, give a
  // per-step sum averaged over the batch.
  Tensor<T> vtt_term;
  auto add_vtt = [&](const Tensor<T>& term) { vtt_term = vtt_term.defined() ? vtt_term + term : term; };
  if (opt.contact_loss && fusion.has_contact_head()) {
    out.contact_logits = f.contact_logits;
    add_vtt(scale(bce_with_logits(f.contact_logits, b.contacts), static_cast<T>(S)));
  }
  if (opt.align_loss && fusion.has_align_head()) {
    out.align_logits = f.align_logits;
    add_vtt(scale(bce_with_logits(f.align_logits, Tensor<T>::full({N, 1}, T{1})), static_cast<T>(S)));
    if (b.negatives.batch > 0) {
      FusionOutput<T> g = fusion.encode(b.negatives, &rng, false);
      out.negative_logits = g.align_logits;
      const int M = b.negatives.batch;
      add_vtt(scale(bce_with_logits(g.align_logits, Tensor<T>::zeros({M, 1})), static_cast<T>(M) * inv_b));
    }
  }
  if (vtt_term.defined()) {
    total = total + vtt_term;
    out.vtt = static_cast<double>(vtt_term.item());
  }
  if (f.regularizer.defined() && opt.regularizer_weight > 0) {
    Tensor<T> r = scale(f.regularizer, static_cast<T>(opt.regularizer_weight * S));
    total = total + r;
    out.regularizer = static_cast<double>(r.item());
  }
  out.total = total;
  out.reconstruction = static_cast<double>(recon.item());
  out.reward = static_cast<double>(rew.item());
  out.kl = static_cast<double>(kl.item());
  return out;
}

#define VTT_INSTANTIATE(T)                                                                                      \
  template LatentBelief<T> belief_from<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);               \
  template class LatentModel<T>;                                                                                \
  template Tensor<T> kl_gaussians<T>(const LatentBelief<T>&, const LatentBelief<T>&);                          \
  template Tensor<T> gaussian_nll<T>(const Tensor<T>&, const Tensor<T>&, bool);                                \
  template Tensor<T> reconstruction_loss<T>(const LatentModel<T>&, const Tensor<T>&, const Tensor<T>&,         \
                                            const Tensor<T>&, bool);                                            \
  template Tensor<T> reward_loss<T>(const LatentModel<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                    bool);                                                                      \
  template ModelLossTerms<T> model_loss<T>(const FusionModel<T>&, const LatentModel<T>&, const SequenceBatch<T>&, \
                                           SeededRng&, const ModelLossOptions&);

VTT_INSTANTIATE(float)
VTT_INSTANTIATE(double)

}  // namespace vtt
