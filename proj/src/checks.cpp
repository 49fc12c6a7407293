#include "vtt/checks.hpp"

#include "vtt/experiment.hpp"

namespace vtt {

namespace {

Tensor<double> uniform(const Shape& shape, SeededRng& rng, double lo, double hi) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor<double>::from(shape, std::move(v));
}

ObservationBatch<double> random_obs(int hw, int n, SeededRng& rng) {
  ObservationBatch<double> o;
  o.batch = n;
  o.image_hw = hw;
  o.images = uniform({n, hw * hw * 3}, rng, 0.0, 1.0);
  o.wrenches = uniform({n, 6}, rng, -2.0, 2.0);
  return o;
}

void jitter(const std::vector<NamedTensor<double>>& params, SeededRng& rng, double amount) {
  for (const auto& e : params) {
    Tensor<double> t = e.tensor;
    for (auto& x : t.mutable_data()) x += rng.uniform(-amount, amount);
  }
}

VttConfig toy_vtt() {
  VttConfig c;
  c.image_hw = 4;
  c.patch_px = 2;
  c.d = 8;
  c.heads = 2;
  c.layers = 1;
  c.compress_c = 8;
  c.z_dim = 3;
  return c;
}

BaselineConfig toy_baseline() {
  BaselineConfig c;
  c.image_hw = 4;
  c.patch_px = 2;
  c.patch_width = 3;
  c.image_hidden = 5;
  c.image_out = 3;
  c.tactile_hidden = 4;
  c.tactile_out = 2;
  c.poe_latent = 3;
  return c;
}

template <class Params>
std::vector<NamedTensor<double>> join(const Params& a, const Params& b) {
  std::vector<NamedTensor<double>> out = a.entries();
  for (const auto& e : b.entries()) out.push_back(e);
  return out;
}

}  // namespace

std::vector<ModuleCheck> gradcheck_suite(std::uint64_t seed, const GradCheckOptions& options) {
  std::vector<ModuleCheck> out;
  const SeededRng root(seed);
  GradCheckOptions opt = options;
  if (opt.max_entries_per_tensor == 0) opt.max_entries_per_tensor = 12;

  {
    SeededRng rng = root.split(1);
    VttEncoder<double> enc(toy_vtt(), rng);
    jitter(enc.params().entries(), rng, 0.3);
    auto obs = random_obs(4, 2, rng);
    auto cg = Tensor<double>::from({2, 1}, {1, 0});
    auto ag = Tensor<double>::from({2, 1}, {0, 1});
    auto loss = [&] {
      auto o = enc.forward(obs);
      auto z = enc.compress(o.heads, 2).z;
      return vtt_loss(enc.contact_logits(o.heads, 2), enc.alignment_logits(o.heads, 2), cg, ag) + sum(square(z));
    };
    out.push_back({"vtt_encoder", finite_diff_check(loss, enc.params().entries(), opt)});
  }
  for (FusionKind kind : {FusionKind::kConcat, FusionKind::kPoe}) {
    SeededRng rng = root.split(2 + static_cast<std::uint64_t>(kind));
    auto model = make_fusion<double>(kind, toy_vtt(), toy_baseline(), rng);
    jitter(model->params().entries(), rng, 0.3);
    auto obs = random_obs(4, 2, rng);
    auto cg = Tensor<double>::from({2, 1}, {1, 0});
    auto ag = Tensor<double>::from({2, 1}, {1, 1});
    auto loss = [&] {
      SeededRng eps(99);
      auto f = model->encode(obs, &eps, false);
      auto l = vtt_loss(f.contact_logits, f.align_logits, cg, ag) + sum(square(f.z));
      if (f.regularizer.defined()) l = l + f.regularizer;
      return l;
    };
    out.push_back({fusion_name(kind), finite_diff_check(loss, model->params().entries(), opt)});
  }
  {
    SeededRng rng = root.split(20);
    VttFusion<double> fusion(toy_vtt(), FusionKind::kVtt, rng);
    LatentConfig lc;
    lc.z_vtt = 3;
    lc.d_z = 4;
    lc.hidden = 6;
    lc.decoder_hidden = 5;
    lc.image_hw = 4;
    LatentModel<double> m(lc, rng);
    const int B = 2, S = 3, n = B * S;
    SequenceBatch<double> s;
    s.batch = B;
    s.steps = S;
    s.obs = random_obs(4, n, rng);
    s.prev_actions = uniform({n, 2}, rng, -1, 1);
    s.rewards = uniform({n, 1}, rng, -2, 0);
    std::vector<double> mask(n, 1.0), contact(n);
    mask[0] = 0.0;
    for (auto& c : contact) c = static_cast<double>(rng.below(2));
    s.reward_mask = Tensor<double>::from({n, 1}, mask);
    s.contacts = Tensor<double>::from({n, 1}, contact);
    s.negatives = random_obs(4, 2, rng);
    auto params = join(fusion.params(), m.params());
    jitter(params, rng, 0.3);
    auto loss = [&] {
      SeededRng r(5);
      return model_loss(fusion, m, s, r).total;
    };
    out.push_back({"latent_model", finite_diff_check(loss, params, opt)});
  }
  {
    SeededRng rng = root.split(30);
    SacConfig c;
    c.actor_input = 5;
    c.latent_dim = 4;
    c.hidden = 6;
    c.gamma = 0.9;
    c.validate();
    Actor<double> actor(c, rng);
    Critic<double> critic(c, rng);
    jitter(actor.params().entries(), rng, 0.3);
    jitter(critic.params().entries(), rng, 0.3);
    target_update(critic, 0.5);
    const int B = 6;
    SacBatch<double> b;
    b.zd = uniform({B, c.latent_dim}, rng, -1, 1);
    b.next_zd = uniform({B, c.latent_dim}, rng, -1, 1);
    b.actor_in = uniform({B, c.actor_input}, rng, -1, 1);
    b.next_actor_in = uniform({B, c.actor_input}, rng, -1, 1);
    b.action = uniform({B, c.action_dim}, rng, -0.9, 0.9);
    b.reward = uniform({B, 1}, rng, -2, 0);
    std::vector<double> done(B, 0.0);
    done[1] = 1.0;
    b.done = Tensor<double>::from({B, 1}, done);
    b.zd.set_requires_grad(true);
    auto closs = [&] {
      SeededRng r(11);
      return critic_loss(actor, critic, b, r);
    };
    std::vector<NamedTensor<double>> cparams = critic.params().entries();
    cparams.push_back({"batch.zd", b.zd});
    out.push_back({"sac_critic", finite_diff_check(closs, cparams, opt)});
    auto aloss = [&] {
      SeededRng r(12);
      return actor_loss(actor, critic, b, r);
    };
    out.push_back({"sac_actor", finite_diff_check(aloss, actor.params().entries(), opt)});
  }
  return out;
}

std::vector<ParamRow> parameter_table(const ExperimentConfig& cfg) {
  const Agent a(cfg);
  std::vector<ParamRow> rows{{"fusion." + fusion_name(cfg.fusion), count_parameters(a.fusion().params())},
                             {"latent_model", count_parameters(a.latent().params())},
                             {"actor", count_parameters(a.actor().params())},
                             {"critic", count_parameters(a.critic().params())}};
  std::size_t total = 0;
  for (const auto& r : rows) total += r.count;
  rows.push_back({"total", total});
  return rows;
}

FullScaleParams full_scale_parameter_counts() {
  auto count = [](FusionKind kind, const BaselineConfig& b) {
    SeededRng rng(0);
    return count_parameters(make_fusion<float>(kind, VttConfig::full(), b, rng)->params());
  };
  FullScaleParams p;
  p.vtt = count(FusionKind::kVtt, BaselineConfig::full_concat());
  p.concat = count(FusionKind::kConcat, BaselineConfig::full_concat());
  p.poe = count(FusionKind::kPoe, BaselineConfig::full_poe());
  p.concat_adjusted = count(FusionKind::kConcat, BaselineConfig::full_concat(true));
  p.poe_adjusted = count(FusionKind::kPoe, BaselineConfig::full_poe(true));
  return p;
}

}  // namespace vtt
