#include <algorithm>
#include <cmath>
#include <filesystem>

#include "vtt/experiment.hpp"
#include "vtt/optim.hpp"

namespace vtt {

namespace {

constexpr int kEvalChunk = 256;

std::vector<const Episode*> pointers(const std::vector<Episode>& eps, std::size_t begin, std::size_t end) {
  std::vector<const Episode*> out;
  for (std::size_t i = begin; i < end; ++i) out.push_back(&eps[i]);
  return out;
}

/// Logits for (image of step a, wrench of step b) pairs, in chunks.
struct PairLogits {
  std::vector<float> contact, align;
};

PairLogits pair_logits(const FusionModel<float>& fusion, int image_hw, const std::vector<const float*>& im,
                       const std::vector<const float*>& wr) {
  NoGradGuard guard;
  PairLogits out;
  for (std::size_t b = 0; b < im.size(); b += kEvalChunk) {
    const std::size_t e = std::min(im.size(), b + kEvalChunk);
    std::vector<const float*> ci(im.begin() + b, im.begin() + e), cw(wr.begin() + b, wr.begin() + e);
    FusionOutput<float> f = fusion.encode(ObservationBatch<float>::from_pointers(image_hw, ci, cw), nullptr, false);
    if (f.contact_logits.defined()) {
      for (float v : f.contact_logits.data()) out.contact.push_back(v);
    }
    if (f.align_logits.defined()) {
      for (float v : f.align_logits.data()) out.align.push_back(v);
    }
  }
  return out;
}

}  // namespace

HeadAccuracy evaluate_heads(const FusionModel<float>& fusion, const std::vector<const Episode*>& episodes, int image_hw,
                            SeededRng& rng) {
  HeadAccuracy acc;
  std::vector<const float*> im, wr, neg_im, neg_wr;
  std::vector<int> contact;
  for (const Episode* e : episodes) {
    const int T = static_cast<int>(e->size());
    for (int i = 0; i < T; ++i) {
      im.push_back(e->obs[i].image.data());
      wr.push_back(e->obs[i].wrench.data());
      contact.push_back(e->obs[i].contact);
      const int below = std::max(0, i - 2), above = std::max(0, T - (i + 3));
      if (below + above == 0) continue;
      const int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(below + above)));
      neg_im.push_back(e->obs[i].image.data());
      neg_wr.push_back(e->obs[k < below ? k : i + 3 + (k - below)].wrench.data());
    }
  }
  if (im.empty()) return acc;
  PairLogits pos = pair_logits(fusion, image_hw, im, wr);
  if (fusion.has_contact_head()) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < contact.size(); ++i) ok += (pos.contact[i] > 0) == (contact[i] == 1);
    acc.contact = static_cast<double>(ok) / static_cast<double>(contact.size());
    acc.contact_samples = contact.size();
  }
  if (fusion.has_align_head()) {
    std::size_t ok = 0;
    for (float v : pos.align) ok += v > 0;
    if (!neg_im.empty()) {
      PairLogits neg = pair_logits(fusion, image_hw, neg_im, neg_wr);
      for (float v : neg.align) ok += v <= 0;
    }
    acc.align_samples = pos.align.size() + neg_im.size();
    acc.align = static_cast<double>(ok) / static_cast<double>(acc.align_samples);
  }
  return acc;
}

ReprResult train_repr(Agent& agent, const EpisodeDataset& data,
                      const std::function<void(const ReprStepMetrics&)>& on_step) {
  const ExperimentConfig& cfg = agent.config();
  if (data.image_hw != cfg.image_hw) {
    throw ConfigError("dataset image size " + std::to_string(data.image_hw) + " does not match config image_hw " +
                      std::to_string(cfg.image_hw));
  }
  const std::size_t n = data.episodes.size();
  const auto held = static_cast<std::size_t>(std::ceil(cfg.repr.holdout * static_cast<double>(n)));
  if (n < 2 || held == 0 || held >= n) throw ValidationError("dataset needs at least two episodes for a holdout split");
  ReprResult res;
  res.train_episodes = n - held;
  res.holdout_episodes = held;
  const auto train = pointers(data.episodes, 0, n - held);
  const auto holdout = pointers(data.episodes, n - held, n);

  const SeededRng root = SeededRng(cfg.seed).split(201);
  SeededRng batch_rng = root.split(1), noise_rng = root.split(2), eval_rng = root.split(3);
  std::vector<Tensor<float>> params = agent.model_params();
  AdamOptions ao;
  ao.lr = cfg.repr.lr;
  ao.max_grad_norm = cfg.repr.max_grad_norm;
  AdamState<float> adam(params, ao);
  ModelLossOptions lo;
  lo.contact_loss = cfg.repr.contact_loss;
  lo.align_loss = cfg.repr.align_loss;

  double kl_acc = 0;
  int kl_count = 0;
  for (int step = 0; step < cfg.repr.steps; ++step) {
    SequenceBatch<float> batch =
        sample_windows(train, cfg.image_hw, cfg.repr.batch, cfg.repr.window, agent.fusion().has_align_head(), batch_rng);
    zero_grads(params);
    ModelLossTerms<float> terms = model_loss(agent.fusion(), agent.latent(), batch, noise_rng, lo);
    ReprStepMetrics m{step,       static_cast<double>(terms.total.item()), terms.reconstruction, terms.reward, terms.kl,
                      terms.vtt, terms.regularizer};
    if (!std::isfinite(m.total)) throw std::runtime_error("model loss became non-finite at step " + std::to_string(step));
    backward(terms.total);
    adam_step(params, adam);
    res.log.push_back(m);
    if (step >= cfg.repr.steps - 100) {
      kl_acc += terms.kl / cfg.repr.window;
      ++kl_count;
    }
    if (on_step) on_step(m);
  }
  res.final_kl_per_step = kl_count ? kl_acc / kl_count : 0.0;
  res.holdout = evaluate_heads(agent.fusion(), holdout, cfg.image_hw, eval_rng);
  return res;
}

ReturnStats summarize(const std::vector<EpisodeReturn>& eps) {
  ReturnStats s;
  s.episodes = static_cast<int>(eps.size());
  if (eps.empty()) return s;
  double sum = 0, succ = 0;
  for (const auto& e : eps) {
    sum += e.ret;
    succ += e.success;
  }
  s.mean = sum / s.episodes;
  s.success_rate = succ / s.episodes;
  if (s.episodes > 1) {
    double var = 0;
    for (const auto& e : eps) var += (e.ret - s.mean) * (e.ret - s.mean);
    s.std_error = std::sqrt(var / (s.episodes - 1) / s.episodes);
  }
  return s;
}

std::vector<EpisodeReturn> run_policy_episodes(const ExperimentConfig& cfg, const Agent* agent, int count,
                                               std::uint64_t stream) {
  TouchPushEnv env(cfg.env);
  std::vector<EpisodeReturn> out;
  for (int k = 0; k < count; ++k) {
    SeededRng rng = SeededRng(cfg.seed).split(stream).split(static_cast<std::uint64_t>(k));
    PushState s = env.reset(rng);
    Observation obs = env.observe(s);
    std::array<double, 2> prev{0.0, 0.0};
    EpisodeReturn r;
    r.episode = k;
    for (;;) {
      const std::array<double, 2> a =
          agent ? agent->act(obs, prev, nullptr) : std::array<double, 2>{rng.uniform(-1, 1), rng.uniform(-1, 1)};
      StepResult step = env.step(s, a);
      r.ret += step.reward;
      ++r.steps;
      obs = std::move(step.obs);
      prev = a;
      if (step.done) {
        r.success = step.success;
        break;
      }
    }
    out.push_back(r);
  }
  return out;
}

RlResult train_rl(Agent& agent, const std::function<void(const EpisodeReturn&)>& on_episode) {
  const ExperimentConfig& cfg = agent.config();
  const RlConfig& rc = cfg.rl;
  TouchPushEnv env(cfg.env);
  const SeededRng root = SeededRng(cfg.seed).split(301);
  SeededRng env_rng = root.split(1), act_rng = root.split(2), batch_rng = root.split(3), noise_rng = root.split(4);

  std::vector<Tensor<float>> model_params = agent.model_params();
  std::vector<Tensor<float>> critic_params = agent.critic().params().tensors();
  std::vector<Tensor<float>> actor_params = agent.actor().params().tensors();
  AdamOptions mo;
  mo.lr = rc.model_lr;
  mo.max_grad_norm = cfg.repr.max_grad_norm;
  AdamOptions co;
  co.lr = rc.critic_lr;
  AdamOptions ao;
  ao.lr = rc.actor_lr;
  AdamState<float> model_adam(model_params, mo), critic_adam(critic_params, co), actor_adam(actor_params, ao);
  ModelLossOptions lo;
  lo.contact_loss = cfg.repr.contact_loss;
  lo.align_loss = cfg.repr.align_loss;

  RlResult res;
  std::vector<Episode> replay;
  std::vector<const Episode*> replay_ptrs;
  const int B = rc.batch, S = rc.window;

  auto update = [&] {
    // Windows come from finished episodes only, so pointers stay valid.
    SequenceBatch<float> seq =
        sample_windows(replay_ptrs, cfg.image_hw, B, S, agent.fusion().has_align_head(), batch_rng);
    zero_grads(model_params);
    zero_grads(critic_params);
    ModelLossTerms<float> terms = model_loss(agent.fusion(), agent.latent(), seq, noise_rng, lo);
    // Every consecutive pair in the window is a transition; rows are time-major.
    SacBatch<float> sb;
    const int n = (S - 1) * B;
    sb.zd = slice_rows(terms.latents, 0, n);
    sb.next_zd = slice_rows(terms.latents, B, n);
    sb.actor_in = concat_cols<float>({slice_rows(terms.codes, 0, n), slice_rows(seq.prev_actions, 0, n)});
    sb.next_actor_in = concat_cols<float>({slice_rows(terms.codes, B, n), slice_rows(seq.prev_actions, B, n)});
    sb.action = slice_rows(seq.prev_actions, B, n);
    sb.reward = slice_rows(seq.rewards, B, n);
    // Only goal arrival is terminal; horizon cut-offs still bootstrap.
    std::vector<float> done(n);
    for (int k = 0; k < n; ++k) done[k] = sb.reward.at(k) > 24.0f ? 1.0f : 0.0f;
    sb.done = Tensor<float>::from({n, 1}, std::move(done));
    Tensor<float> loss = terms.total + critic_loss(agent.actor(), agent.critic(), sb, noise_rng);
    backward(loss);
    adam_step(model_params, model_adam);
    adam_step(critic_params, critic_adam);

    zero_grads(actor_params);
    backward(actor_loss(agent.actor(), agent.critic(), sb, noise_rng));
    adam_step(actor_params, actor_adam);
    target_update(agent.critic(), rc.rho);
    ++res.updates;
  };

  long steps = 0;
  int episode = 0;
  while (steps < rc.env_steps) {
    PushState s = env.reset(env_rng);
    Observation obs = env.observe(s);
    std::array<double, 2> prev{0.0, 0.0};
    Episode ep;
    EpisodeReturn log;
    log.episode = episode;
    for (;;) {
      const bool warm = steps < rc.warmup_steps;
      const std::array<double, 2> a = warm ? std::array<double, 2>{act_rng.uniform(-1, 1), act_rng.uniform(-1, 1)}
                                           : agent.act(obs, prev, &act_rng);
      StepResult r = env.step(s, a);
      ++steps;
      log.ret += r.reward;
      ++log.steps;
      ep.obs.push_back(r.obs);
      ep.actions.push_back({static_cast<float>(a[0]), static_cast<float>(a[1])});
      ep.rewards.push_back(static_cast<float>(r.reward));
      ep.dones.push_back(r.done);
      ep.successes.push_back(r.success);
      obs = std::move(r.obs);
      prev = a;
      if (!warm && !replay_ptrs.empty() && steps % rc.update_every == 0) update();
      if (r.done) {
        log.success = r.success;
        break;
      }
    }
    replay.push_back(std::move(ep));
    replay_ptrs.clear();
    for (const auto& e : replay) replay_ptrs.push_back(&e);
    res.episodes.push_back(log);
    if (on_episode) on_episode(log);
    ++episode;
  }
  res.env_steps = steps;
  const std::size_t tail = std::min<std::size_t>(50, res.episodes.size());
  res.last = summarize(std::vector<EpisodeReturn>(res.episodes.end() - static_cast<std::ptrdiff_t>(tail),
                                                  res.episodes.end()));
  res.random = summarize(run_policy_episodes(cfg, nullptr, rc.random_episodes, 302));
  res.eval = summarize(run_policy_episodes(cfg, &agent, rc.eval_episodes, 303));
  return res;
}

AttentionShift analyze_attention(const Agent& agent, int episodes, const std::string& out_dir) {
  const ExperimentConfig& cfg = agent.config();
  const VttEncoder<float>* enc = agent.fusion().vtt();
  if (!enc) throw UsageError("attention analysis needs a VTT-family fusion model, got " + fusion_name(cfg.fusion));
  TouchPushEnv env(cfg.env);
  AttentionShift shift;
  shift.episodes = episodes;
  double in_t = 0, pre_t = 0, pre_v = 0;
  for (int k = 0; k < episodes; ++k) {
    SeededRng rng = SeededRng(cfg.seed).split(401).split(static_cast<std::uint64_t>(k));
    Episode ep = rollout(env, DataPolicy::kScripted, rng);
    std::vector<ModalityProportion> series;
    std::filesystem::path dir;
    if (!out_dir.empty()) {
      dir = std::filesystem::path(out_dir) / ("episode_" + std::to_string(k));
      std::filesystem::create_directories(dir);
    }
    bool touched = false;
    for (std::size_t t = 0; t < ep.size(); ++t) {
      const Observation& o = ep.obs[t];
      AttentionRecord rec;
      {
        NoGradGuard guard;
        auto out = enc->forward(ObservationBatch<float>::from_observations(cfg.image_hw, {&o}), true);
        rec = AttentionRecord::from_output(out, enc->layout(), 0);
      }
      const auto avg = average_heads(rec, cfg.heatmap.all_layers ? LayerSelect::kMean : LayerSelect::kFinal);
      const ModalityProportion p = modality_proportion(avg, rec.layout);
      series.push_back(p);
      touched = touched || o.contact;
      if (o.contact) {
        in_t += p.tactile;
        ++shift.in_contact_steps;
      } else if (!touched) {
        pre_t += p.tactile;
        pre_v += p.visual;
        ++shift.pre_contact_steps;
      }
      if (!out_dir.empty()) {
        overlay_export(o.image, cfg.image_hw, image_attention_map(avg, rec.layout),
                       (dir / ("t_" + std::to_string(t) + ".ppm")).string());
      }
    }
    if (!out_dir.empty()) write_proportion_csv((dir / "proportions.csv").string(), series);
  }
  if (shift.in_contact_steps) shift.in_contact_tactile = in_t / static_cast<double>(shift.in_contact_steps);
  if (shift.pre_contact_steps) {
    shift.pre_contact_tactile = pre_t / static_cast<double>(shift.pre_contact_steps);
    shift.pre_contact_visual = pre_v / static_cast<double>(shift.pre_contact_steps);
  }
  return shift;
}

}  // namespace vtt
