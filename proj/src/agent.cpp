#include "vtt/experiment.hpp"

namespace vtt {

Agent::Agent(const ExperimentConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const SeededRng root(cfg_.seed);
  SeededRng r_fusion = root.split(101), r_latent = root.split(102), r_actor = root.split(103),
            r_critic = root.split(104);
  fusion_ = make_fusion<float>(cfg_.fusion, cfg_.effective_vtt(), cfg_.baseline, r_fusion);
  LatentConfig lc = cfg_.latent;
  lc.z_vtt = fusion_->z_dim();
  lc.image_hw = cfg_.image_hw;
  latent_ = std::make_unique<LatentModel<float>>(lc, r_latent);
  const SacConfig sac = cfg_.sac(fusion_->z_dim());
  actor_ = std::make_unique<Actor<float>>(sac, r_actor);
  critic_ = std::make_unique<Critic<float>>(sac, r_critic);
}

std::vector<Tensor<float>> Agent::model_params() const {
  std::vector<Tensor<float>> p = fusion_->params().tensors();
  for (const auto& t : latent_->params().tensors()) p.push_back(t);
  return p;
}

TensorArchive Agent::to_archive() const {
  TensorArchive a;
  a.add("meta.fusion", {1}, {static_cast<float>(static_cast<int>(cfg_.fusion))});
  auto put = [&](const ParameterSet<float>& ps, const std::string& prefix) {
    for (const auto& e : ps.entries()) a.add(prefix + e.name, e.tensor.shape(), e.tensor.values());
  };
  put(fusion_->params(), "");
  put(latent_->params(), "");
  put(actor_->params(), "");
  put(critic_->params(), "");
  put(critic_->target_params(), "target.");
  return a;
}

void Agent::load(const TensorArchive& a) {
  const StoredTensor& kind = a.get("meta.fusion");
  if (kind.data.size() != 1 || static_cast<int>(kind.data[0]) != static_cast<int>(cfg_.fusion)) {
    throw ConfigError("checkpoint was written for a different fusion kind than --fusion/config " +
                      fusion_name(cfg_.fusion));
  }
  auto take = [&](ParameterSet<float>& ps, const std::string& prefix) {
    for (const auto& e : ps.entries()) {
      const StoredTensor* s = a.find(prefix + e.name);
      if (!s) throw ConfigError("checkpoint lacks parameter " + prefix + e.name + " required by the config");
      if (s->shape != e.tensor.shape()) {
        throw ConfigError("checkpoint parameter " + prefix + e.name + " has shape " + shape_str(s->shape) +
                          ", config needs " + shape_str(e.tensor.shape()));
      }
      Tensor<float> t = e.tensor;
      std::copy(s->data.begin(), s->data.end(), t.mutable_data().begin());
    }
  };
  take(fusion_->params(), "");
  take(latent_->params(), "");
  take(actor_->params(), "");
  take(critic_->params(), "");
  take(critic_->target_params(), "target.");
}

std::array<double, 2> Agent::act(const Observation& obs, const std::array<double, 2>& prev_action,
                                 SeededRng* rng) const {
  NoGradGuard guard;
  auto batch = ObservationBatch<float>::from_observations(cfg_.image_hw, {&obs});
  Tensor<float> z = fusion_->encode(batch, nullptr, false).z;
  auto a_prev = Tensor<float>::from({1, 2}, {static_cast<float>(prev_action[0]), static_cast<float>(prev_action[1])});
  ActorSample<float> s = actor_->sample(concat_cols<float>({z, a_prev}), rng);
  return {static_cast<double>(s.action.at(0)), static_cast<double>(s.action.at(1))};
}

SequenceBatch<float> sample_windows(const std::vector<const Episode*>& episodes, int image_hw, int batch, int window,
                                    bool negatives, SeededRng& rng) {
  std::vector<const Episode*> usable;
  for (const auto* e : episodes) {
    if (static_cast<int>(e->size()) >= window) usable.push_back(e);
  }
  if (usable.empty()) throw ValidationError("no episode is at least " + std::to_string(window) + " steps long");
  std::vector<const Episode*> ep(batch);
  std::vector<int> start(batch);
  for (int b = 0; b < batch; ++b) {
    ep[b] = usable[rng.below(usable.size())];
    start[b] = static_cast<int>(rng.below(ep[b]->size() - window + 1));
  }
  const int N = batch * window;
  std::vector<const float*> im, wr, neg_im, neg_wr;
  std::vector<float> actions(static_cast<std::size_t>(N) * 2), rewards(N), contacts(N);
  for (int t = 0; t < window; ++t) {
    for (int b = 0; b < batch; ++b) {
      const int row = t * batch + b, i = start[b] + t;
      const Episode& e = *ep[b];
      im.push_back(e.obs[i].image.data());
      wr.push_back(e.obs[i].wrench.data());
      actions[row * 2] = e.actions[i][0];
      actions[row * 2 + 1] = e.actions[i][1];
      rewards[row] = e.rewards[i];
      contacts[row] = static_cast<float>(e.obs[i].contact);
      if (negatives) {
        // Uniform over steps j with |j - i| >= 3.
        const int T = static_cast<int>(e.size());
        const int below = std::max(0, i - 2), above = std::max(0, T - (i + 3));
        const int choices = below + above;
        if (choices == 0) continue;
        int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(choices)));
        const int j = k < below ? k : i + 3 + (k - below);
        neg_im.push_back(e.obs[i].image.data());
        neg_wr.push_back(e.obs[j].wrench.data());
      }
    }
  }
  SequenceBatch<float> s;
  s.batch = batch;
  s.steps = window;
  s.obs = ObservationBatch<float>::from_pointers(image_hw, im, wr);
  s.prev_actions = Tensor<float>::from({N, 2}, std::move(actions));
  s.rewards = Tensor<float>::from({N, 1}, std::move(rewards));
  s.reward_mask = Tensor<float>::full({N, 1}, 1.0f);
  s.contacts = Tensor<float>::from({N, 1}, std::move(contacts));
  if (!neg_im.empty()) s.negatives = ObservationBatch<float>::from_pointers(image_hw, neg_im, neg_wr);
  return s;
}

}  // namespace vtt
