#include <cmath>

#include "vtt/experiment.hpp"

namespace vtt {

namespace {

std::string key(std::size_t i, const char* field) { return "episode." + std::to_string(i) + "." + field; }

int as_int(const StoredTensor& t) {
  if (t.data.size() != 1) throw IoError("dataset tensor " + t.name + " must hold one value");
  return static_cast<int>(std::lround(t.data[0]));
}

}  // namespace

std::size_t EpisodeDataset::steps() const {
  std::size_t n = 0;
  for (const auto& e : episodes) n += e.size();
  return n;
}

double EpisodeDataset::contact_fraction() const {
  std::size_t c = 0, n = 0;
  for (const auto& e : episodes) {
    for (const auto& o : e.obs) c += o.contact != 0;
    n += e.size();
  }
  return n ? static_cast<double>(c) / static_cast<double>(n) : 0.0;
}

TensorArchive EpisodeDataset::to_archive() const {
  TensorArchive a;
  a.add("meta.image_hw", {1}, {static_cast<float>(image_hw)});
  a.add("meta.episodes", {1}, {static_cast<float>(episodes.size())});
  const int px = image_hw * image_hw * 3;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const Episode& e = episodes[i];
    const int T = static_cast<int>(e.size());
    std::vector<float> img, wr, act, rew, con, done, succ;
    img.reserve(static_cast<std::size_t>(T) * px);
    for (int t = 0; t < T; ++t) {
      const Observation& o = e.obs[t];
      if (static_cast<int>(o.image.size()) != px) throw ShapeError("dataset image does not match image_hw");
      img.insert(img.end(), o.image.begin(), o.image.end());
      wr.insert(wr.end(), o.wrench.begin(), o.wrench.end());
      act.insert(act.end(), e.actions[t].begin(), e.actions[t].end());
      rew.push_back(e.rewards[t]);
      con.push_back(static_cast<float>(o.contact));
      done.push_back(e.dones[t]);
      succ.push_back(e.successes[t]);
    }
    a.add(key(i, "image"), {T, px}, std::move(img));
    a.add(key(i, "wrench"), {T, 6}, std::move(wr));
    a.add(key(i, "action"), {T, 2}, std::move(act));
    a.add(key(i, "reward"), {T}, std::move(rew));
    a.add(key(i, "contact"), {T}, std::move(con));
    a.add(key(i, "done"), {T}, std::move(done));
    a.add(key(i, "success"), {T}, std::move(succ));
  }
  return a;
}

EpisodeDataset EpisodeDataset::from_archive(const TensorArchive& a) {
  EpisodeDataset d;
  d.image_hw = as_int(a.get("meta.image_hw"));
  const int count = as_int(a.get("meta.episodes"));
  if (d.image_hw <= 0 || count < 0) throw IoError("dataset header out of range");
  const std::size_t px = static_cast<std::size_t>(d.image_hw) * d.image_hw * 3;
  d.episodes.resize(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < d.episodes.size(); ++i) {
    const auto& img = a.get(key(i, "image"));
    const auto& wr = a.get(key(i, "wrench"));
    const auto& act = a.get(key(i, "action"));
    const auto& rew = a.get(key(i, "reward"));
    const auto& con = a.get(key(i, "contact"));
    const auto& done = a.get(key(i, "done"));
    const auto& succ = a.get(key(i, "success"));
    const std::size_t T = rew.data.size();
    if (img.data.size() != T * px || wr.data.size() != T * 6 || act.data.size() != T * 2 || con.data.size() != T ||
        done.data.size() != T || succ.data.size() != T) {
      throw IoError("dataset episode " + std::to_string(i) + " has inconsistent field lengths");
    }
    Episode& e = d.episodes[i];
    for (std::size_t t = 0; t < T; ++t) {
      Observation o;
      o.image.assign(img.data.begin() + static_cast<std::ptrdiff_t>(t * px),
                     img.data.begin() + static_cast<std::ptrdiff_t>((t + 1) * px));
      for (int k = 0; k < 6; ++k) o.wrench[k] = wr.data[t * 6 + k];
      o.contact = con.data[t] != 0.0f;
      o.aligned = 1;
      o.t = static_cast<int>(t) + 1;
      e.obs.push_back(std::move(o));
      e.actions.push_back({act.data[t * 2], act.data[t * 2 + 1]});
      e.rewards.push_back(rew.data[t]);
      e.dones.push_back(done.data[t] != 0.0f);
      e.successes.push_back(succ.data[t] != 0.0f);
    }
  }
  return d;
}

Episode generate_episode(const ExperimentConfig& cfg, int index) {
  SeededRng rng = SeededRng(cfg.seed).split(static_cast<std::uint64_t>(index));
  const double u = rng.uniform();
  DataPolicy policy = DataPolicy::kRandom;
  if (u < cfg.data.mix_orbit) {
    policy = DataPolicy::kOrbit;
  } else if (u < cfg.data.mix_orbit + cfg.data.mix_scripted) {
    policy = DataPolicy::kNoisyScripted;
  }
  return rollout(TouchPushEnv(cfg.env), policy, rng);
}

EpisodeDataset generate_dataset(const ExperimentConfig& cfg) {
  EpisodeDataset d;
  d.image_hw = cfg.image_hw;
  for (int i = 0; i < cfg.data.episodes; ++i) d.episodes.push_back(generate_episode(cfg, i));
  return d;
}

}  // namespace vtt
