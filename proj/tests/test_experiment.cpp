#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "vtt/experiment.hpp"

using namespace vtt;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "vtt_experiment_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

ExperimentConfig desk(std::uint64_t seed = 0) {
  ExperimentConfig c;
  c.seed = seed;
  c.validate();
  return c;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<const Episode*> all(const EpisodeDataset& d) {
  std::vector<const Episode*> out;
  for (const auto& e : d.episodes) out.push_back(&e);
  return out;
}

}  // namespace

TEST_CASE("config: text round-trip, overrides, unknown and repeated keys") {
  ExperimentConfig c = desk(7);
  c.set("fusion", "poe");
  c.set("vtt.d", "48");
  c.set("repr.lr", "0.00037");
  c.set("heatmap.all_layers", "true");
  c.validate();
  const std::string text = c.to_text();
  ExperimentConfig back = ExperimentConfig::parse(text);
  CHECK(back.to_text() == text);
  CHECK(back.seed == 7);
  CHECK(back.fusion == FusionKind::kPoe);
  CHECK(back.vtt.d == 48);
  CHECK(back.repr.lr == 0.00037);
  CHECK(back.heatmap.all_layers);

  CHECK(ExperimentConfig::parse("# comment only\n\nseed = 3\n").seed == 3);
  CHECK_THROWS_AS(ExperimentConfig::parse("vtt.dd = 3\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("seed = 1\nseed = 2\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("seed 1\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("vtt.heads = 5\n"), ConfigError);  // 32 % 5 != 0
  CHECK_THROWS_AS(ExperimentConfig::parse("fusion = transformer\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("repr.lr = fast\n"), ConfigError);

  const auto path = scratch("cfg.txt");
  c.save(path.string());
  CHECK(ExperimentConfig::load(path.string()).to_text() == text);
}

TEST_CASE("archive: bit-exact round-trip and corruption detection") {
  TensorArchive a;
  a.add("w", {2, 3}, {1.5f, -0.0f, 3.25e-8f, std::nextafter(1.0f, 2.0f), -7.0f, 1e30f});
  a.add("b", {3}, {0.1f, 0.2f, 0.3f});
  a.add("s", {}, {42.0f});
  CHECK_THROWS_AS(a.add("w", {1}, {0.0f}), ValidationError);
  CHECK_THROWS_AS(a.add("x", {2, 2}, {0.0f}), ShapeError);

  const auto bytes = a.serialize();
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "VTTC");
  const TensorArchive back = TensorArchive::deserialize(bytes);
  CHECK(back.serialize() == bytes);
  REQUIRE(back.entries().size() == 3);
  CHECK(back.get("w").shape == Shape{2, 3});
  CHECK(std::signbit(back.get("w").data[1]));
  CHECK(back.get("w").data[3] == std::nextafter(1.0f, 2.0f));
  CHECK_THROWS_AS(back.get("missing"), IoError);

  // Every single-bit flip is caught.
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    auto bad = bytes;
    bad[i] ^= static_cast<std::uint8_t>(1u << (i % 8));
    CHECK_THROWS_AS(TensorArchive::deserialize(bad), IoError);
  }
  for (std::size_t n : {std::size_t{0}, std::size_t{3}, bytes.size() / 2, bytes.size() - 1}) {
    CHECK_THROWS_AS(TensorArchive::deserialize({bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(n)}),
                    IoError);
  }
  CHECK_THROWS_AS(TensorArchive::load(scratch("does_not_exist.vttc").string()), IoError);
}

TEST_CASE("dataset: 20 episodes fit the horizon, mix contact, regenerate bit-identically") {
  ExperimentConfig c = desk();
  c.data.episodes = 20;
  const EpisodeDataset d = generate_dataset(c);
  REQUIRE(d.episodes.size() == 20);
  CHECK(d.steps() <= 2000);
  for (const auto& e : d.episodes) {
    CHECK(e.size() >= 1);
    CHECK(static_cast<int>(e.size()) <= c.env.horizon);
    CHECK(e.dones.back());
  }
  const double cf = d.contact_fraction();
  INFO("contact fraction " << cf);
  CHECK(cf > 0.05);
  CHECK(cf < 0.95);

  const auto p1 = scratch("d1.vttc"), p2 = scratch("d2.vttc");
  d.save(p1.string());
  generate_dataset(c).save(p2.string());
  CHECK(read_bytes(p1) == read_bytes(p2));

  // Order independence: episode 13 alone equals episode 13 of the batch.
  const Episode e13 = generate_episode(c, 13);
  CHECK(e13.rewards == d.episodes[13].rewards);

  const EpisodeDataset back = EpisodeDataset::load(p1.string());
  CHECK(back.image_hw == d.image_hw);
  REQUIRE(back.episodes.size() == d.episodes.size());
  for (std::size_t i = 0; i < d.episodes.size(); ++i) {
    const auto &x = d.episodes[i], &y = back.episodes[i];
    REQUIRE(x.size() == y.size());
    CHECK(x.rewards == y.rewards);
    CHECK(x.actions == y.actions);
    CHECK(x.dones == y.dones);
    CHECK(x.successes == y.successes);
    for (std::size_t t = 0; t < x.size(); ++t) {
      CHECK(x.obs[t].image == y.obs[t].image);
      CHECK(x.obs[t].wrench == y.obs[t].wrench);
      CHECK(x.obs[t].contact == y.obs[t].contact);
    }
  }
  // Different seed, different data.
  ExperimentConfig c1 = c;
  c1.seed = 1;
  CHECK(generate_episode(c1, 0).rewards != d.episodes[0].rewards);
}

TEST_CASE("sample_windows: time-major rows and negatives at least three steps away") {
  ExperimentConfig c = desk();
  c.data.episodes = 4;
  const EpisodeDataset d = generate_dataset(c);
  SeededRng rng(5);
  const int B = 6, S = 5;
  const SequenceBatch<float> s = sample_windows(all(d), c.image_hw, B, S, true, rng);
  CHECK(s.obs.batch == B * S);
  CHECK(s.prev_actions.shape() == Shape{B * S, 2});
  CHECK(s.negatives.batch == B * S);

  // Locate each window and check the rows follow consecutive steps.
  const std::size_t px = static_cast<std::size_t>(c.image_hw) * c.image_hw * 3;
  const auto images = s.obs.images.data();
  const auto wrenches = s.obs.wrenches.data();
  const auto neg_wr = s.negatives.wrenches.data();
  for (int b = 0; b < B; ++b) {
    const float* row0 = images.data() + static_cast<std::size_t>(b) * px;
    const Episode* hit = nullptr;
    int start = -1;
    for (const auto& e : d.episodes) {
      for (std::size_t i = 0; i + S <= e.size() && !hit; ++i) {
        if (std::equal(row0, row0 + px, e.obs[i].image.begin())) {
          hit = &e;
          start = static_cast<int>(i);
        }
      }
    }
    REQUIRE(hit);
    for (int t = 0; t < S; ++t) {
      const int row = t * B + b;
      const Observation& o = hit->obs[start + t];
      CHECK(std::equal(o.wrench.begin(), o.wrench.end(), wrenches.begin() + row * 6));
      CHECK(s.rewards.at(row) == hit->rewards[start + t]);
      // The negative wrench must come from some step j with |j - i| >= 3.
      bool far = false;
      for (int j = 0; j < static_cast<int>(hit->size()); ++j) {
        if (std::abs(j - (start + t)) >= 3 &&
            std::equal(hit->obs[j].wrench.begin(), hit->obs[j].wrench.end(), neg_wr.begin() + row * 6)) {
          far = true;
        }
      }
      CHECK(far);
    }
  }
  CHECK_THROWS_AS(sample_windows(all(d), c.image_hw, 2, 1000, false, rng), ValidationError);
}

TEST_CASE("agent: checkpoint round-trip and configuration mismatch") {
  ExperimentConfig c = desk(3);
  Agent a(c);
  const TensorArchive arc = a.to_archive();
  CHECK(arc.find("meta.fusion"));
  Agent b(desk(4));
  b.load(arc);
  CHECK(b.to_archive().serialize() == arc.serialize());

  Observation o;
  o.image.assign(static_cast<std::size_t>(c.image_hw) * c.image_hw * 3, 0.5f);
  o.wrench = {1, 0, 0, 0, 0, 0.1f};
  const auto x = a.act(o, {0.1, -0.2}, nullptr), y = b.act(o, {0.1, -0.2}, nullptr);
  CHECK(x == y);
  CHECK(std::abs(x[0]) < 1.0);
  CHECK(std::abs(x[1]) < 1.0);

  ExperimentConfig cc = desk();
  cc.fusion = FusionKind::kConcat;
  cc.validate();
  Agent concat(cc);
  CHECK_THROWS_AS(concat.load(arc), ConfigError);
  ExperimentConfig wide = desk();
  wide.vtt.d = 128;
  wide.validate();
  Agent w(wide);
  CHECK_THROWS_AS(w.load(arc), ConfigError);
}

TEST_CASE("train_repr: 500 steps halve the model loss and keep the posterior informative") {
  ExperimentConfig c = desk();
  c.data.episodes = 20;
  c.repr.steps = 500;
  const EpisodeDataset d = generate_dataset(c);
  Agent a(c);
  int calls = 0;
  const ReprResult r = train_repr(a, d, [&](const ReprStepMetrics&) { ++calls; });
  CHECK(calls == 500);
  REQUIRE(r.log.size() == 500);
  for (const auto& m : r.log) REQUIRE(std::isfinite(m.total));
  double tail = 0;
  for (std::size_t i = r.log.size() - 50; i < r.log.size(); ++i) tail += r.log[i].total;
  tail /= 50;
  INFO("initial " << r.log.front().total << " final(mean of last 50) " << tail);
  CHECK(tail <= 0.5 * r.log.front().total);
  CHECK(r.final_kl_per_step > 1e-3);
  CHECK(r.train_episodes == 16);
  CHECK(r.holdout_episodes == 4);
  CHECK(r.holdout.contact >= 0.0);
  CHECK(r.holdout.align >= 0.0);
  CHECK(r.holdout.contact_samples > 0);

  ExperimentConfig other = c;
  other.image_hw = 32;
  other.validate();
  Agent big(other);
  CHECK_THROWS_AS(train_repr(big, d), ConfigError);
}

TEST_CASE("ablations: missing heads report -1 and training still runs") {
  ExperimentConfig c = desk();
  c.data.episodes = 5;
  c.repr.steps = 3;
  const EpisodeDataset d = generate_dataset(c);
  for (auto kind : {FusionKind::kVttNoContact, FusionKind::kVttNoAlign, FusionKind::kVttNoBoth, FusionKind::kConcat,
                    FusionKind::kPoe}) {
    CAPTURE(fusion_name(kind));
    ExperimentConfig k = c;
    k.fusion = kind;
    k.validate();
    Agent a(k);
    const ReprResult r = train_repr(a, d);
    CHECK(r.log.size() == 3);
    // Baselines keep both auxiliary heads on their fused code.
    const bool contact = kind != FusionKind::kVttNoContact && kind != FusionKind::kVttNoBoth;
    const bool align = kind != FusionKind::kVttNoAlign && kind != FusionKind::kVttNoBoth;
    CHECK((r.holdout.contact >= 0) == contact);
    CHECK((r.holdout.align >= 0) == align);
  }
}

TEST_CASE("summarize: mean, standard error, success rate") {
  std::vector<EpisodeReturn> e{{0, 1.0, true, 5}, {1, 3.0, false, 5}, {2, 5.0, true, 5}};
  const ReturnStats s = summarize(e);
  CHECK(s.mean == doctest::Approx(3.0));
  CHECK(s.std_error == doctest::Approx(2.0 / std::sqrt(3.0)));
  CHECK(s.success_rate == doctest::Approx(2.0 / 3.0));
  CHECK(summarize({}).episodes == 0);
}

TEST_CASE("train_rl: short run is reproducible and respects the step budget") {
  ExperimentConfig c = desk(2);
  c.rl.env_steps = 300;
  c.rl.warmup_steps = 200;
  c.rl.update_every = 10;
  c.rl.eval_episodes = 2;
  c.rl.random_episodes = 2;
  c.validate();
  Agent a(c), b(c);
  const RlResult r1 = train_rl(a);
  const RlResult r2 = train_rl(b);
  CHECK(r1.env_steps >= 300);
  CHECK(r1.env_steps < 300 + c.env.horizon);
  CHECK(r1.updates > 0);
  REQUIRE(r1.episodes.size() == r2.episodes.size());
  for (std::size_t i = 0; i < r1.episodes.size(); ++i) CHECK(r1.episodes[i].ret == r2.episodes[i].ret);
  CHECK(a.to_archive().serialize() == b.to_archive().serialize());
  CHECK(r1.eval.episodes == 2);
  CHECK(r1.random.episodes == 2);
}

TEST_CASE("analyze_attention: one overlay per step, proportions sum to one") {
  ExperimentConfig c = desk();
  Agent a(c);
  const auto dir = scratch("heat");
  std::filesystem::remove_all(dir);
  const AttentionShift s = analyze_attention(a, 2, dir.string());
  CHECK(s.episodes == 2);
  for (int k = 0; k < 2; ++k) {
    const auto ed = dir / ("episode_" + std::to_string(k));
    std::size_t ppm = 0;
    for (const auto& f : std::filesystem::directory_iterator(ed)) ppm += f.path().extension() == ".ppm";
    std::ifstream csv(ed / "proportions.csv");
    std::string line;
    std::getline(csv, line);
    CHECK(line == "t,visual,tactile");
    std::size_t rows = 0;
    while (std::getline(csv, line)) {
      std::istringstream ls(line);
      std::string t, v, tac;
      std::getline(ls, t, ',');
      std::getline(ls, v, ',');
      std::getline(ls, tac, ',');
      CHECK(std::stod(v) + std::stod(tac) == doctest::Approx(1.0).epsilon(2e-6));
      ++rows;
    }
    CHECK(rows == ppm);
    CHECK(rows > 0);
  }
  ExperimentConfig cc = desk();
  cc.fusion = FusionKind::kConcat;
  cc.validate();
  CHECK_THROWS_AS(analyze_attention(Agent(cc), 1, ""), UsageError);
}
