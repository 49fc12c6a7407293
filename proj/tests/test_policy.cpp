#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "test_util.hpp"
#include "vtt/gradcheck.hpp"
#include "vtt/latent.hpp"
#include "vtt/optim.hpp"
#include "vtt/policy.hpp"

using namespace vtt;
using vtt::testing::random_tensor;

namespace {

SacConfig toy_sac(int in = 5, int latent = 4, int action = 2) {
  SacConfig c;
  c.actor_input = in;
  c.latent_dim = latent;
  c.action_dim = action;
  c.hidden = 6;
  return c;
}

template <class T>
void fill(ParameterSet<T>& ps, T v) {
  for (const auto& e : ps.entries()) {
    Tensor<T> t = e.tensor;
    for (auto& x : t.mutable_data()) x = v;
  }
}

template <class T>
void jitter(const std::vector<NamedTensor<T>>& ps, SeededRng& rng, double amount) {
  for (const auto& e : ps) {
    Tensor<T> t = e.tensor;
    for (auto& x : t.mutable_data()) x += static_cast<T>(rng.uniform(-amount, amount));
  }
}

SacBatch<double> random_batch(const SacConfig& c, int B, SeededRng& rng) {
  SacBatch<double> b;
  b.zd = random_tensor<double>({B, c.latent_dim}, rng);
  b.actor_in = random_tensor<double>({B, c.actor_input}, rng);
  b.action = random_tensor<double>({B, c.action_dim}, rng, -0.99, 0.99);
  b.reward = random_tensor<double>({B, 1}, rng, -3, 0);
  std::vector<double> done(B);
  for (auto& d : done) d = rng.uniform() < 0.2 ? 1.0 : 0.0;
  b.done = Tensor<double>::from({B, 1}, done);
  b.next_zd = random_tensor<double>({B, c.latent_dim}, rng);
  b.next_actor_in = random_tensor<double>({B, c.actor_input}, rng);
  return b;
}

double param_distance(const ParameterSet<double>& a, const ParameterSet<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.entries().size(); ++i) {
    auto x = a.entries()[i].tensor.data();
    auto y = b.entries()[i].tensor.data();
    for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
  }
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("actor samples stay inside the open action box") {
  SeededRng rng(1);
  Actor<double> actor(toy_sac(), rng);
  jitter(actor.params().entries(), rng, 2.0);  // saturates tanh for many rows
  auto in = random_tensor<double>({10000, 5}, rng, -3, 3);
  auto s = actor.sample(in, &rng);
  for (double a : s.action.values()) {
    CHECK(a > -1.0);
    CHECK(a < 1.0);
  }
  for (double v : s.log_std.values()) {
    CHECK(v >= -5.0);
    CHECK(v <= 2.0);
  }
  for (double v : s.log_prob.values()) CHECK(std::isfinite(v));
}

TEST_CASE("zero-weight actor is centred and symmetric") {
  SeededRng rng(2);
  Actor<double> actor(toy_sac(), rng);
  fill(actor.params(), 0.0);
  auto in = random_tensor<double>({20000, 5}, rng);
  auto det = actor.sample(in, nullptr);
  for (double a : det.action.values()) CHECK(a == 0.0);
  auto s = actor.sample(in, &rng);
  double mean = 0, pos = 0;
  for (double a : s.action.values()) {
    mean += a;
    pos += a > 0;
  }
  mean /= 40000;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(pos / 40000 - 0.5) < 0.01);
}

TEST_CASE("log_prob matches a histogram density estimate") {
  // One action dimension, fixed input: histogram of 1e6 draws against the
  // reported density averaged within each bin.
  SeededRng rng(3);
  Actor<double> actor(toy_sac(3, 4, 1), rng);
  auto one = random_tensor<double>({1, 3}, rng);
  constexpr int kBins = 40, kChunk = 10000, kChunks = 100;
  std::vector<double> count(kBins, 0), dens(kBins, 0);
  std::vector<double> row(one.data().begin(), one.data().end());
  std::vector<double> rep;
  for (int i = 0; i < kChunk; ++i) rep.insert(rep.end(), row.begin(), row.end());
  auto in = Tensor<double>::from({kChunk, 3}, rep);
  for (int c = 0; c < kChunks; ++c) {
    auto s = actor.sample(in, &rng);
    for (int i = 0; i < kChunk; ++i) {
      const double a = s.action.at(i);
      const int bin = std::clamp(static_cast<int>((a + 1.0) / 2.0 * kBins), 0, kBins - 1);
      count[bin] += 1;
      dens[bin] += std::exp(s.log_prob.at(i));
    }
  }
  const double n = static_cast<double>(kChunk) * kChunks, width = 2.0 / kBins;
  int compared = 0;
  for (int b = 0; b < kBins; ++b) {
    if (count[b] < 20000) continue;  // keep the sampling noise well under 5%
    const double hist = count[b] / (n * width);
    const double model = dens[b] / count[b];
    CAPTURE(b);
    CHECK(std::abs(hist - model) / model < 0.05);
    ++compared;
  }
  CHECK(compared >= 5);
}

TEST_CASE("critic_loss: zero case, finiteness, constant-reward fixed point") {
  SacConfig c = toy_sac();
  c.gamma = 0.0;
  SeededRng rng(4);
  {
    Actor<double> actor(c, rng);
    Critic<double> critic(c, rng);
    fill(critic.params(), 0.0);
    target_update(critic, 1.0);
    auto b = random_batch(c, 8, rng);
    b.reward = Tensor<double>::zeros({8, 1});
    CHECK(critic_loss(actor, critic, b, rng).item() == 0.0);
  }
  for (int seed = 0; seed < 100; ++seed) {
    SeededRng r(100 + seed);
    SacConfig cg = toy_sac();
    Actor<double> actor(cg, r);
    Critic<double> critic(cg, r);
    auto b = random_batch(cg, 4, r);
    CHECK(std::isfinite(critic_loss(actor, critic, b, r).item()));
    CHECK(std::isfinite(actor_loss(actor, critic, b, r).item()));
  }
  Actor<double> actor(c, rng);
  Critic<double> critic(c, rng);
  auto b = random_batch(c, 16, rng);
  b.reward = Tensor<double>::full({16, 1}, 1.0);
  auto params = critic.params().tensors();
  AdamState<double> st(params, AdamOptions{.lr = 1e-2});
  double first = 0, last = 0;
  for (int k = 0; k < 1000; ++k) {
    zero_grads(params);
    auto loss = critic_loss(actor, critic, b, rng);
    if (k == 0) first = loss.item();
    last = loss.item();
    backward(loss);
    adam_step(params, st);
  }
  CHECK(first > 0.1);
  CHECK(last < 1e-4);
  auto [q1, q2] = critic.q(b.zd, b.action);
  for (double v : q1.values()) CHECK(v == doctest::Approx(1.0).epsilon(0.02));
  for (double v : q2.values()) CHECK(v == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("actor_loss with alpha 0 and a constant critic has no gradient") {
  SacConfig c = toy_sac();
  c.alpha = 0.0;
  SeededRng rng(5);
  Actor<double> actor(c, rng);
  Critic<double> critic(c, rng);
  fill(critic.params(), 0.0);
  for (const auto& e : critic.params().entries()) {
    if (e.name.find("fc2.bias") != std::string::npos) {
      Tensor<double> t = e.tensor;
      t.mutable_data()[0] = 3.0;
    }
  }
  auto b = random_batch(c, 8, rng);
  auto loss = actor_loss(actor, critic, b, rng);
  CHECK(loss.item() == doctest::Approx(-3.0));
  backward(loss);
  for (const auto& e : actor.params().entries()) {
    for (double g : e.tensor.grad()) CHECK(std::abs(g) < 1e-12);
  }
}

TEST_CASE("larger temperature leaves a higher-entropy policy") {
  // Bandit: fixed random critic, 200 actor steps, entropy estimated as -E log pi.
  auto entropy_after = [](double alpha) {
    SacConfig c = toy_sac();
    c.alpha = alpha;
    SeededRng rng(6);
    Actor<double> actor(c, rng);
    Critic<double> critic(c, rng);
    SeededRng data(7);
    auto b = random_batch(c, 64, data);
    auto params = actor.params().tensors();
    AdamState<double> st(params, AdamOptions{.lr = 1e-2});
    SeededRng noise(8);
    for (int k = 0; k < 200; ++k) {
      zero_grads(params);
      backward(actor_loss(actor, critic, b, noise));
      adam_step(params, st);
    }
    SeededRng eval(9);
    auto s = actor.sample(b.actor_in, &eval);
    double h = 0;
    for (double lp : s.log_prob.values()) h -= lp;
    return h / 64;
  };
  const double low = entropy_after(0.01), mid = entropy_after(0.1), high = entropy_after(1.0);
  CHECK(low < mid);
  CHECK(mid < high);
}

TEST_CASE("SAC losses pass finite differences at toy dims") {
  SacConfig c = toy_sac();
  c.gamma = 0.9;
  SeededRng rng(10);
  Actor<double> actor(c, rng);
  Critic<double> critic(c, rng);
  jitter(actor.params().entries(), rng, 0.3);
  jitter(critic.params().entries(), rng, 0.3);
  target_update(critic, 0.5);
  auto b = random_batch(c, 6, rng);
  b.zd.set_requires_grad(true);
  GradCheckOptions opt;

  auto closs = [&] {
    SeededRng r(11);
    return critic_loss(actor, critic, b, r);
  };
  std::vector<NamedTensor<double>> cparams = critic.params().entries();
  cparams.push_back({"zd", b.zd});
  auto rc = finite_diff_check(closs, cparams, opt);
  INFO("critic worst " << rc.worst_parameter << " " << rc.max_rel_error);
  CHECK(rc.max_rel_error < 1e-3);

  auto aloss = [&] {
    SeededRng r(12);
    return actor_loss(actor, critic, b, r);
  };
  auto ra = finite_diff_check(aloss, actor.params().entries(), opt);
  INFO("actor worst " << ra.worst_parameter << " " << ra.max_rel_error);
  CHECK(ra.max_rel_error < 1e-3);
}

TEST_CASE("target_update: copies start equal, rho 0 and 1, geometric approach") {
  SeededRng rng(13);
  Critic<double> critic(toy_sac(), rng);
  CHECK(param_distance(critic.params(), critic.target_params()) == 0.0);
  jitter(critic.params().entries(), rng, 0.5);
  const double d0 = param_distance(critic.params(), critic.target_params());
  CHECK(d0 > 0.0);
  target_update(critic, 0.0);
  CHECK(param_distance(critic.params(), critic.target_params()) == d0);
  const double rho = 0.005;
  const int half_life = static_cast<int>(std::lround(std::log(2.0) / rho));
  for (int k = 0; k < half_life; ++k) target_update(critic, rho);
  const double d1 = param_distance(critic.params(), critic.target_params());
  CHECK(d1 / d0 == doctest::Approx(std::pow(1 - rho, half_life)).epsilon(1e-9));
  CHECK(d1 / d0 == doctest::Approx(0.5).epsilon(0.01));
  target_update(critic, 1.0);
  CHECK(param_distance(critic.params(), critic.target_params()) == 0.0);
  CHECK_THROWS_AS(target_update(critic, 1.5), ValidationError);
}

TEST_CASE("critic gradients reach the encoder; actor gradients do not") {
  SeededRng rng(14);
  VttConfig v;
  v.image_hw = 4;
  v.patch_px = 2;
  v.d = 8;
  v.heads = 2;
  v.layers = 1;
  v.compress_c = 8;
  v.z_dim = 3;
  VttFusion<double> fusion(v, FusionKind::kVtt, rng);
  LatentConfig lc;
  lc.z_vtt = 3;
  lc.d_z = 4;
  lc.hidden = 6;
  lc.decoder_hidden = 5;
  lc.image_hw = 4;
  LatentModel<double> model(lc, rng);
  SacConfig c = toy_sac(5, 4, 2);
  Actor<double> actor(c, rng);
  Critic<double> critic(c, rng);

  auto encode = [&](int B) {
    ObservationBatch<double> o;
    o.batch = B;
    o.image_hw = 4;
    o.images = random_tensor<double>({B, 48}, rng, 0, 1);
    o.wrenches = random_tensor<double>({B, 6}, rng, -2, 2);
    Tensor<double> z = fusion.encode(o, nullptr, false).z;
    return std::pair{z, model.initial_posterior(z, &rng).sample};
  };
  auto [z, zd] = encode(4);
  auto [nz, nzd] = encode(4);
  SacBatch<double> b = random_batch(c, 4, rng);
  b.zd = zd;
  b.next_zd = nzd;
  b.actor_in = concat_cols<double>({z, random_tensor<double>({4, 2}, rng)});
  b.next_actor_in = concat_cols<double>({nz, random_tensor<double>({4, 2}, rng)});

  auto grad_mass = [](const ParameterSet<double>& ps) {
    double g = 0;
    for (const auto& e : ps.entries()) {
      for (double x : e.tensor.grad()) g += x * x;
    }
    return g;
  };
  backward(actor_loss(actor, critic, b, rng));
  CHECK(grad_mass(actor.params()) > 0.0);
  CHECK(grad_mass(fusion.params()) == 0.0);
  CHECK(grad_mass(model.params()) == 0.0);
  backward(critic_loss(actor, critic, b, rng));
  CHECK(grad_mass(fusion.params()) > 0.0);
  CHECK(grad_mass(model.params()) > 0.0);
  CHECK(grad_mass(critic.target_params()) == 0.0);
}
