// Acceptance criteria 1-11. One PASS/FAIL line per criterion; the process
// exits nonzero if any criterion checked in the selected mode fails.
//
//   acceptance structural <vtt-cli> <workdir>   criteria 1-6 and 9
//   acceptance train      <vtt-cli> <workdir>   gen-data + train-repr (fixture, no verdict)
//   acceptance repr       <vtt-cli> <workdir>   criterion 7
//   acceptance attention  <vtt-cli> <workdir>   criterion 8
//   acceptance rl         <vtt-cli> <workdir>   criterion 10
//   acceptance determinism <vtt-cli> <workdir>  criterion 11

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>

#include "vtt/checks.hpp"
#include "vtt/experiment.hpp"

namespace fs = std::filesystem;
using namespace vtt;

namespace {

// Every tolerance and budget used below.
constexpr double kDecompTol = 1e-5;
constexpr double kRowSumTol = 1e-6;
constexpr double kGradTol = 1e-3;
constexpr double kPoeTol = 1e-4;
constexpr double kKlRelTol = 0.02;
constexpr int kKlSamples = 1000000;
constexpr double kRatioLo = 3.0, kRatioHi = 8.0;
constexpr double kContactAcc = 0.95, kAlignAcc = 0.90;
constexpr int kReprStepBudget = 5000;
constexpr double kRlSigmas = 2.0, kRlSuccess = 0.5;
constexpr long kRlEnvStepBudget = 30000;
constexpr int kAttentionEpisodes = 10;
constexpr double kPreVisual = 0.5;
constexpr int kAblationSteps = 300;

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("CRITERION %2d %-26s %s  %s\n", id, name.c_str(), pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

/// Runs the CLI, stdout and stderr to `log`; returns the exit status.
int run(const std::string& cli, const std::string& args, const fs::path& log) {
  const std::string cmd = quote(cli) + " " + args + " > " + quote(log) + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : 128;
}

std::map<std::string, std::string> read_summary(const fs::path& p) {
  std::map<std::string, std::string> kv;
  std::ifstream f(p);
  std::string line;
  while (std::getline(f, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

double num(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw std::runtime_error("summary lacks " + key);
  return std::stod(it->second);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

ObservationBatch<double> random_obs(int hw, int n, SeededRng& rng) {
  ObservationBatch<double> o;
  o.batch = n;
  o.image_hw = hw;
  std::vector<double> im(static_cast<std::size_t>(n) * hw * hw * 3), wr(static_cast<std::size_t>(n) * 6);
  for (auto& x : im) x = rng.uniform();
  for (auto& x : wr) x = rng.uniform(-5, 5);
  o.images = Tensor<double>::from({n, hw * hw * 3}, std::move(im));
  o.wrenches = Tensor<double>::from({n, 6}, std::move(wr));
  return o;
}

ObservationBatch<float> to_float(const ObservationBatch<double>& o) {
  auto cast = [](const Tensor<double>& t) {
    const auto v = t.values();
    return Tensor<float>::from(t.shape(), std::vector<float>(v.begin(), v.end()));
  };
  return {o.batch, o.image_hw, cast(o.images), cast(o.wrenches)};
}

// ---------------------------------------------------------------- structural

void criterion_shapes() {
  const auto t0 = std::chrono::steady_clock::now();
  const VttConfig cfg = VttConfig::full();
  SeededRng rng(1);
  VttEncoder<float> enc(cfg, rng);
  SeededRng data(2);
  const auto o = random_obs(cfg.image_hw, 1, data);
  const ObservationBatch<float> of = to_float(o);
  NoGradGuard guard;
  const Tensor<float> img_tokens = enc.patch_images(of.images);
  const Tensor<float> tac_tokens = enc.patch_tactile(of.wrenches);
  const EncoderOutput<float> out = enc.forward(of);
  const CompressedCode<float> code = enc.compress(out.heads, 1);
  const double dt = seconds_since(t0);
  const bool ok = img_tokens.shape() == Shape{36, 384} && tac_tokens.shape() == Shape{2, 384} &&
                  out.heads.shape() == Shape{40, 384} && code.per_token.shape() == Shape{40, 32} &&
                  code.z.shape() == Shape{1, 288} && enc.layout().total() == 40 && dt < 10.0;
  report(1, "shape fidelity", ok,
         "image " + std::to_string(img_tokens.shape()[0]) + " tactile " + std::to_string(tac_tokens.shape()[0]) +
             " total " + std::to_string(out.heads.shape()[0]) + " compressed " +
             std::to_string(code.per_token.shape()[0]) + "x" + std::to_string(code.per_token.shape()[1]) + " z 1x" +
             std::to_string(code.z.shape()[1]) + fmt(" (%.1f s, limit 10 s)", dt));
}

/// max |self + cross - S V| and max |S V (recomputed) - traced S V| over all layers.
std::pair<double, double> decomposition_error(const VttEncoder<double>& enc, const ObservationBatch<double>& obs) {
  NoGradGuard guard;
  const EncoderOutput<double> out = enc.forward(obs, true);
  const int R = enc.layout().total(), d = enc.config().d, H = enc.config().heads, w = d / H;
  double split = 0, trace = 0;
  for (const auto& tr : out.layers) {
    for (int b = 0; b < obs.batch; ++b) {
      std::span<const double> probs(tr.weights->head(b, 0), static_cast<std::size_t>(H) * R * R);
      std::span<const double> vals(tr.values.data().data() + static_cast<std::size_t>(b) * R * d,
                                   static_cast<std::size_t>(R) * d);
      const auto dec = decompose_attention<double>(probs, H, vals, d, enc.layout());
      for (int i = 0; i < R; ++i) {
        for (int c = 0; c < d; ++c) {
          const int h = c / w;
          double sv = 0;
          for (int j = 0; j < R; ++j) sv += probs[(static_cast<std::size_t>(h) * R + i) * R + j] * vals[j * d + c];
          const std::size_t k = static_cast<std::size_t>(i) * d + c;
          split = std::max(split, std::abs(dec.self_out[k] + dec.cross_out[k] - sv));
          trace = std::max(trace, std::abs(tr.attended.data()[static_cast<std::size_t>(b) * R * d + k] - sv));
        }
      }
    }
  }
  return {split, trace};
}

void criterion_decomposition() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0, worst_trace = 0;
  for (const VttConfig& cfg : {VttConfig::desk(), VttConfig::full()}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      SeededRng rng(100 + seed);
      VttEncoder<double> enc(cfg, rng);
      const auto [e, t] = decomposition_error(enc, random_obs(cfg.image_hw, 1, rng));
      worst = std::max(worst, e);
      worst_trace = std::max(worst_trace, t);
    }
  }
  const double dt = seconds_since(t0);
  report(2, "decomposition identity", worst < kDecompTol && worst_trace < kDecompTol && dt < 30.0,
         fmt("max |self+cross-SV| %.2e", worst) + fmt(", traced SV %.2e", worst_trace) +
             fmt(" (tol 1e-5; 20 seeds x desk+full; %.1f s, limit 30 s)", dt));
}

void criterion_row_stochastic() {
  const auto t0 = std::chrono::steady_clock::now();
  VttConfig cfg = VttConfig::desk();
  cfg.layers = 3;  // several layers so "every layer" is exercised
  SeededRng rng(7);
  VttEncoder<float> enc(cfg, rng);
  double worst = 0;
  int records = 0;
  for (int k = 0; k < 100; ++k) {
    SeededRng r(1000 + k);
    const auto o = random_obs(cfg.image_hw, 1, r);
    const ObservationBatch<float> of = to_float(o);
    NoGradGuard guard;
    const AttentionRecord rec = AttentionRecord::from_output(enc.forward(of, true), enc.layout(), 0);
    const int R = rec.tokens();
    for (const auto& layer : rec.layers) {
      for (int h = 0; h < rec.heads; ++h) {
        for (int i = 0; i < R; ++i) {
          double s = 0;
          for (int j = 0; j < R; ++j) s += layer[(static_cast<std::size_t>(h) * R + i) * R + j];
          worst = std::max(worst, std::abs(s - 1.0));
        }
      }
    }
    for (LayerSelect sel : {LayerSelect::kFinal, LayerSelect::kMean}) {
      const auto avg = average_heads(rec, sel);
      for (int i = 0; i < R; ++i) {
        double s = 0;
        for (int j = 0; j < R; ++j) s += avg[static_cast<std::size_t>(i) * R + j];
        worst = std::max(worst, std::abs(s - 1.0));
      }
    }
    ++records;
  }
  const double dt = seconds_since(t0);
  report(3, "row-stochasticity", worst < kRowSumTol && dt < 30.0,
         fmt("max |row sum - 1| %.2e", worst) + " over " + std::to_string(records) +
             fmt(" inputs x 3 layers x 4 heads + averages (tol 1e-6; %.1f s, limit 30 s)", dt));
}

void criterion_gradcheck(const std::string& cli, const fs::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  std::string worst_name, modules;
  for (const auto& m : gradcheck_suite(0)) {
    modules += (modules.empty() ? "" : ",") + m.module;
    if (m.report.max_rel_error >= worst) {
      worst = m.report.max_rel_error;
      worst_name = m.module + ":" + m.report.worst_parameter;
    }
  }
  const int rc = run(cli, "gradcheck --seed 0", work / "gradcheck.log");
  const double dt = seconds_since(t0);
  report(4, "gradient integrity", worst < kGradTol && rc == 0 && dt < 120.0,
         fmt("max rel err %.2e", worst) + " at " + worst_name + " [" + modules + "], cli exit " +
             std::to_string(rc) + fmt(" (tol 1e-3; %.1f s, limit 120 s)", dt));
}

std::pair<double, double> grid_product_moments(double m1, double v1, double m2, double v2) {
  const double lo = std::min(m1 - 12 * std::sqrt(v1), m2 - 12 * std::sqrt(v2));
  const double hi = std::max(m1 + 12 * std::sqrt(v1), m2 + 12 * std::sqrt(v2));
  const int n = 400000;
  const double h = (hi - lo) / n;
  double z = 0, s1 = 0, s2 = 0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + i * h;
    const double w = std::exp(-0.5 * (x - m1) * (x - m1) / v1 - 0.5 * (x - m2) * (x - m2) / v2);
    z += w;
    s1 += w * x;
    s2 += w * x * x;
  }
  const double mean = s1 / z;
  return {mean, s2 / z - mean * mean};
}

void criterion_poe() {
  const auto t0 = std::chrono::steady_clock::now();
  SeededRng rng(55);
  double worst = 0;
  for (int k = 0; k < 50; ++k) {
    const double m1 = rng.uniform(-3, 3), m2 = rng.uniform(-3, 3);
    const double v1 = rng.uniform(0.05, 4), v2 = rng.uniform(0.05, 4);
    const auto r = fuse_poe<double>({{Tensor<double>::from({1, 1}, {m1}), Tensor<double>::from({1, 1}, {v1})},
                                     {Tensor<double>::from({1, 1}, {m2}), Tensor<double>::from({1, 1}, {v2})}},
                                    nullptr);
    const auto [gm, gv] = grid_product_moments(m1, v1, m2, v2);
    worst = std::max({worst, std::abs(r.mu.item() - gm), std::abs(r.var.item() - gv)});
  }
  const double dt = seconds_since(t0);
  report(5, "PoE oracle", worst < kPoeTol && dt < 10.0,
         fmt("max |moment - quadrature| %.2e", worst) + fmt(" over 50 cases (tol 1e-4; %.1f s, limit 10 s)", dt));
}

void criterion_kl() {
  const auto t0 = std::chrono::steady_clock::now();
  SeededRng rng(66);
  double worst = 0;
  for (int k = 0; k < 10; ++k) {
    std::vector<double> mq(8), vq(8), mp(8), vp(8);
    for (int i = 0; i < 8; ++i) {
      mq[i] = rng.uniform(-1, 1);
      mp[i] = rng.uniform(-1, 1);
      vq[i] = rng.uniform(0.3, 2);
      vp[i] = rng.uniform(0.3, 2);
    }
    auto belief = [](const std::vector<double>& m, const std::vector<double>& v) {
      std::vector<double> lv(v.size());
      for (std::size_t i = 0; i < v.size(); ++i) lv[i] = std::log(v[i]);
      return belief_from(Tensor<double>::from({1, 8}, m), Tensor<double>::from({1, 8}, lv), Tensor<double>::zeros({1, 8}));
    };
    const double closed = kl_gaussians(belief(mq, vq), belief(mp, vp)).item();
    // E_q[log q(x) - log p(x)] by sampling x ~ q.
    double acc = 0;
    for (int s = 0; s < kKlSamples; ++s) {
      double lr = 0;
      for (int i = 0; i < 8; ++i) {
        const double x = mq[i] + std::sqrt(vq[i]) * rng.normal();
        lr += -0.5 * std::log(vq[i]) - 0.5 * (x - mq[i]) * (x - mq[i]) / vq[i] + 0.5 * std::log(vp[i]) +
              0.5 * (x - mp[i]) * (x - mp[i]) / vp[i];
      }
      acc += lr;
    }
    const double mc = acc / kKlSamples;
    worst = std::max(worst, std::abs(mc - closed) / closed);
  }
  const double dt = seconds_since(t0);
  report(6, "KL oracle", worst < kKlRelTol && dt < 60.0,
         fmt("max relative gap %.4f", worst) + fmt(" on 10 8-D cases, 1e6 samples (tol 0.02; %.1f s, limit 60 s)", dt));
}

void criterion_params(const std::string& cli, const fs::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  const FullScaleParams p = full_scale_parameter_counts();
  const int rc = run(cli, "params", work / "params.log");
  const std::string out = slurp(work / "params.log");
  const bool adjusted = out.find("concat_adjusted") != std::string::npos && out.find("poe_adjusted") != std::string::npos;
  const double ratio = p.vtt_concat_ratio();
  const double dt = seconds_since(t0);
  report(9, "parameter accounting", ratio >= kRatioLo && ratio <= kRatioHi && rc == 0 && adjusted && dt < 10.0,
         "vtt " + std::to_string(p.vtt) + " / concat " + std::to_string(p.concat) + fmt(" = %.3f", ratio) +
             " (band [3, 8]); adjusted concat " + std::to_string(p.concat_adjusted) + ", poe " +
             std::to_string(p.poe_adjusted) + (adjusted ? " reported" : " MISSING") + fmt(" (%.1f s, limit 10 s)", dt));
}

// ---------------------------------------------------------------- training

// The seed-0 50-episode desk dataset and representation checkpoint.
int train_fixture(const std::string& cli, const fs::path& work) {
  fs::remove_all(work / "data");
  fs::remove_all(work / "repr");
  const auto t0 = std::chrono::steady_clock::now();
  int rc = run(cli, "gen-data --seed 0 --set data.episodes=50 --out " + quote(work / "data"), work / "gen-data.log");
  if (rc != 0) {
    std::cerr << "gen-data failed (exit " << rc << "), see " << (work / "gen-data.log") << "\n";
    return 1;
  }
  const auto t1 = std::chrono::steady_clock::now();
  rc = run(cli, "train-repr --seed 0 --data " + quote(work / "data" / "dataset.vttc") + " --out " + quote(work / "repr"),
           work / "train-repr.log");
  std::ofstream(work / "train-repr.seconds") << seconds_since(t1) << "\n";
  std::printf("train fixture: gen-data %.1f s, train-repr %.1f s, exit %d\n",
              std::chrono::duration<double>(t1 - t0).count(), seconds_since(t1), rc);
  return rc == 0 ? 0 : 1;
}

void criterion_repr(const std::string& cli, const fs::path& work) {
  const auto kv = read_summary(work / "repr" / "summary.txt");
  const double contact = num(kv, "holdout_contact_accuracy"), align = num(kv, "holdout_align_accuracy");
  const double steps = num(kv, "steps");
  double secs = 0;
  std::ifstream(work / "train-repr.seconds") >> secs;
  std::string ablations;
  bool ablation_ok = true;
  for (const std::string kind : {"vtt-no-contact", "vtt-no-align"}) {
    const fs::path out = work / ("ablation-" + kind);
    fs::remove_all(out);
    const int rc = run(cli,
                       "train-repr --seed 0 --fusion " + kind + " --set repr.steps=" + std::to_string(kAblationSteps) +
                           " --data " + quote(work / "data" / "dataset.vttc") + " --out " + quote(out),
                       work / ("ablation-" + kind + ".log"));
    const bool done = rc == 0 && fs::exists(out / "checkpoint.vttc");
    ablation_ok = ablation_ok && done;
    ablations += " " + kind + (done ? " ok" : " FAILED");
  }
  report(7, "contact/alignment learning",
         contact > kContactAcc && align > kAlignAcc && steps <= kReprStepBudget && secs < 900.0 && ablation_ok,
         fmt("held-out contact %.3f (> 0.95)", contact) + fmt(", alignment %.3f (> 0.90)", align) +
             fmt(", %.0f steps", steps) + fmt(", %.0f s (limit 900 s); ablations:", secs) + ablations);
}

void criterion_attention(const std::string& cli, const fs::path& work) {
  const fs::path out = work / "heatmap";
  fs::remove_all(out);
  const auto t0 = std::chrono::steady_clock::now();
  const int rc = run(cli,
                     "heatmap --seed 0 --episodes " + std::to_string(kAttentionEpisodes) + " --ckpt " +
                         quote(work / "repr" / "checkpoint.vttc") + " --out " + quote(out),
                     work / "heatmap.log");
  const double dt = seconds_since(t0);
  if (rc != 0) {
    report(8, "attention shift", false, "heatmap command exited " + std::to_string(rc));
    return;
  }
  const auto kv = read_summary(out / "summary.txt");
  const double in_t = num(kv, "in_contact_tactile"), pre_t = num(kv, "pre_contact_tactile");
  const double pre_v = num(kv, "pre_contact_visual");
  // File contract: N overlays and one N-row CSV per episode.
  bool files = true;
  for (int k = 0; k < kAttentionEpisodes; ++k) {
    const fs::path ep = out / ("episode_" + std::to_string(k));
    std::size_t ppm = 0, rows = 0;
    for (const auto& f : fs::directory_iterator(ep)) ppm += f.path().extension() == ".ppm";
    std::ifstream csv(ep / "proportions.csv");
    std::string line;
    while (std::getline(csv, line)) ++rows;
    files = files && ppm > 0 && rows == ppm + 1;
  }
  report(8, "attention shift",
         in_t > pre_t && pre_v > kPreVisual && num(kv, "episodes") >= kAttentionEpisodes && files && dt < 300.0,
         fmt("in-contact tactile %.4f", in_t) + fmt(" vs pre-contact %.4f", pre_t) +
             fmt("; pre-contact visual %.4f (> 0.5)", pre_v) + "; " + std::to_string(kAttentionEpisodes) +
             " episodes, files " + (files ? "ok" : "BAD") + fmt(" (%.1f s, limit 300 s)", dt));
}

void criterion_rl(const std::string& cli, const fs::path& work) {
  const fs::path out = work / "rl";
  fs::remove_all(out);
  const auto t0 = std::chrono::steady_clock::now();
  const int rc =
      run(cli, "train-rl --seed 0 --ckpt " + quote(work / "repr" / "checkpoint.vttc") + " --out " + quote(out),
          work / "train-rl.log");
  const double dt = seconds_since(t0);
  if (rc != 0) {
    report(10, "RL improvement", false, "train-rl exited " + std::to_string(rc));
    return;
  }
  const auto kv = read_summary(out / "summary.txt");
  const double last = num(kv, "last_mean_return"), last_se = num(kv, "last_std_error");
  const double rnd = num(kv, "random_mean_return"), rnd_se = num(kv, "random_std_error");
  const double success = num(kv, "last_success_rate");
  const double margin = kRlSigmas * std::sqrt(last_se * last_se + rnd_se * rnd_se);
  const double env_steps = num(kv, "env_steps");
  // CSV contract: header plus one row per training episode.
  std::ifstream csv(out / "metrics.csv");
  std::string header, line;
  std::getline(csv, header);
  std::size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  const bool csv_ok = header == "episode,return,success" && rows == static_cast<std::size_t>(num(kv, "episodes"));
  report(10, "RL improvement",
         last - rnd >= margin && success > kRlSuccess && env_steps <= kRlEnvStepBudget && csv_ok && dt < 3600.0,
         fmt("last-50 return %.2f", last) + fmt(" vs random %.2f", rnd) + fmt(" (gap %.2f,", last - rnd) +
             fmt(" need >= %.2f);", margin) + fmt(" last-50 success %.2f (> 0.5);", success) +
             fmt(" eval success %.2f;", num(kv, "eval_success_rate")) + fmt(" %.0f env steps;", env_steps) +
             (csv_ok ? " csv ok" : " csv BAD") + fmt(" (%.0f s, limit 3600 s)", dt));
}

// ---------------------------------------------------------------- determinism

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  if (!fs::exists(root)) return out;
  for (const auto& f : fs::recursive_directory_iterator(root)) {
    if (f.is_regular_file()) out[fs::relative(f.path(), root).string()] = slurp(f.path());
  }
  return out;
}

void criterion_determinism(const std::string& cli, const fs::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string small = " --set data.episodes=6 --set repr.steps=60 --set rl.env_steps=400 --set rl.warmup_steps=200"
                            " --set rl.update_every=4 --set rl.eval_episodes=3 --set rl.random_episodes=3";
  struct Cmd {
    std::string name, args;
  };
  auto pipeline = [&](const fs::path& dir, std::uint64_t seed) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string s = " --seed " + std::to_string(seed) + small;
    const std::vector<Cmd> cmds{
        {"gen-data", "gen-data" + s + " --out " + quote(dir / "data")},
        {"train-repr", "train-repr" + s + " --data " + quote(dir / "data" / "dataset.vttc") + " --out " + quote(dir / "repr")},
        {"train-rl", "train-rl" + s + " --ckpt " + quote(dir / "repr" / "checkpoint.vttc") + " --out " + quote(dir / "rl")},
        {"eval", "eval" + s + " --episodes 3 --ckpt " + quote(dir / "rl" / "checkpoint.vttc") + " --out " + quote(dir / "eval")},
        {"heatmap", "heatmap" + s + " --episodes 2 --ckpt " + quote(dir / "repr" / "checkpoint.vttc") + " --out " + quote(dir / "heat")},
        {"gradcheck", "gradcheck --seed " + std::to_string(seed)},
        {"params", "params" + s},
    };
    std::map<std::string, std::string> out;
    fs::create_directories(dir / "logs");
    for (const auto& c : cmds) {
      const fs::path log = dir / "logs" / (c.name + ".stdout");
      const std::string cmd = quote(cli) + " " + c.args + " > " + quote(log) + " 2> " + quote(dir / "logs" / (c.name + ".stderr"));
      const int rc = std::system(cmd.c_str());
      out["exit:" + c.name] = std::to_string(rc);
      out["stdout:" + c.name] = slurp(log);
    }
    for (const auto& sub : {"data", "repr", "rl", "eval", "heat"}) {
      for (auto& [k, v] : tree_bytes(dir / sub)) out[std::string(sub) + "/" + k] = std::move(v);
    }
    return out;
  };
  const auto a = pipeline(work / "det-a", 0), b = pipeline(work / "det-b", 0), c = pipeline(work / "det-c", 1);
  std::size_t compared = 0;
  std::string diffs;
  bool all_ran = true;
  for (const auto& [k, v] : a) {
    if (k.rfind("exit:", 0) == 0 && v != "0") all_ran = false;
    const auto it = b.find(k);
    if (it == b.end() || it->second != v) diffs += " " + k;
    ++compared;
  }
  if (a.size() != b.size()) diffs += " (file sets differ)";
  // A different seed must change the checkpoints, or the comparison proves nothing.
  const bool seed_matters = c.at("repr/checkpoint.vttc") != a.at("repr/checkpoint.vttc") &&
                            c.at("rl/checkpoint.vttc") != a.at("rl/checkpoint.vttc");
  const double dt = seconds_since(t0);
  report(11, "determinism", diffs.empty() && all_ran && seed_matters,
         std::to_string(compared) + " outputs of 7 commands compared byte-for-byte" +
             (diffs.empty() ? "" : "; differing:" + diffs) + (all_ran ? "" : "; a command failed") +
             (seed_matters ? "; seed 1 differs" : "; seed change had NO effect") + fmt(" (%.0f s)", dt));
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 4) {
    std::fprintf(stderr, "usage: acceptance <structural|train|repr|attention|rl|determinism> <vtt-cli> <workdir>\n");
    return 2;
  }
  const std::string mode = argv[1], cli = argv[2];
  const fs::path work = argv[3];
  fs::create_directories(work);
  try {
    if (mode == "structural") {
      criterion_shapes();
      criterion_decomposition();
      criterion_row_stochastic();
      criterion_gradcheck(cli, work);
      criterion_poe();
      criterion_kl();
      criterion_params(cli, work);
    } else if (mode == "train") {
      return train_fixture(cli, work);
    } else if (mode == "repr") {
      criterion_repr(cli, work);
    } else if (mode == "attention") {
      criterion_attention(cli, work);
    } else if (mode == "rl") {
      criterion_rl(cli, work);
    } else if (mode == "determinism") {
      criterion_determinism(cli, work);
    } else {
      std::fprintf(stderr, "unknown mode %s\n", mode.c_str());
      return 2;
    }
  } catch (const std::exception& e) {
    std::printf("acceptance %s aborted: %s\n", mode.c_str(), e.what());
    return 1;
  }
  return failures == 0 ? 0 : 1;
}
