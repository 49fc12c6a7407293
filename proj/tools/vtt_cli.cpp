// Command-line entry point: data generation, training, evaluation and analysis.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "vtt/checks.hpp"
#include "vtt/experiment.hpp"

namespace fs = std::filesystem;
using namespace vtt;

namespace {

struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string fusion;
  std::vector<std::string> overrides;
  std::string out;
};

ExperimentConfig effective_config(const Common& c) {
  ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig{} : ExperimentConfig::load(c.config_path);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not key=value");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed_set) cfg.seed = c.seed;
  if (!c.fusion.empty()) cfg.fusion = parse_fusion(c.fusion);
  cfg.validate();
  return cfg;
}

fs::path prepare_out(const Common& c, const ExperimentConfig& cfg) {
  if (c.out.empty()) throw ValidationError("--out is required");
  fs::create_directories(c.out);
  cfg.save((fs::path(c.out) / "config.txt").string());
  return c.out;
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

/// key=value lines; doubles are written with round-trip precision.
class Summary {
 public:
  void put(const std::string& k, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    text_ += k + "=" + buf + "\n";
  }
  void put(const std::string& k, const std::string& v) { text_ += k + "=" + v + "\n"; }
  void write(const fs::path& p) const {
    std::ofstream f(p);
    if (!f) throw IoError("cannot write " + p.string());
    f << text_;
    std::cout << text_;
  }

 private:
  std::string text_;
};

std::ofstream open_csv(const fs::path& p, const std::string& header) {
  std::ofstream f(p);
  if (!f) throw IoError("cannot write " + p.string());
  f << header << "\n";
  return f;
}

Agent load_agent(const ExperimentConfig& cfg, const std::string& ckpt) {
  Agent a(cfg);
  a.load(TensorArchive::load(ckpt));
  return a;
}

void put_stats(Summary& s, const std::string& prefix, const ReturnStats& r) {
  s.put(prefix + "_mean_return", r.mean);
  s.put(prefix + "_std_error", r.std_error);
  s.put(prefix + "_success_rate", r.success_rate);
  s.put(prefix + "_episodes", r.episodes);
}

int gen_data(const Common& c) {
  const ExperimentConfig cfg = effective_config(c);
  const fs::path out = prepare_out(c, cfg);
  const EpisodeDataset d = generate_dataset(cfg);
  d.save((out / "dataset.vttc").string());
  std::cout << "episodes=" << d.episodes.size() << "\nsteps=" << d.steps()
            << "\ncontact_fraction=" << fixed6(d.contact_fraction()) << "\n";
  return 0;
}

int train_repr_cmd(const Common& c, const std::string& data_path) {
  const ExperimentConfig cfg = effective_config(c);
  const EpisodeDataset data = EpisodeDataset::load(data_path);
  const fs::path out = prepare_out(c, cfg);
  Agent agent(cfg);
  auto csv = open_csv(out / "metrics.csv", "step,total,reconstruction,reward,kl,vtt,regularizer");
  const ReprResult r = train_repr(agent, data, [&](const ReprStepMetrics& m) {
    csv << m.step << "," << fixed6(m.total) << "," << fixed6(m.reconstruction) << "," << fixed6(m.reward) << ","
        << fixed6(m.kl) << "," << fixed6(m.vtt) << "," << fixed6(m.regularizer) << "\n";
    if (m.step % 250 == 0) {
      csv.flush();
      std::cerr << "step " << m.step << " loss " << fixed6(m.total) << "\n";
    }
  });
  agent.to_archive().save((out / "checkpoint.vttc").string());
  Summary s;
  s.put("fusion", fusion_name(cfg.fusion));
  s.put("steps", static_cast<double>(r.log.size()));
  s.put("initial_loss", r.log.empty() ? 0.0 : r.log.front().total);
  s.put("final_loss", r.log.empty() ? 0.0 : r.log.back().total);
  s.put("final_kl_per_step", r.final_kl_per_step);
  s.put("train_episodes", static_cast<double>(r.train_episodes));
  s.put("holdout_episodes", static_cast<double>(r.holdout_episodes));
  s.put("holdout_contact_accuracy", r.holdout.contact);
  s.put("holdout_align_accuracy", r.holdout.align);
  s.write(out / "summary.txt");
  return 0;
}

int train_rl_cmd(const Common& c, const std::string& ckpt) {
  const ExperimentConfig cfg = effective_config(c);
  Agent agent = load_agent(cfg, ckpt);
  const fs::path out = prepare_out(c, cfg);
  auto csv = open_csv(out / "metrics.csv", "episode,return,success");
  const RlResult r = train_rl(agent, [&](const EpisodeReturn& e) {
    csv << e.episode << "," << fixed6(e.ret) << "," << (e.success ? 1 : 0) << "\n" << std::flush;
    if (e.episode % 20 == 0) std::cerr << "episode " << e.episode << " return " << fixed6(e.ret) << "\n";
  });
  agent.to_archive().save((out / "checkpoint.vttc").string());
  Summary s;
  s.put("env_steps", static_cast<double>(r.env_steps));
  s.put("updates", static_cast<double>(r.updates));
  s.put("episodes", static_cast<double>(r.episodes.size()));
  put_stats(s, "last", r.last);
  put_stats(s, "random", r.random);
  put_stats(s, "eval", r.eval);
  s.write(out / "summary.txt");
  return 0;
}

int eval_cmd(const Common& c, const std::string& ckpt, int episodes) {
  const ExperimentConfig cfg = effective_config(c);
  Agent agent = load_agent(cfg, ckpt);
  const fs::path out = prepare_out(c, cfg);
  const auto eps = run_policy_episodes(cfg, &agent, episodes > 0 ? episodes : cfg.rl.eval_episodes, 303);
  auto csv = open_csv(out / "eval.csv", "episode,return,success,steps");
  for (const auto& e : eps) csv << e.episode << "," << fixed6(e.ret) << "," << (e.success ? 1 : 0) << "," << e.steps << "\n";
  Summary s;
  put_stats(s, "eval", summarize(eps));
  s.write(out / "summary.txt");
  return 0;
}

int heatmap_cmd(const Common& c, const std::string& ckpt, int episodes) {
  const ExperimentConfig cfg = effective_config(c);
  Agent agent = load_agent(cfg, ckpt);
  const fs::path out = prepare_out(c, cfg);
  const AttentionShift a = analyze_attention(agent, episodes > 0 ? episodes : cfg.heatmap.episodes, out.string());
  Summary s;
  s.put("episodes", a.episodes);
  s.put("in_contact_steps", static_cast<double>(a.in_contact_steps));
  s.put("pre_contact_steps", static_cast<double>(a.pre_contact_steps));
  s.put("in_contact_tactile", a.in_contact_tactile);
  s.put("pre_contact_tactile", a.pre_contact_tactile);
  s.put("pre_contact_visual", a.pre_contact_visual);
  s.write(out / "summary.txt");
  return 0;
}

int gradcheck_cmd(const Common& c) {
  const std::uint64_t seed = c.seed_set ? c.seed : 0;
  GradCheckOptions opt;
  bool ok = true;
  std::string worst;
  for (const auto& m : gradcheck_suite(seed, opt)) {
    const auto& r = m.report;
    std::printf("%-14s max_rel_error=%.3e entries=%zu worst=%s[%zu] %s\n", m.module.c_str(), r.max_rel_error,
                r.entries_checked, r.worst_parameter.c_str(), r.worst_index, r.passed ? "ok" : "FAILED");
    if (!r.passed) {
      ok = false;
      worst += " " + m.module + ":" + r.worst_parameter;
    }
  }
  if (!ok) {
    std::cerr << "gradcheck failed:" << worst << "\n";
    return 1;
  }
  return 0;
}

int params_cmd(const Common& c) {
  const ExperimentConfig cfg = effective_config(c);
  std::printf("configured (%s)\n", fusion_name(cfg.fusion).c_str());
  for (const auto& r : parameter_table(cfg)) std::printf("  %-20s %12zu\n", r.name.c_str(), r.count);
  const FullScaleParams p = full_scale_parameter_counts();
  std::printf("full-scale encoders\n");
  std::printf("  %-20s %12zu\n", "vtt", p.vtt);
  std::printf("  %-20s %12zu\n", "concat", p.concat);
  std::printf("  %-20s %12zu\n", "poe", p.poe);
  std::printf("  %-20s %12zu\n", "concat_adjusted", p.concat_adjusted);
  std::printf("  %-20s %12zu\n", "poe_adjusted", p.poe_adjusted);
  std::printf("  %-20s %12.4f\n", "vtt/concat", p.vtt_concat_ratio());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Visuo-tactile transformer experiments"};
  app.require_subcommand(1);
  Common c;
  std::string data_path, ckpt;
  int episodes = 0;

  auto common = [&](CLI::App* sub, bool needs_out) {
    sub->add_option("--config", c.config_path, "key=value config file")->check(CLI::ExistingFile);
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& s) { c.seed = s, c.seed_set = true; }, "master seed");
    sub->add_option("--fusion", c.fusion, "vtt|concat|poe|vtt-no-contact|vtt-no-align|vtt-no-both");
    sub->add_option("--set", c.overrides, "override one config key (key=value), repeatable");
    auto* o = sub->add_option("--out", c.out, "output directory");
    if (needs_out) o->required();
  };
  auto* gen = app.add_subcommand("gen-data", "roll out the data mixture and write dataset.vttc");
  common(gen, true);
  auto* repr = app.add_subcommand("train-repr", "pretrain fusion and sequence model on a dataset");
  common(repr, true);
  repr->add_option("--data", data_path, "dataset file")->required()->check(CLI::ExistingFile);
  auto* rl = app.add_subcommand("train-rl", "joint SAC and model training from a checkpoint");
  common(rl, true);
  rl->add_option("--ckpt", ckpt, "representation checkpoint")->required()->check(CLI::ExistingFile);
  auto* ev = app.add_subcommand("eval", "deterministic policy episodes");
  common(ev, true);
  ev->add_option("--ckpt", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--episodes", episodes, "episode count (default rl.eval_episodes)");
  auto* hm = app.add_subcommand("heatmap", "attention overlays and modality proportions");
  common(hm, true);
  hm->add_option("--ckpt", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  hm->add_option("--episodes", episodes, "episode count (default heatmap.episodes)");
  auto* gc = app.add_subcommand("gradcheck", "finite-difference suite at toy dims");
  common(gc, false);
  auto* pr = app.add_subcommand("params", "parameter counts");
  common(pr, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  try {
    if (*gen) return gen_data(c);
    if (*repr) return train_repr_cmd(c, data_path);
    if (*rl) return train_rl_cmd(c, ckpt);
    if (*ev) return eval_cmd(c, ckpt, episodes);
    if (*hm) return heatmap_cmd(c, ckpt, episodes);
    if (*gc) return gradcheck_cmd(c);
    if (*pr) return params_cmd(c);
  } catch (const std::invalid_argument& e) {  // validation, config and shape errors
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::logic_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
