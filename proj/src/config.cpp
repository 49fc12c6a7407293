#include "vtt/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace vtt {

namespace {

template <class C, class F>
void visit_fields(C& c, F&& f) {
  f("seed", c.seed);
  f("fusion", c.fusion);
  f("image_hw", c.image_hw);
  f("patch_px", c.patch_px);

  f("vtt.d", c.vtt.d);
  f("vtt.heads", c.vtt.heads);
  f("vtt.layers", c.vtt.layers);
  f("vtt.compress_c", c.vtt.compress_c);
  f("vtt.z_dim", c.vtt.z_dim);

  f("baseline.patch_width", c.baseline.patch_width);
  f("baseline.image_hidden", c.baseline.image_hidden);
  f("baseline.image_out", c.baseline.image_out);
  f("baseline.tactile_hidden", c.baseline.tactile_hidden);
  f("baseline.tactile_out", c.baseline.tactile_out);
  f("baseline.poe_latent", c.baseline.poe_latent);

  f("env.dt", c.env.dt);
  f("env.v_max", c.env.v_max);
  f("env.ee_radius", c.env.ee_radius);
  f("env.block_half", c.env.block_half);
  f("env.k_contact", c.env.k_contact);
  f("env.friction", c.env.friction);
  f("env.gravity", c.env.gravity);
  f("env.sensor_lever", c.env.sensor_lever);
  f("env.success_radius", c.env.success_radius);
  f("env.horizon", c.env.horizon);
  f("env.mass_min", c.env.mass_min);
  f("env.mass_max", c.env.mass_max);
  f("env.min_goal_distance", c.env.min_goal_distance);
  f("env.view_min", c.env.view_min);
  f("env.view_max", c.env.view_max);
  f("env.supersample", c.env.supersample);

  f("latent.d_z", c.latent.d_z);
  f("latent.hidden", c.latent.hidden);
  f("latent.decoder_hidden", c.latent.decoder_hidden);
  f("latent.kl_beta", c.latent.kl_beta);

  f("data.episodes", c.data.episodes);
  f("data.mix_orbit", c.data.mix_orbit);
  f("data.mix_scripted", c.data.mix_scripted);

  f("repr.steps", c.repr.steps);
  f("repr.batch", c.repr.batch);
  f("repr.window", c.repr.window);
  f("repr.lr", c.repr.lr);
  f("repr.max_grad_norm", c.repr.max_grad_norm);
  f("repr.holdout", c.repr.holdout);
  f("repr.contact_loss", c.repr.contact_loss);
  f("repr.align_loss", c.repr.align_loss);

  f("rl.env_steps", c.rl.env_steps);
  f("rl.warmup_steps", c.rl.warmup_steps);
  f("rl.update_every", c.rl.update_every);
  f("rl.batch", c.rl.batch);
  f("rl.window", c.rl.window);
  f("rl.hidden", c.rl.hidden);
  f("rl.model_lr", c.rl.model_lr);
  f("rl.critic_lr", c.rl.critic_lr);
  f("rl.actor_lr", c.rl.actor_lr);
  f("rl.alpha", c.rl.alpha);
  f("rl.gamma", c.rl.gamma);
  f("rl.rho", c.rl.rho);
  f("rl.eval_episodes", c.rl.eval_episodes);
  f("rl.random_episodes", c.rl.random_episodes);

  f("heatmap.episodes", c.heatmap.episodes);
  f("heatmap.all_layers", c.heatmap.all_layers);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class N>
N parse_number(const std::string& key, const std::string& v) {
  N out{};
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError("config key " + key + ": cannot parse '" + v + "'");
  return out;
}

struct Assign {
  const std::string& key;
  const std::string& value;
  bool* found;

  void operator()(const char* name, int& x) const { hit(name, [&] { x = parse_number<int>(key, value); }); }
  void operator()(const char* name, double& x) const { hit(name, [&] { x = parse_number<double>(key, value); }); }
  void operator()(const char* name, std::uint64_t& x) const {
    hit(name, [&] { x = parse_number<std::uint64_t>(key, value); });
  }
  void operator()(const char* name, bool& x) const {
    hit(name, [&] {
      if (value == "true" || value == "1") {
        x = true;
      } else if (value == "false" || value == "0") {
        x = false;
      } else {
        throw ConfigError("config key " + key + ": expected true/false, got '" + value + "'");
      }
    });
  }
  void operator()(const char* name, FusionKind& x) const { hit(name, [&] { x = parse_fusion(value); }); }

  template <class Fn>
  void hit(const char* name, Fn&& fn) const {
    if (key != name) return;
    fn();
    *found = true;
  }
};

struct Print {
  std::ostringstream& os;

  template <class N>
  void number(const char* name, N x) const {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
    os << name << " = " << std::string(buf, p) << '\n';
  }
  void operator()(const char* name, int x) const { number(name, x); }
  void operator()(const char* name, double x) const { number(name, x); }
  void operator()(const char* name, std::uint64_t x) const { number(name, x); }
  void operator()(const char* name, bool x) const { os << name << " = " << (x ? "true" : "false") << '\n'; }
  void operator()(const char* name, FusionKind x) const { os << name << " = " << fusion_name(x) << '\n'; }
};

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  bool found = false;
  visit_fields(*this, Assign{key, value, &found});
  if (!found) throw ConfigError("unknown config key: " + key);
}

void ExperimentConfig::validate() {
  vtt.image_hw = baseline.image_hw = env.image_hw = latent.image_hw = image_hw;
  vtt.patch_px = baseline.patch_px = patch_px;
  effective_vtt().validate();
  baseline.validate();
  env.validate();
  latent.z_vtt = 1;  // real width depends on the fusion model; checked when built
  latent.validate();
  sac(1).validate();
  auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
  if (data.episodes <= 0) fail("data.episodes must be positive");
  if (data.mix_orbit < 0 || data.mix_scripted < 0 || data.mix_orbit + data.mix_scripted > 1.0 + 1e-12) {
    fail("data mixture weights must be non-negative and sum to at most 1");
  }
  if (repr.steps < 0 || repr.batch <= 0 || repr.window < 1) fail("repr.steps/batch/window out of range");
  if (!(repr.lr > 0) || !(repr.max_grad_norm >= 0)) fail("repr.lr must be positive");
  if (!(repr.holdout > 0 && repr.holdout < 1)) fail("repr.holdout must lie in (0, 1)");
  if (rl.env_steps < 0 || rl.warmup_steps < 0 || rl.update_every <= 0 || rl.batch <= 0 || rl.window < 2) {
    fail("rl step counts out of range (window needs at least 2 steps)");
  }
  if (!(rl.model_lr > 0 && rl.critic_lr > 0 && rl.actor_lr > 0)) fail("rl learning rates must be positive");
  if (rl.eval_episodes < 0 || rl.random_episodes < 0) fail("rl episode counts must be non-negative");
  if (heatmap.episodes <= 0) fail("heatmap.episodes must be positive");
}

VttConfig ExperimentConfig::effective_vtt() const {
  VttConfig c = vtt;
  c.image_hw = image_hw;
  c.patch_px = patch_px;
  c.contact_token = c.align_token = true;
  return is_vtt_family(fusion) ? ablate(c, fusion) : c;
}

SacConfig ExperimentConfig::sac(int z_dim) const {
  SacConfig s;
  s.actor_input = z_dim + 2;
  s.latent_dim = latent.d_z;
  s.action_dim = 2;
  s.hidden = rl.hidden;
  s.alpha = rl.alpha;
  s.gamma = rl.gamma;
  s.rho = rl.rho;
  return s;
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  ExperimentConfig c;
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError("config line " + std::to_string(lineno) + ": repeated key " + key);
    c.set(key, value);
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream os;
  ExperimentConfig copy = *this;
  visit_fields(copy, Print{os});
  return os.str();
}

void ExperimentConfig::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write config " + path);
  f << to_text();
  if (!f) throw IoError("failed writing " + path);
}

}  // namespace vtt
