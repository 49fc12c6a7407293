#include "vtt/env.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vtt/error.hpp"

namespace vtt {

namespace {

Vec2 add(const Vec2& a, const Vec2& b) { return {a[0] + b[0], a[1] + b[1]}; }
Vec2 sub(const Vec2& a, const Vec2& b) { return {a[0] - b[0], a[1] - b[1]}; }
Vec2 mul(const Vec2& a, double s) { return {a[0] * s, a[1] * s}; }
double dot(const Vec2& a, const Vec2& b) { return a[0] * b[0] + a[1] * b[1]; }
double cross(const Vec2& a, const Vec2& b) { return a[0] * b[1] - a[1] * b[0]; }
double norm(const Vec2& a) { return std::hypot(a[0], a[1]); }
Vec2 rotate(const Vec2& a, double th) {
  const double c = std::cos(th), s = std::sin(th);
  return {c * a[0] - s * a[1], s * a[0] + c * a[1]};
}

/// Half-width of the axis-aligned box around a yawed square.
double extent(double half, double yaw) { return half * (std::abs(std::cos(yaw)) + std::abs(std::sin(yaw))); }

std::array<double, 2> clip_action(const Vec2& v) {
  return {std::clamp(v[0], -1.0, 1.0), std::clamp(v[1], -1.0, 1.0)};
}

/// Velocity command toward `target`, saturated at unit speed.
std::array<double, 2> steer(const EnvConfig& cfg, const Vec2& from, const Vec2& target) {
  Vec2 d = mul(sub(target, from), 1.0 / (cfg.v_max * cfg.dt));
  const double n = norm(d);
  if (n > 1.0) d = mul(d, 1.0 / n);
  return clip_action(d);
}

}  // namespace

void EnvConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("env config: " + m); };
  if (!(dt > 0 && v_max > 0 && ee_radius > 0 && block_half > 0)) fail("dt, v_max, radius and half-size must be positive");
  if (!(k_contact > 0) || !(friction >= 0) || !(gravity >= 0)) fail("contact constants out of range");
  if (horizon <= 0) fail("horizon must be positive");
  if (!(mass_min > 0 && mass_max >= mass_min)) fail("mass range invalid");
  if (!(success_radius > 0)) fail("success radius must be positive");
  if (image_hw <= 0 || supersample <= 0) fail("render size must be positive");
  if (!(view_min < view_max)) fail("view window is empty");
}

EnvConfig EnvConfig::full_render() {
  EnvConfig c;
  c.image_hw = 84;
  return c;
}

ContactGeometry contact_geometry(const Vec2& ee, double radius, const Vec2& block, double yaw, double half) {
  const Vec2 local = rotate(sub(ee, block), -yaw);
  ContactGeometry g;
  Vec2 n_local;
  const bool inside = std::abs(local[0]) < half && std::abs(local[1]) < half;
  if (inside) {
    // Centre inside the square: exit through the nearest face.
    Vec2 q = local;
    if (half - std::abs(local[0]) < half - std::abs(local[1])) {
      q[0] = std::copysign(half, local[0]);
      n_local = {-std::copysign(1.0, local[0]), 0.0};
      g.penetration = radius + (half - std::abs(local[0]));
    } else {
      q[1] = std::copysign(half, local[1]);
      n_local = {0.0, -std::copysign(1.0, local[1])};
      g.penetration = radius + (half - std::abs(local[1]));
    }
    g.point = add(block, rotate(q, yaw));
  } else {
    const Vec2 q = {std::clamp(local[0], -half, half), std::clamp(local[1], -half, half)};
    const Vec2 d = sub(q, local);
    const double dist = norm(d);
    n_local = mul(d, 1.0 / dist);
    g.penetration = radius - dist;
    g.point = add(block, rotate(q, yaw));
  }
  g.normal = rotate(n_local, yaw);
  return g;
}

TouchPushEnv::TouchPushEnv(const EnvConfig& cfg) : cfg_(cfg) { cfg_.validate(); }

PushState TouchPushEnv::reset(SeededRng& rng) const {
  PushState s;
  s.ee = cfg_.ee_home;
  s.block_half = cfg_.block_half;
  s.block = {rng.uniform(0.45, 0.55), rng.uniform(0.35, 0.45)};
  s.block_yaw = rng.uniform(-0.3, 0.3);
  s.block_mass = rng.uniform(cfg_.mass_min, cfg_.mass_max);
  do {
    s.goal = {rng.uniform(0.45, 0.55), rng.uniform(0.75, 0.85)};
  } while (norm(sub(s.goal, s.block)) < cfg_.min_goal_distance);
  s.step_count = 0;
  return s;
}

double TouchPushEnv::goal_distance(const PushState& s) const { return norm(sub(s.block, s.goal)); }

StepResult TouchPushEnv::step(PushState& s, const std::array<double, 2>& action) const {
  for (double a : action) {
    if (!std::isfinite(a)) throw ValidationError("step: action is not finite");
    if (a < -1.0 || a > 1.0) throw ValidationError("step: action outside [-1, 1]: " + std::to_string(a));
  }
  if (s.step_count >= cfg_.horizon) throw UsageError("step: episode already finished");
  const double r = cfg_.ee_radius, h = s.block_half;
  const double move = cfg_.v_max * cfg_.dt;
  s.ee = {std::clamp(s.ee[0] + action[0] * move, r, 1.0 - r), std::clamp(s.ee[1] + action[1] * move, r, 1.0 - r)};

  StepResult out;
  std::array<float, 6> wrench{};
  const ContactGeometry g = contact_geometry(s.ee, r, s.block, s.block_yaw, h);
  if (g.penetration > 0) {
    out.contact = true;
    // Translate the block to resolve the penetration, then turn it by the
    // lever of the contact point about its centre.
    const Vec2 wanted = mul(g.normal, g.penetration);
    const Vec2 lever = sub(g.point, s.block);
    const double rho2 = (2 * h) * (2 * h) / 6.0;
    s.block_yaw += 0.25 * cross(lever, wanted) / rho2;
    const double e = extent(h, s.block_yaw);
    const Vec2 target = add(s.block, wanted);
    const Vec2 placed = {std::clamp(target[0], e, 1.0 - e), std::clamp(target[1], e, 1.0 - e)};
    const double blocked = norm(sub(target, placed));
    s.block = placed;
    // Whatever overlap remains (rotation, walls) pushes the end-effector back.
    const ContactGeometry after = contact_geometry(s.ee, r, s.block, s.block_yaw, h);
    if (after.penetration > 0) s.ee = sub(s.ee, mul(after.normal, after.penetration));

    const double magnitude = cfg_.k_contact * (g.penetration + blocked) + cfg_.friction * s.block_mass * cfg_.gravity;
    const Vec2 f_block = mul(g.normal, magnitude);  // force applied to the block
    const Vec2 f = mul(f_block, -1.0);                 // reaction at the wrist
    wrench[0] = static_cast<float>(f[0]);
    wrench[1] = static_cast<float>(f[1]);
    wrench[2] = 0.0f;
    wrench[3] = static_cast<float>(cfg_.sensor_lever * f[1]);
    wrench[4] = static_cast<float>(-cfg_.sensor_lever * f[0]);
    wrench[5] = static_cast<float>(cross(lever, f_block));
  }
  ++s.step_count;

  out.distance = goal_distance(s);
  out.success = out.distance < cfg_.success_radius;
  out.reward = out.success ? 25.0 : -10.0 * out.distance;
  out.done = out.success || s.step_count >= cfg_.horizon;
  out.obs.image = render(s);
  out.obs.wrench = wrench;
  out.obs.contact = out.contact ? 1 : 0;
  out.obs.aligned = 1;
  out.obs.t = s.step_count;
  return out;
}

Observation TouchPushEnv::observe(const PushState& s) const {
  Observation o;
  o.image = render(s);
  o.wrench = {};
  o.contact = 0;
  o.aligned = 1;
  o.t = s.step_count;
  return o;
}

std::vector<float> TouchPushEnv::render(const PushState& s) const {
  const int n = cfg_.image_hw, ss = cfg_.supersample;
  const double span = cfg_.view_max - cfg_.view_min;
  const double h = s.block_half, r2 = cfg_.ee_radius * cfg_.ee_radius;
  constexpr double kBackground = 0.1, kGoal = 0.5;
  constexpr double kEe[3] = {0.2, 0.6, 1.0};
  const double c = std::cos(-s.block_yaw), sn = std::sin(-s.block_yaw);
  std::vector<float> img(static_cast<std::size_t>(n) * n * 3);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc[3] = {0, 0, 0};
      for (int si = 0; si < ss; ++si) {
        for (int sj = 0; sj < ss; ++sj) {
          const double wx = cfg_.view_min + (j + (sj + 0.5) / ss) / n * span;
          const double wy = cfg_.view_max - (i + (si + 0.5) / ss) / n * span;
          double rgb[3] = {kBackground, kBackground, kBackground};
          if (cfg_.draw_goal && std::abs(wx - s.goal[0]) <= h && std::abs(wy - s.goal[1]) <= h) {
            rgb[0] = rgb[1] = rgb[2] = kGoal;
          }
          if (cfg_.draw_block) {
            const double dx = wx - s.block[0], dy = wy - s.block[1];
            const double lx = c * dx - sn * dy, ly = sn * dx + c * dy;
            if (std::abs(lx) <= h && std::abs(ly) <= h) rgb[0] = rgb[1] = rgb[2] = 1.0;
          }
          if (cfg_.draw_ee) {
            const double dx = wx - s.ee[0], dy = wy - s.ee[1];
            if (dx * dx + dy * dy <= r2) {
              for (int k = 0; k < 3; ++k) rgb[k] = kEe[k];
            }
          }
          for (int k = 0; k < 3; ++k) acc[k] += rgb[k];
        }
      }
      float* px = &img[(static_cast<std::size_t>(i) * n + j) * 3];
      for (int k = 0; k < 3; ++k) px[k] = static_cast<float>(acc[k] / (ss * ss));
    }
  }
  return img;
}

std::array<double, 2> scripted_push_action(const EnvConfig& cfg, const PushState& s) {
  const Vec2 to_goal = sub(s.goal, s.block);
  const double dist = norm(to_goal);
  if (dist < 1e-9) return {0.0, 0.0};
  const Vec2 dir = mul(to_goal, 1.0 / dist);
  const Vec2 perp = {-dir[1], dir[0]};
  const Vec2 rel = sub(s.ee, s.block);
  const double along = dot(rel, dir), lateral = dot(rel, perp);
  const double reach = s.block_half * std::sqrt(2.0) + cfg.ee_radius;
  if (along > 0.0) {
    // In front of the block: go around on the nearer side first.
    const double side = lateral >= 0 ? 1.0 : -1.0;
    return steer(cfg, s.ee, add(s.block, mul(perp, side * (reach + 0.03))));
  }
  // Pursue a point slightly inside the block's far side from the goal.
  const double rel_yaw = s.block_yaw - std::atan2(dir[1], dir[0]);
  const double support = s.block_half * (std::abs(std::cos(rel_yaw)) + std::abs(std::sin(rel_yaw)));
  const double standoff = support + cfg.ee_radius - 0.012;
  return steer(cfg, s.ee, sub(s.block, mul(dir, standoff)));
}

OrbitPoker::OrbitPoker(SeededRng rng) : rng_(rng) {
  direction_ = rng_.uniform() < 0.5 ? -1.0 : 1.0;
  offset_ = rng_.uniform(-0.02, -0.004);
}

std::array<double, 2> OrbitPoker::act(const EnvConfig& cfg, const PushState& s) {
  if (rng_.uniform() < 0.03) direction_ = -direction_;
  if (rng_.uniform() < 0.05) offset_ = rng_.uniform(-0.02, -0.004);
  retreat_ = retreat_ ? rng_.uniform() > 0.4 : rng_.uniform() < 0.03;
  const Vec2 rel = sub(s.ee, s.block);
  const double phase = std::atan2(rel[1], rel[0]) + direction_ * 0.35;
  double radius = s.block_half + cfg.ee_radius + offset_;
  if (retreat_) radius += 0.05;
  const Vec2 target = add(s.block, {radius * std::cos(phase), radius * std::sin(phase)});
  return steer(cfg, s.ee, target);
}

Episode rollout(const TouchPushEnv& env, DataPolicy policy, SeededRng& rng) {
  const EnvConfig& cfg = env.config();
  PushState s = env.reset(rng);
  OrbitPoker poker(rng.split(0x6f72626974ULL));
  Episode ep;
  for (;;) {
    std::array<double, 2> a{};
    switch (policy) {
      case DataPolicy::kRandom:
        a = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
        break;
      case DataPolicy::kScripted:
        a = scripted_push_action(cfg, s);
        break;
      case DataPolicy::kNoisyScripted: {
        auto base = scripted_push_action(cfg, s);
        a = clip_action({base[0] + rng.normal(0, 0.3), base[1] + rng.normal(0, 0.3)});
        break;
      }
      case DataPolicy::kOrbit:
        a = poker.act(cfg, s);
        break;
    }
    StepResult r = env.step(s, a);
    ep.obs.push_back(std::move(r.obs));
    ep.actions.push_back({static_cast<float>(a[0]), static_cast<float>(a[1])});
    ep.rewards.push_back(static_cast<float>(r.reward));
    ep.dones.push_back(r.done ? 1 : 0);
    ep.successes.push_back(r.success ? 1 : 0);
    if (r.done) break;
  }
  return ep;
}

}  // namespace vtt
