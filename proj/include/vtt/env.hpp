#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "vtt/observation.hpp"
#include "vtt/rng.hpp"

namespace vtt {

using Vec2 = std::array<double, 2>;

struct EnvConfig {
  double dt = 0.05;
  double v_max = 0.2;
  double ee_radius = 0.03;
  double block_half = 0.05;
  double k_contact = 200.0;
  double friction = 0.3;  // Coulomb coefficient against the table
  double gravity = 9.81;
  double sensor_lever = 0.1;  // wrist sensor height above the contact plane
  double success_radius = 0.05;
  int horizon = 100;
  double mass_min = 0.5, mass_max = 2.0;
  double min_goal_distance = 0.3;
  Vec2 ee_home = {0.5, 0.2};
  int image_hw = 24;
  /// Rendered window of the [0,1]^2 workspace.
  double view_min = 0.1, view_max = 0.9;
  int supersample = 4;
  bool draw_goal = true, draw_block = true, draw_ee = true;

  void validate() const;
  /// 84 px render for shape tests.
  static EnvConfig full_render();
};

struct PushState {
  Vec2 ee{};
  Vec2 block{};
  double block_yaw = 0;
  double block_mass = 1;
  double block_half = 0.05;
  Vec2 goal{};
  int step_count = 0;
};

struct StepResult {
  Observation obs;
  double reward = 0;
  bool done = false;
  bool success = false;
  bool contact = false;
  double distance = 0;
};

/// Closest-point contact between the end-effector disk and the block square.
struct ContactGeometry {
  double penetration = 0;  // > 0 when touching
  Vec2 normal{};           // unit, from the end-effector toward the block
  Vec2 point{};            // closest point on the block boundary
};

ContactGeometry contact_geometry(const Vec2& ee, double radius, const Vec2& block, double yaw, double half);

/// Kinematic planar pushing with a wrist force/torque reading.
class TouchPushEnv {
 public:
  explicit TouchPushEnv(const EnvConfig& cfg = {});

  const EnvConfig& config() const { return cfg_; }

  PushState reset(SeededRng& rng) const;
  /// Advances `s` in place. Actions must be finite and inside [-1, 1]^2.
  StepResult step(PushState& s, const std::array<double, 2>& action) const;
  /// [H x W x 3] in [0, 1].
  std::vector<float> render(const PushState& s) const;
  /// Observation of a state with no contact this step (used after reset).
  Observation observe(const PushState& s) const;
  double goal_distance(const PushState& s) const;

 private:
  EnvConfig cfg_;
};

// Data-collection controllers. All read the privileged state and return an
// action in [-1, 1]^2.

/// Straight-line pusher: gets behind the block relative to the goal and pushes.
std::array<double, 2> scripted_push_action(const EnvConfig& cfg, const PushState& s);

/// Circles the block while pressing into it, with occasional retreats, so the
/// contact direction sweeps all sides.
class OrbitPoker {
 public:
  explicit OrbitPoker(SeededRng rng);
  std::array<double, 2> act(const EnvConfig& cfg, const PushState& s);

 private:
  SeededRng rng_;
  double direction_ = 1.0;
  double offset_ = 0.0;
  bool retreat_ = false;
};

enum class DataPolicy : std::uint8_t { kRandom = 0, kScripted = 1, kNoisyScripted = 2, kOrbit = 3 };

struct Episode {
  /// Tuple t holds the observation after action t, the action, its reward,
  /// and whether the episode ended there.
  std::vector<Observation> obs;
  std::vector<std::array<float, 2>> actions;
  std::vector<float> rewards;
  std::vector<std::uint8_t> dones;
  std::vector<std::uint8_t> successes;

  std::size_t size() const { return obs.size(); }
};

Episode rollout(const TouchPushEnv& env, DataPolicy policy, SeededRng& rng);

}  // namespace vtt
