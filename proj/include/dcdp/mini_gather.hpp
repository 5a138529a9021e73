#pragma once

#include "dcdp/env.hpp"

namespace dcdp {

/// Desk-scale gathering gridworld with Crafter-like structure: partial
/// observability (5x5 egocentric window), an achievement prerequisite chain
/// (stone needs wood) and sparse first-unlock rewards.
///
/// Actions: 0 up, 1 down, 2 left, 3 right, 4 interact, 5 noop.
/// Achievements: collect_wood, collect_stone, drink_water, reach_goal.
///   - stepping onto a wood tile consumes it; first one unlocks collect_wood
///   - stone tiles are solid until wood is unlocked, then collectable
///   - interact while standing on water unlocks drink_water (water persists)
///   - stepping onto the goal tile unlocks reach_goal
/// Rewards are +1 per first unlock. Episodes end after 200 ticks or once all
/// achievements are unlocked.
class MiniGatherEnv : public Env {
 public:
  enum Tile : std::uint8_t { kFloor = 0, kWall, kWood, kStone, kWater, kGoal };

  static constexpr int kGridSize = 12;   // including the outer wall ring
  static constexpr int kViewCells = 5;   // egocentric window
  static constexpr int kCellPixels = 6;
  static constexpr int kImageSize = 32;  // 30px view + 2px HUD rows
  static constexpr int kTimeLimit = 200;

  MiniGatherEnv() = default;

  /// Fixed layout for tests. Rows of kGridSize chars:
  /// '#' wall, '.' floor, 'W' wood, 'S' stone, 'w' water, 'G' goal, 'A' agent.
  static MiniGatherEnv from_map(const std::vector<std::string>& rows);

  Observation reset(std::uint64_t seed) override;
  StepResult step(int action) override;
  int action_count() const override { return 6; }
  std::vector<std::string> achievement_names() const override {
    return {"collect_wood", "collect_stone", "drink_water", "reach_goal"};
  }
  int obs_height() const override { return kImageSize; }
  int obs_width() const override { return kImageSize; }
  int obs_channels() const override { return 3; }

  int ticks() const { return ticks_; }
  std::pair<int, int> agent_position() const { return {agent_y_, agent_x_}; }
  Tile tile_at(int y, int x) const { return grid_[std::size_t(y * kGridSize + x)]; }

 private:
  Observation render() const;
  StepResult finish_step(double reward);
  void unlock(int idx, double& reward);

  std::vector<Tile> grid_;
  int agent_y_ = 0, agent_x_ = 0;
  int ticks_ = 0;
  bool active_ = false;
  bool fixed_layout_ = false;
  bool unlocked_[4] = {false, false, false, false};
};

}  // namespace dcdp
