#include "dcdp/mini_gather.hpp"

#include <algorithm>

namespace dcdp {

namespace {

struct Rgb {
  std::uint8_t r, g, b;
};

constexpr Rgb kTileColors[] = {
    {40, 40, 40},     // floor
    {110, 70, 35},    // wall
    {30, 160, 50},    // wood
    {140, 140, 150},  // stone
    {45, 90, 220},    // water
    {235, 200, 40},   // goal
};
constexpr Rgb kAgentColor{245, 245, 245};
constexpr Rgb kHudOff{15, 15, 15};
constexpr Rgb kHudColors[] = {
    {30, 160, 50},    // collect_wood
    {140, 140, 150},  // collect_stone
    {45, 90, 220},    // drink_water
    {235, 200, 40},   // reach_goal
};
constexpr Rgb kTimeBar{200, 200, 200};

constexpr int kAchWood = 0, kAchStone = 1, kAchWater = 2, kAchGoal = 3;

void put_pixel(Observation& obs, int y, int x, Rgb c) {
  const int hw = obs.height * obs.width;
  obs.pixels[std::size_t(0 * hw + y * obs.width + x)] = c.r;
  obs.pixels[std::size_t(1 * hw + y * obs.width + x)] = c.g;
  obs.pixels[std::size_t(2 * hw + y * obs.width + x)] = c.b;
}

void fill_rect(Observation& obs, int y0, int x0, int h, int w, Rgb c) {
  for (int y = y0; y < y0 + h; ++y)
    for (int x = x0; x < x0 + w; ++x) put_pixel(obs, y, x, c);
}

}  // namespace

MiniGatherEnv MiniGatherEnv::from_map(const std::vector<std::string>& rows) {
  if (int(rows.size()) != kGridSize) throw ConfigError("from_map: expected 12 rows");
  MiniGatherEnv env;
  env.grid_.assign(std::size_t(kGridSize) * kGridSize, kFloor);
  bool agent_found = false;
  for (int y = 0; y < kGridSize; ++y) {
    if (int(rows[std::size_t(y)].size()) != kGridSize)
      throw ConfigError("from_map: expected 12 columns per row");
    for (int x = 0; x < kGridSize; ++x) {
      Tile t = kFloor;
      switch (rows[std::size_t(y)][std::size_t(x)]) {
        case '#': t = kWall; break;
        case '.': t = kFloor; break;
        case 'W': t = kWood; break;
        case 'S': t = kStone; break;
        case 'w': t = kWater; break;
        case 'G': t = kGoal; break;
        case 'A':
          env.agent_y_ = y;
          env.agent_x_ = x;
          agent_found = true;
          break;
        default: throw ConfigError("from_map: unknown tile character");
      }
      env.grid_[std::size_t(y * kGridSize + x)] = t;
    }
  }
  if (!agent_found) throw ConfigError("from_map: no agent position 'A'");
  env.ticks_ = 0;
  env.active_ = true;
  env.fixed_layout_ = true;
  std::fill(std::begin(env.unlocked_), std::end(env.unlocked_), false);
  return env;
}

Observation MiniGatherEnv::reset(std::uint64_t seed) {
  if (fixed_layout_) {
    // Tests drive fixed maps through from_map; reset would discard the map.
    throw ProtocolError("reset called on a fixed-layout environment");
  }
  Rng rng(seed ^ 0x51ed2700d7a21ull);
  grid_.assign(std::size_t(kGridSize) * kGridSize, kFloor);
  for (int i = 0; i < kGridSize; ++i) {
    grid_[std::size_t(i)] = kWall;
    grid_[std::size_t((kGridSize - 1) * kGridSize + i)] = kWall;
    grid_[std::size_t(i * kGridSize)] = kWall;
    grid_[std::size_t(i * kGridSize + kGridSize - 1)] = kWall;
  }
  std::vector<int> cells;
  for (int y = 1; y < kGridSize - 1; ++y)
    for (int x = 1; x < kGridSize - 1; ++x) cells.push_back(y * kGridSize + x);
  for (std::size_t i = cells.size(); i > 1; --i)
    std::swap(cells[i - 1], cells[std::size_t(rng.below(i))]);

  std::size_t k = 0;
  auto place = [&](Tile t, int count) {
    for (int i = 0; i < count; ++i) grid_[std::size_t(cells[k++])] = t;
  };
  place(kWood, 3);
  place(kStone, 2);
  place(kWater, 1);
  place(kGoal, 1);
  agent_y_ = cells[k] / kGridSize;
  agent_x_ = cells[k] % kGridSize;

  ticks_ = 0;
  active_ = true;
  std::fill(std::begin(unlocked_), std::end(unlocked_), false);
  return render();
}

void MiniGatherEnv::unlock(int idx, double& reward) {
  if (!unlocked_[idx]) {
    unlocked_[idx] = true;
    reward += 1.0;
  }
}

StepResult MiniGatherEnv::step(int action) {
  if (!active_) throw ProtocolError("step called on an inactive episode; call reset first");
  if (action < 0 || action >= action_count()) throw ProtocolError("action out of range");

  double reward = 0;
  int dy = 0, dx = 0;
  switch (action) {
    case 0: dy = -1; break;
    case 1: dy = 1; break;
    case 2: dx = -1; break;
    case 3: dx = 1; break;
    default: break;
  }
  if (dy != 0 || dx != 0) {
    int ny = agent_y_ + dy, nx = agent_x_ + dx;
    Tile t = grid_[std::size_t(ny * kGridSize + nx)];
    bool blocked = t == kWall || (t == kStone && !unlocked_[kAchWood]);
    if (!blocked) {
      agent_y_ = ny;
      agent_x_ = nx;
      if (t == kWood) {
        grid_[std::size_t(ny * kGridSize + nx)] = kFloor;
        unlock(kAchWood, reward);
      } else if (t == kStone) {
        grid_[std::size_t(ny * kGridSize + nx)] = kFloor;
        unlock(kAchStone, reward);
      } else if (t == kGoal) {
        unlock(kAchGoal, reward);
      }
    }
  } else if (action == 4) {
    if (grid_[std::size_t(agent_y_ * kGridSize + agent_x_)] == kWater)
      unlock(kAchWater, reward);
  }
  return finish_step(reward);
}

StepResult MiniGatherEnv::finish_step(double reward) {
  ++ticks_;
  bool all = unlocked_[0] && unlocked_[1] && unlocked_[2] && unlocked_[3];
  StepResult result;
  result.reward = reward;
  result.cont = (ticks_ >= kTimeLimit || all) ? 0 : 1;
  if (result.cont == 0) active_ = false;
  result.obs = render();
  auto names = achievement_names();
  for (int i = 0; i < 4; ++i)
    if (unlocked_[i]) result.achievements.push_back(names[std::size_t(i)]);
  return result;
}

Observation MiniGatherEnv::render() const {
  Observation obs;
  obs.height = kImageSize;
  obs.width = kImageSize;
  obs.channels = 3;
  obs.pixels.assign(obs.size(), 0);

  const int half = kViewCells / 2;
  for (int vy = 0; vy < kViewCells; ++vy) {
    for (int vx = 0; vx < kViewCells; ++vx) {
      int gy = agent_y_ + vy - half, gx = agent_x_ + vx - half;
      Rgb c = kTileColors[kWall];
      if (gy >= 0 && gy < kGridSize && gx >= 0 && gx < kGridSize)
        c = kTileColors[grid_[std::size_t(gy * kGridSize + gx)]];
      fill_rect(obs, vy * kCellPixels, 1 + vx * kCellPixels, kCellPixels, kCellPixels, c);
    }
  }
  // Agent marker, inset so the tile underneath stays visible.
  fill_rect(obs, half * kCellPixels + 1, 1 + half * kCellPixels + 1, kCellPixels - 2,
            kCellPixels - 2, kAgentColor);

  // HUD row 30: achievement indicators. Row 31: remaining-time bar.
  for (int i = 0; i < 4; ++i)
    fill_rect(obs, 30, i * 8, 1, 8, unlocked_[i] ? kHudColors[i] : kHudOff);
  int lit = (kTimeLimit - std::min(ticks_, kTimeLimit)) * kImageSize / kTimeLimit;
  fill_rect(obs, 31, 0, 1, kImageSize, kHudOff);
  if (lit > 0) fill_rect(obs, 31, 0, 1, lit, kTimeBar);
  return obs;
}

}  // namespace dcdp
