#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dcdp/core.hpp"

namespace dcdp {

/// Raw image observation. Pixels are channel-major:
/// index = (channel * height + y) * width + x.
struct Observation {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  std::size_t size() const { return std::size_t(height) * width * channels; }
};

struct StepResult {
  Observation obs;
  double reward = 0;
  int cont = 1;  // 1 = episode continues, 0 = terminal
  std::vector<std::string> achievements;  // unlocked so far this episode
};

/// Environment protocol. One instance per thread; instances share nothing.
class Env {
 public:
  virtual ~Env() = default;
  virtual Observation reset(std::uint64_t seed) = 0;
  virtual StepResult step(int action) = 0;
  virtual int action_count() const = 0;
  virtual std::vector<std::string> achievement_names() const = 0;
  virtual int obs_height() const = 0;
  virtual int obs_width() const = 0;
  virtual int obs_channels() const = 0;
};

/// Per-achievement success rates over evaluation episodes, in percent.
struct AchievementTable {
  std::vector<std::string> names;
  std::vector<double> rates;  // each in [0, 100]
};

}  // namespace dcdp
