#pragma once

#include <cmath>
#include <sstream>

#include "dcdp/env.hpp"

namespace dcdp {

/// Crafter-style aggregate score: S = exp(mean_i ln(1 + s_i)) - 1 with the
/// s_i in percent. Unlocking a rare achievement moves S more than polishing a
/// mastered one.
inline double crafter_score(const std::vector<double>& rates_percent) {
  if (rates_percent.empty()) throw ConfigError("crafter_score: empty achievement table");
  double acc = 0;
  for (double s : rates_percent) {
    if (!(s >= 0.0 && s <= 100.0)) {
      std::ostringstream msg;
      msg << "crafter_score: rate " << s << " outside [0, 100]";
      throw ConfigError(msg.str());
    }
    acc += std::log1p(s);
  }
  return std::expm1(acc / double(rates_percent.size()));
}

inline double crafter_score(const AchievementTable& table) { return crafter_score(table.rates); }

}  // namespace dcdp
