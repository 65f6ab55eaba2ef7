#pragma once

#include <string>
#include <vector>

namespace relex {

struct RegretSeries {
  std::string label;
  std::vector<double> cumulative;  // indexed by episode - 1
};

// Minimal plot: one polyline per series, axes with a few ticks, legend.
std::string render_regret_svg(const std::vector<RegretSeries>& series, bool log_x);

}  // namespace relex
