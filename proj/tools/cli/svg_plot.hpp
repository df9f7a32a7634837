#pragma once

#include <string>
#include <vector>

#include "rulforge/evaluate.hpp"

namespace rulforge::cli {

struct CurvePanel {
  std::string title;
  CurveRecord curve;
};

/// One panel per curve, predicted RUL in red and actual RUL in blue, cycles
/// on the x axis. Each panel holds exactly two <path> elements; axes and
/// legend use <line>/<text>. Output depends only on the input values.
std::string render_curves_svg(const std::vector<CurvePanel>& panels);

}  // namespace rulforge::cli
