#pragma once

#include <string>
#include <vector>

namespace gatedbev {

struct Series {
  std::string label;
  std::vector<double> values;
};

// Polyline chart, x = index + 1.
std::string svg_line_chart(const std::string& title, const std::vector<Series>& series, const std::string& x_label,
                           const std::string& y_label);

// Grouped bars: one group per category, one bar per series.
std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& categories,
                          const std::vector<Series>& series, const std::string& y_label);

}  // namespace gatedbev
