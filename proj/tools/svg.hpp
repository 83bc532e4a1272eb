#pragma once

#include <string>
#include <vector>

namespace nkcli {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<Series> series;
};

// Standalone SVG document.  Non-finite points, and non-positive ones on log
// axes, are dropped.
std::string render_svg(const Chart& c);

std::string xml_escape(const std::string& s);

}  // namespace nkcli
