#pragma once

// Static SVG control chart of the 0-4 consensus anomaly score.

#include <algorithm>
#include <cstddef>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vscout/detectors.hpp"

namespace vscout {

struct ChartData {
  std::vector<double> score;
  Flags flagged;
  std::optional<std::size_t> tau_star;
};

inline constexpr double kConsensusLine = 2.0;

inline std::string render_control_chart(const ChartData& data) {
  constexpr double width = 960.0;
  constexpr double height = 320.0;
  constexpr double left = 50.0;
  constexpr double right = 20.0;
  constexpr double top = 20.0;
  constexpr double bottom = 40.0;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  const std::size_t n = data.score.size();
  auto x_of = [&](double index) {
    return left + (n > 1 ? (index - 1.0) / static_cast<double>(n - 1) : 0.5) * plot_w;
  };
  auto y_of = [&](double s) { return top + plot_h * (1.0 - std::clamp(s, 0.0, 4.0) / 4.0); };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
      << "<title>VSCOUT control chart</title>\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";

  svg << "<g class=\"axes\" stroke=\"black\" stroke-width=\"1\">\n"
      << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h << "\"/>\n"
      << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\""
      << top + plot_h << "\"/>\n"
      << "</g>\n";
  svg << "<g class=\"labels\" font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int tick = 0; tick <= 4; ++tick) {
    svg << "<text x=\"" << left - 8 << "\" y=\"" << num(y_of(tick) + 4) << "\" text-anchor=\"end\">" << tick
        << "</text>\n";
  }
  svg << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 8
      << "\" text-anchor=\"middle\">observation</text>\n"
      << "</g>\n";

  svg << "<line class=\"threshold\" x1=\"" << left << "\" y1=\"" << num(y_of(kConsensusLine)) << "\" x2=\""
      << left + plot_w << "\" y2=\"" << num(y_of(kConsensusLine))
      << "\" stroke=\"firebrick\" stroke-dasharray=\"6 4\"/>\n";

  if (data.tau_star) {
    const double xs = x_of(static_cast<double>(*data.tau_star));
    svg << "<line class=\"tau-star\" x1=\"" << num(xs) << "\" y1=\"" << top << "\" x2=\"" << num(xs) << "\" y2=\""
        << top + plot_h << "\" stroke=\"darkorange\" stroke-width=\"1.5\"/>\n";
  }

  if (n > 0) {
    svg << "<polyline class=\"score\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"1\" points=\"";
    for (std::size_t i = 0; i < n; ++i) {
      svg << (i ? " " : "") << num(x_of(static_cast<double>(i + 1))) << ',' << num(y_of(data.score[i]));
    }
    svg << "\"/>\n";
  }

  svg << "<g class=\"flags\" fill=\"crimson\">\n";
  for (std::size_t i = 0; i < n && i < data.flagged.size(); ++i) {
    if (!data.flagged[i]) continue;
    svg << "<circle class=\"flag\" cx=\"" << num(x_of(static_cast<double>(i + 1))) << "\" cy=\""
        << num(y_of(data.score[i])) << "\" r=\"3\"/>\n";
  }
  svg << "</g>\n</svg>\n";
  return svg.str();
}

}  // namespace vscout
