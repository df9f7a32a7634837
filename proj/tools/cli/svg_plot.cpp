#include "cli/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "rulforge/error.hpp"

namespace rulforge::cli {

namespace {

constexpr double kPanelW = 420, kPanelH = 260;
constexpr double kLeft = 52, kRight = 16, kTop = 30, kBottom = 44;
constexpr const char* kPredColor = "#d62728";
constexpr const char* kActualColor = "#1f77b4";

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_curves_svg(const std::vector<CurvePanel>& panels) {
  if (panels.empty()) throw ValidationError("plot: no curves");
  const std::size_t cols = std::min<std::size_t>(panels.size(), 3);
  const std::size_t rows = (panels.size() + cols - 1) / cols;
  const double width = kPanelW * static_cast<double>(cols);
  const double height = kPanelH * static_cast<double>(rows);

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\""
      << num(height) << "\" viewBox=\"0 0 " << num(width) << ' ' << num(height) << "\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << num(width) << "\" height=\"" << num(height)
      << "\" fill=\"white\"/>\n";

  for (std::size_t i = 0; i < panels.size(); ++i) {
    const auto& p = panels[i];
    const auto& c = p.curve;
    if (c.cycles.empty() || c.predicted.size() != c.cycles.size() ||
        c.actual.size() != c.cycles.size()) {
      throw ValidationError("plot: curve '" + p.title + "' is empty or ragged");
    }
    const double ox = kPanelW * static_cast<double>(i % cols);
    const double oy = kPanelH * static_cast<double>(i / cols);
    const double x0 = ox + kLeft, x1 = ox + kPanelW - kRight;
    const double y0 = oy + kPanelH - kBottom, y1 = oy + kTop;

    const double cmin = *std::min_element(c.cycles.begin(), c.cycles.end());
    const double cmax = std::max(cmin + 1.0, static_cast<double>(*std::max_element(c.cycles.begin(), c.cycles.end())));
    double ymax = 0.0;
    for (double v : c.predicted) ymax = std::max(ymax, v);
    for (double v : c.actual) ymax = std::max(ymax, v);
    ymax = std::max(1.0, std::ceil(ymax / 25.0) * 25.0);

    auto sx = [&](double cycle) { return x0 + (cycle - cmin) / (cmax - cmin) * (x1 - x0); };
    auto sy = [&](double rul) { return y0 - rul / ymax * (y0 - y1); };

    svg << "<g id=\"panel" << i << "\">\n";
    svg << "<text x=\"" << num((x0 + x1) / 2) << "\" y=\"" << num(oy + 18)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
        << escape(p.title) << "</text>\n";
    svg << "<line x1=\"" << num(x0) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(x1)
        << "\" y2=\"" << num(y0) << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << num(x0) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(x0)
        << "\" y2=\"" << num(y1) << "\" stroke=\"black\"/>\n";
    const std::string font = "font-family=\"sans-serif\" font-size=\"10\"";
    svg << "<text x=\"" << num(x0) << "\" y=\"" << num(y0 + 14) << "\" text-anchor=\"middle\" "
        << font << ">" << num(cmin) << "</text>\n";
    svg << "<text x=\"" << num(x1) << "\" y=\"" << num(y0 + 14) << "\" text-anchor=\"middle\" "
        << font << ">" << num(cmax) << "</text>\n";
    svg << "<text x=\"" << num(x0 - 4) << "\" y=\"" << num(y0) << "\" text-anchor=\"end\" "
        << font << ">0</text>\n";
    svg << "<text x=\"" << num(x0 - 4) << "\" y=\"" << num(y1 + 4) << "\" text-anchor=\"end\" "
        << font << ">" << num(ymax) << "</text>\n";
    svg << "<text x=\"" << num((x0 + x1) / 2) << "\" y=\"" << num(y0 + 30)
        << "\" text-anchor=\"middle\" " << font << ">cycles</text>\n";
    svg << "<text x=\"" << num(ox + 14) << "\" y=\"" << num((y0 + y1) / 2)
        << "\" text-anchor=\"middle\" " << font << " transform=\"rotate(-90 " << num(ox + 14)
        << ' ' << num((y0 + y1) / 2) << ")\">RUL</text>\n";

    auto path = [&](const std::vector<double>& ys, const char* color, const char* cls) {
      svg << "<path class=\"" << cls << "\" fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"1.5\" d=\"";
      for (std::size_t k = 0; k < ys.size(); ++k) {
        svg << (k ? " L" : "M") << num(sx(c.cycles[k])) << ',' << num(sy(ys[k]));
      }
      svg << "\"/>\n";
    };
    path(c.actual, kActualColor, "actual");
    path(c.predicted, kPredColor, "predicted");

    const double lx = x1 - 110, ly = y1 + 4;
    svg << "<line x1=\"" << num(lx) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(lx + 16)
        << "\" y2=\"" << num(ly) << "\" stroke=\"" << kPredColor << "\" stroke-width=\"1.5\"/>\n";
    svg << "<text x=\"" << num(lx + 20) << "\" y=\"" << num(ly + 3) << "\" " << font
        << ">predicted</text>\n";
    svg << "<line x1=\"" << num(lx) << "\" y1=\"" << num(ly + 14) << "\" x2=\"" << num(lx + 16)
        << "\" y2=\"" << num(ly + 14) << "\" stroke=\"" << kActualColor
        << "\" stroke-width=\"1.5\"/>\n";
    svg << "<text x=\"" << num(lx + 20) << "\" y=\"" << num(ly + 17) << "\" " << font
        << ">actual</text>\n";
    svg << "</g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace rulforge::cli
