// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0

#include "sgpseg/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sgpseg/check.hpp"

namespace sgpseg {

namespace {

const char* kSeriesColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

struct Range {
  double lo = 0.0;
  double hi = 1.0;
};

Range nice_range(double lo, double hi) {
  if (!(std::isfinite(lo) && std::isfinite(hi)) || lo > hi) return {0.0, 1.0};
  if (lo == hi) {
    double pad = lo == 0.0 ? 1.0 : std::fabs(lo) * 0.1;
    return {lo - pad, hi + pad};
  }
  double pad = (hi - lo) * 0.05;
  return {lo - pad, hi + pad};
}

}  // namespace

void write_line_svg(const std::string& path, const std::string& title,
                    const std::string& x_label, const std::string& y_label,
                    const std::vector<LineSeries>& series) {
  const int width = 640;
  const int height = 400;
  const int ml = 64, mr = 20, mt = 40, mb = 48;
  const double pw = width - ml - mr;
  const double ph = height - mt - mb;

  double xlo = 0, xhi = 1, ylo = 0, yhi = 1;
  bool first = true;
  for (const LineSeries& s : series) {
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (first) {
        xlo = xhi = s.x[i];
        ylo = yhi = s.y[i];
        first = false;
      }
      xlo = std::min(xlo, s.x[i]);
      xhi = std::max(xhi, s.x[i]);
      ylo = std::min(ylo, s.y[i]);
      yhi = std::max(yhi, s.y[i]);
    }
  }
  Range xr = nice_range(xlo, xhi);
  Range yr = nice_range(ylo, yhi);
  auto sx = [&](double v) { return ml + (v - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto sy = [&](double v) { return mt + ph - (v - yr.lo) / (yr.hi - yr.lo) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
    << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" "
    << "font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n";

  // Axes and ticks.
  o << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    double fy = yr.lo + (yr.hi - yr.lo) * t / 4.0;
    double fx = xr.lo + (xr.hi - xr.lo) * t / 4.0;
    o << "<line x1=\"" << ml << "\" y1=\"" << sy(fy) << "\" x2=\"" << ml + pw << "\" y2=\""
      << sy(fy) << "\" stroke=\"#ddd\"/>\n";
    o << "<text x=\"" << ml - 6 << "\" y=\"" << sy(fy) + 4
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(fy)
      << "</text>\n";
    o << "<text x=\"" << sx(fx) << "\" y=\"" << mt + ph + 16
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(fx)
      << "</text>\n";
  }
  o << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 10
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << x_label
    << "</text>\n";
  o << "<text x=\"16\" y=\"" << mt + ph / 2
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
    << "transform=\"rotate(-90 16 " << mt + ph / 2 << ")\">" << y_label << "</text>\n";

  int color = 0;
  for (const LineSeries& s : series) {
    if (s.x.empty()) continue;
    o << "<polyline fill=\"none\" stroke=\"" << kSeriesColors[color % 5]
      << "\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < s.x.size(); ++i) {
      o << fmt(sx(s.x[i])) << "," << fmt(sy(s.y[i])) << " ";
    }
    o << "\"/>\n";
    o << "<text x=\"" << ml + 8 << "\" y=\"" << mt + 16 + 14 * color
      << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << kSeriesColors[color % 5]
      << "\">" << s.label << "</text>\n";
    ++color;
  }
  o << "</svg>\n";

  std::ofstream out(path, std::ios::trunc);
  SGPSEG_CHECK(out.good(), "cannot open '" << path << "' for writing");
  out << o.str();
}

void write_bar_panels_svg(const std::string& path, const std::string& title,
                          const std::vector<BarPanel>& panels) {
  SGPSEG_CHECK(!panels.empty(), "bar chart needs at least one panel");
  const int panel_w = 240;
  const int height = 360;
  const int width = panel_w * static_cast<int>(panels.size());
  const int ml = 48, mr = 12, mt = 56, mb = 56;

  double vmax = 0.0;
  for (const BarPanel& p : panels) {
    for (const auto& [label, v] : p.bars) vmax = std::max(vmax, v);
  }
  if (vmax <= 0.0) vmax = 1.0;
  vmax *= 1.1;

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
    << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" "
    << "font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n";

  for (size_t pi = 0; pi < panels.size(); ++pi) {
    const BarPanel& panel = panels[pi];
    const double x0 = static_cast<double>(pi) * panel_w + ml;
    const double pw = panel_w - ml - mr;
    const double ph = height - mt - mb;
    o << "<text x=\"" << x0 + pw / 2 << "\" y=\"" << mt - 10
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
      << panel.title << "</text>\n";
    o << "<rect x=\"" << x0 << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int t = 0; t <= 4; ++t) {
      double v = vmax * t / 4.0;
      double y = mt + ph - v / vmax * ph;
      o << "<line x1=\"" << x0 << "\" y1=\"" << y << "\" x2=\"" << x0 + pw << "\" y2=\"" << y
        << "\" stroke=\"#eee\"/>\n";
      if (pi == 0) {
        o << "<text x=\"" << x0 - 6 << "\" y=\"" << y + 4
          << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(v)
          << "</text>\n";
      }
    }
    const size_t n = panel.bars.size();
    if (n == 0) continue;
    const double slot = pw / static_cast<double>(n);
    for (size_t b = 0; b < n; ++b) {
      const auto& [label, v] = panel.bars[b];
      double bw = slot * 0.6;
      double bx = x0 + slot * static_cast<double>(b) + slot * 0.2;
      double bh = v / vmax * ph;
      o << "<rect x=\"" << fmt(bx) << "\" y=\"" << fmt(mt + ph - bh) << "\" width=\""
        << fmt(bw) << "\" height=\"" << fmt(bh) << "\" fill=\"" << kSeriesColors[pi % 5]
        << "\" fill-opacity=\"0.8\"/>\n";
      o << "<text x=\"" << fmt(bx + bw / 2) << "\" y=\"" << mt + ph + 14
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << label
        << "</text>\n";
      o << "<text x=\"" << fmt(bx + bw / 2) << "\" y=\"" << fmt(mt + ph - bh - 4)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"9\">" << fmt(v)
        << "</text>\n";
    }
  }
  o << "</svg>\n";

  std::ofstream out(path, std::ios::trunc);
  SGPSEG_CHECK(out.good(), "cannot open '" << path << "' for writing");
  out << o.str();
}

}  // namespace sgpseg
