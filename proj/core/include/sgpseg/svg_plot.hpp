// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal static SVG charts: line plots for training curves and grouped bar
// panels for the ablation figure. No interactivity, no dependencies.

#pragma once

#include <string>
#include <utility>
#include <vector>

namespace sgpseg {

struct LineSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

void write_line_svg(const std::string& path, const std::string& title,
                    const std::string& x_label, const std::string& y_label,
                    const std::vector<LineSeries>& series);

struct BarPanel {
  std::string title;
  std::vector<std::pair<std::string, double>> bars;  // (label, value)
};

void write_bar_panels_svg(const std::string& path, const std::string& title,
                          const std::vector<BarPanel>& panels);

}  // namespace sgpseg
