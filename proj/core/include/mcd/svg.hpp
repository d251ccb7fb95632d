#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mcd/env.hpp"

namespace mcd {

// Deterministic SVG writers for the report plots. Text output keeps the
// artifacts diffable.

// Heatmap with per-cell values printed; labels index both axes.
std::string svg_heatmap(const Eigen::MatrixXd& values, const std::vector<std::string>& labels,
                        const std::string& title);

// One horizontal band per row of `interval_rows`, segments colored by index;
// `row_titles` annotates each band. Interval bounds are 1-indexed, half-open.
struct TimelineRow {
  std::string title;
  std::vector<std::pair<int, int>> intervals;
};
std::string svg_timeline(const std::vector<TimelineRow>& rows, int length,
                         const std::string& title);

// Simple polyline chart of y(x).
std::string svg_curve(const std::vector<double>& xs, const std::vector<double>& ys,
                      const std::string& x_label, const std::string& y_label,
                      const std::string& title);

// Arena schematic: goals as circles, objects as squares, gripper as a cross.
// Several sketches can be overlaid with distinct opacity (first = strongest).
std::string svg_arena(const std::vector<ArenaSketch>& sketches,
                      const std::vector<std::string>& legend, double goal_radius,
                      const std::string& title);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace mcd
