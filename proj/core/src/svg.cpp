#include "mcd/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mcd/common.hpp"

namespace mcd {

namespace {

const char* kPalette[] = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#b07aa1",
                          "#76b7b2", "#edc948", "#ff9da7", "#9c755f", "#bab0ac"};
constexpr int kPaletteSize = 10;

std::string fmt(double v, int precision = 3) {
  std::ostringstream s;
  s.precision(precision);
  s << std::fixed << v;
  return s.str();
}

std::string escape(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string header(int w, int h) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
    << "\" viewBox=\"0 0 " << w << " " << h << "\">\n"
    << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  return s.str();
}

std::string heat_color(double v, double lo, double hi) {
  const double t = hi > lo ? std::clamp((v - lo) / (hi - lo), 0.0, 1.0) : 0.5;
  // white -> blue ramp
  const int r = static_cast<int>(255 - 180 * t);
  const int g = static_cast<int>(255 - 140 * t);
  const int b = 255;
  std::ostringstream s;
  s << "rgb(" << r << "," << g << "," << b << ")";
  return s.str();
}

}  // namespace

std::string svg_heatmap(const Eigen::MatrixXd& values, const std::vector<std::string>& labels,
                        const std::string& title) {
  const int n = static_cast<int>(values.rows());
  const int cell = 64;
  const int margin = 110;
  const int w = margin + n * cell + 20;
  const int h = margin + n * cell + 40;
  std::ostringstream s;
  s << header(w, h);
  s << "<text x=\"10\" y=\"20\" font-size=\"14\">" << escape(title) << "</text>\n";
  const double lo = values.minCoeff();
  const double hi = values.maxCoeff();
  for (int i = 0; i < n; ++i) {
    s << "<text x=\"" << (margin - 8) << "\" y=\"" << (margin + i * cell + cell / 2 + 4)
      << "\" font-size=\"11\" text-anchor=\"end\">" << escape(labels[static_cast<std::size_t>(i)])
      << "</text>\n";
    s << "<text x=\"" << (margin + i * cell + cell / 2) << "\" y=\"" << (margin - 8)
      << "\" font-size=\"11\" text-anchor=\"middle\">"
      << escape(labels[static_cast<std::size_t>(i)]) << "</text>\n";
    for (int j = 0; j < static_cast<int>(values.cols()); ++j) {
      const double v = values(i, j);
      s << "<rect x=\"" << (margin + j * cell) << "\" y=\"" << (margin + i * cell)
        << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\""
        << heat_color(v, lo, hi) << "\" stroke=\"#999\"/>\n";
      s << "<text x=\"" << (margin + j * cell + cell / 2) << "\" y=\""
        << (margin + i * cell + cell / 2 + 4) << "\" font-size=\"11\" text-anchor=\"middle\">"
        << fmt(v) << "</text>\n";
    }
  }
  s << "</svg>\n";
  return s.str();
}

std::string svg_timeline(const std::vector<TimelineRow>& rows, int length,
                         const std::string& title) {
  const int band = 26;
  const int gap = 10;
  const int margin_left = 150;
  const int plot_w = 720;
  const int w = margin_left + plot_w + 20;
  const int h = 50 + static_cast<int>(rows.size()) * (band + gap) + 20;
  std::ostringstream s;
  s << header(w, h);
  s << "<text x=\"10\" y=\"20\" font-size=\"14\">" << escape(title) << "</text>\n";
  const double scale = static_cast<double>(plot_w) / std::max(1, length);
  int y = 40;
  for (const auto& row : rows) {
    s << "<text x=\"" << (margin_left - 8) << "\" y=\"" << (y + band / 2 + 4)
      << "\" font-size=\"11\" text-anchor=\"end\">" << escape(row.title) << "</text>\n";
    int color = 0;
    for (const auto& [start, end] : row.intervals) {
      const double x0 = margin_left + (start - 1) * scale;
      const double x1 = margin_left + (end - 1) * scale;
      s << "<rect x=\"" << fmt(x0, 1) << "\" y=\"" << y << "\" width=\""
        << fmt(std::max(1.0, x1 - x0), 1) << "\" height=\"" << band << "\" fill=\""
        << kPalette[color % kPaletteSize] << "\" stroke=\"white\"/>\n";
      color += 1;
    }
    y += band + gap;
  }
  s << "</svg>\n";
  return s.str();
}

std::string svg_curve(const std::vector<double>& xs, const std::vector<double>& ys,
                      const std::string& x_label, const std::string& y_label,
                      const std::string& title) {
  const int w = 640, h = 420, ml = 70, mb = 50, mt = 40, mr = 20;
  std::ostringstream s;
  s << header(w, h);
  s << "<text x=\"10\" y=\"20\" font-size=\"14\">" << escape(title) << "</text>\n";
  if (xs.empty()) {
    s << "</svg>\n";
    return s.str();
  }
  const double x_lo = *std::min_element(xs.begin(), xs.end());
  const double x_hi = *std::max_element(xs.begin(), xs.end());
  const double y_lo = std::min(0.0, *std::min_element(ys.begin(), ys.end()));
  const double y_hi = *std::max_element(ys.begin(), ys.end());
  auto px = [&](double x) {
    return ml + (x_hi > x_lo ? (x - x_lo) / (x_hi - x_lo) : 0.5) * (w - ml - mr);
  };
  auto py = [&](double yv) {
    return h - mb - (y_hi > y_lo ? (yv - y_lo) / (y_hi - y_lo) : 0.5) * (h - mb - mt);
  };
  s << "<line x1=\"" << ml << "\" y1=\"" << (h - mb) << "\" x2=\"" << (w - mr) << "\" y2=\""
    << (h - mb) << "\" stroke=\"#333\"/>\n";
  s << "<line x1=\"" << ml << "\" y1=\"" << (h - mb) << "\" x2=\"" << ml << "\" y2=\"" << mt
    << "\" stroke=\"#333\"/>\n";
  s << "<text x=\"" << (w / 2) << "\" y=\"" << (h - 12) << "\" font-size=\"12\" "
    << "text-anchor=\"middle\">" << escape(x_label) << "</text>\n";
  s << "<text x=\"18\" y=\"" << (h / 2) << "\" font-size=\"12\" text-anchor=\"middle\" "
    << "transform=\"rotate(-90 18 " << (h / 2) << ")\">" << escape(y_label) << "</text>\n";
  s << "<polyline fill=\"none\" stroke=\"" << kPalette[0] << "\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    s << fmt(px(xs[i]), 1) << "," << fmt(py(ys[i]), 1) << " ";
  }
  s << "\"/>\n";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    s << "<circle cx=\"" << fmt(px(xs[i]), 1) << "\" cy=\"" << fmt(py(ys[i]), 1)
      << "\" r=\"3\" fill=\"" << kPalette[3] << "\"/>\n";
  }
  // axis extremes
  s << "<text x=\"" << ml << "\" y=\"" << (h - mb + 16) << "\" font-size=\"10\">" << fmt(x_lo)
    << "</text>\n";
  s << "<text x=\"" << (w - mr) << "\" y=\"" << (h - mb + 16)
    << "\" font-size=\"10\" text-anchor=\"end\">" << fmt(x_hi) << "</text>\n";
  s << "<text x=\"" << (ml - 6) << "\" y=\"" << (h - mb) << "\" font-size=\"10\" "
    << "text-anchor=\"end\">" << fmt(y_lo) << "</text>\n";
  s << "<text x=\"" << (ml - 6) << "\" y=\"" << (mt + 4) << "\" font-size=\"10\" "
    << "text-anchor=\"end\">" << fmt(y_hi) << "</text>\n";
  s << "</svg>\n";
  return s.str();
}

std::string svg_arena(const std::vector<ArenaSketch>& sketches,
                      const std::vector<std::string>& legend, double goal_radius,
                      const std::string& title) {
  const int size = 360, margin = 30;
  const int w = size + 2 * margin + 160;
  const int h = size + 2 * margin + 20;
  std::ostringstream s;
  s << header(w, h);
  s << "<text x=\"10\" y=\"20\" font-size=\"14\">" << escape(title) << "</text>\n";
  s << "<rect x=\"" << margin << "\" y=\"" << (margin + 10) << "\" width=\"" << size
    << "\" height=\"" << size << "\" fill=\"#fafafa\" stroke=\"#333\"/>\n";
  auto px = [&](double x) { return margin + x * size; };
  auto py = [&](double yv) { return margin + 10 + (1.0 - yv) * size; };

  for (std::size_t k = 0; k < sketches.size(); ++k) {
    const auto& sk = sketches[k];
    const double opacity = k == 0 ? 0.95 : 0.45;
    const char* color = kPalette[k % kPaletteSize];
    for (std::size_t j = 0; j < sk.goals.size(); ++j) {
      s << "<circle cx=\"" << fmt(px(sk.goals[j][0]), 1) << "\" cy=\"" << fmt(py(sk.goals[j][1]), 1)
        << "\" r=\"" << fmt(goal_radius * size, 1) << "\" fill=\"none\" stroke=\"" << color
        << "\" stroke-dasharray=\"4 3\" opacity=\"" << fmt(opacity, 2) << "\"/>\n";
    }
    for (std::size_t j = 0; j < sk.objects.size(); ++j) {
      s << "<rect x=\"" << fmt(px(sk.objects[j][0]) - 6, 1) << "\" y=\""
        << fmt(py(sk.objects[j][1]) - 6, 1) << "\" width=\"12\" height=\"12\" fill=\"" << color
        << "\" opacity=\"" << fmt(opacity, 2) << "\"/>\n";
    }
    s << "<path d=\"M " << fmt(px(sk.gx) - 7, 1) << " " << fmt(py(sk.gy), 1) << " L "
      << fmt(px(sk.gx) + 7, 1) << " " << fmt(py(sk.gy), 1) << " M " << fmt(px(sk.gx), 1) << " "
      << fmt(py(sk.gy) - 7, 1) << " L " << fmt(px(sk.gx), 1) << " " << fmt(py(sk.gy) + 7, 1)
      << "\" stroke=\"" << color << "\" stroke-width=\"2\" opacity=\"" << fmt(opacity, 2)
      << "\"/>\n";
    if (k < legend.size()) {
      s << "<rect x=\"" << (size + 2 * margin + 10) << "\" y=\""
        << (margin + 12 + static_cast<int>(k) * 20) << "\" width=\"12\" height=\"12\" fill=\""
        << color << "\"/>\n";
      s << "<text x=\"" << (size + 2 * margin + 28) << "\" y=\""
        << (margin + 22 + static_cast<int>(k) * 20) << "\" font-size=\"11\">"
        << escape(legend[k]) << "</text>\n";
    }
  }
  s << "</svg>\n";
  return s.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << content;
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace mcd
