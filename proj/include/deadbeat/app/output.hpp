#pragma once

// CSV and SVG writers for experiment output.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "deadbeat/errors.hpp"

namespace deadbeat::app {

/// Shortest-stable text for a double: 17 significant digits, round-trip exact.
inline std::string format_real(double v) { return fmt::format("{:.17g}", v); }

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}

  void header(const std::vector<std::string>& columns) { line(columns); }

  void row(const std::vector<double>& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) s += ',';
      s += format_real(values[i]);
    }
    out_ << s << '\n';
  }

  void line(const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) s += ',';
      s += cells[i];
    }
    out_ << s << '\n';
  }

  void comment(const std::string& text) { out_ << "# " << text << '\n'; }

 private:
  std::ostream& out_;
};

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct ChartOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  /// Values at or below zero are drawn at this floor on log axes.
  double log_floor = 1e-16;
};

/// Renders line charts as a standalone SVG document.
inline void write_line_chart(std::ostream& out, const std::vector<Series>& series, const ChartOptions& opts) {
  constexpr double W = 720, H = 440, left = 80, right = 20, top = 40, bottom = 60;
  auto tx = [&](double v) { return opts.log_x ? std::log10(std::max(v, opts.log_floor)) : v; };
  auto ty = [&](double v) { return opts.log_y ? std::log10(std::max(v, opts.log_floor)) : v; };

  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, tx(s.x[i]));
      xmax = std::max(xmax, tx(s.x[i]));
      ymin = std::min(ymin, ty(s.y[i]));
      ymax = std::max(ymax, ty(s.y[i]));
    }
  if (!(xmin < xmax)) { xmin -= 1; xmax += 1; }
  if (!(ymin < ymax)) { ymin -= 1; ymax += 1; }

  auto px = [&](double v) { return left + (tx(v) - xmin) / (xmax - xmin) * (W - left - right); };
  auto py = [&](double v) { return H - bottom - (ty(v) - ymin) / (ymax - ymin) * (H - top - bottom); };

  out << fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">)", W, H, W, H)
      << '\n';
  out << R"(<rect width="100%" height="100%" fill="white"/>)" << '\n';
  out << fmt::format(R"(<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>)", W / 2,
                     opts.title)
      << '\n';
  out << fmt::format(R"(<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>)", left, top,
                     W - left - right, H - top - bottom)
      << '\n';
  auto tick_label = [](double v, bool log) { return log ? fmt::format("1e{:.3g}", v) : fmt::format("{:.4g}", v); };
  for (int i = 0; i <= 4; ++i) {
    const double fx = xmin + (xmax - xmin) * i / 4.0;
    const double fy = ymin + (ymax - ymin) * i / 4.0;
    const double sx = left + (W - left - right) * i / 4.0;
    const double sy = H - bottom - (H - top - bottom) * i / 4.0;
    out << fmt::format(R"(<text x="{:.1f}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>)",
                       sx, H - bottom + 16, tick_label(fx, opts.log_x))
        << '\n';
    out << fmt::format(R"(<text x="{}" y="{:.1f}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>)",
                       left - 6, sy + 4, tick_label(fy, opts.log_y))
        << '\n';
  }
  out << fmt::format(R"(<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>)", W / 2,
                     H - 16, opts.x_label)
      << '\n';
  out << fmt::format(
             R"svg(<text x="18" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>)svg",
             H / 2, H / 2, opts.y_label)
      << '\n';

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"};
  for (std::size_t s = 0; s < series.size(); ++s) {
    std::string pts;
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      if (!std::isfinite(series[s].x[i]) || !std::isfinite(series[s].y[i])) continue;
      pts += fmt::format("{:.2f},{:.2f} ", px(series[s].x[i]), py(series[s].y[i]));
    }
    out << fmt::format(R"(<polyline fill="none" stroke="{}" stroke-width="1.2" points="{}"/>)", colors[s % 5], pts) << '\n';
    out << fmt::format(R"(<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{}">{}</text>)", left + 8,
                       top + 16 + 14 * static_cast<double>(s), colors[s % 5], series[s].label)
        << '\n';
  }
  out << "</svg>\n";
}

/// Opens a file for writing or throws IoError.
class IoError : public Error {
 public:
  using Error::Error;
};

inline std::ofstream open_output(const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  return f;
}

}  // namespace deadbeat::app
