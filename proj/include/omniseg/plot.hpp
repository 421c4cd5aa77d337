#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "omniseg/ablate.hpp"
#include "omniseg/trainer.hpp"
#include "omniseg/util.hpp"

namespace omniseg {

// ---------------------------------------------------------------------------
// Plain-SVG charts: a metric-vs-fraction curve per mode from the ablation
// table, and loss/metric training curves from a metrics log. Pure string
// transformations; one <polyline> per data series (axes are <line>s).
// ---------------------------------------------------------------------------

struct PlotSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;  // sorted by x by the caller
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      cells.emplace_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return cells;
}

inline double csv_double(const std::string& cell, const std::string& context) {
  double v = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size()) {
    throw FormatError("bad numeric cell '" + cell + "' in " + context);
  }
  return v;
}

/// Rows of a CSV body, header validated against `expected_header`.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text,
                                                       const std::string& expected_header,
                                                       const std::string& context) {
  std::vector<std::vector<std::string>> rows;
  std::size_t start = 0;
  bool saw_header = false;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    start = end + 1;
    if (line.empty()) continue;
    if (!saw_header) {
      if (line != expected_header) {
        throw FormatError(context + ": unexpected header '" + line + "'");
      }
      saw_header = true;
      continue;
    }
    auto cells = split_csv_line(line);
    if (cells.size() != split_csv_line(expected_header).size()) {
      throw FormatError(context + ": row has wrong cell count: '" + line + "'");
    }
    rows.push_back(std::move(cells));
  }
  if (!saw_header) throw FormatError(context + ": empty file");
  return rows;
}

inline std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

}  // namespace detail

/// Generic line chart. Layout: plot area on the left, legend strip on the
/// right. The y range always starts at 0.
inline std::string line_chart_svg(const std::string& title, const std::string& x_label,
                                  const std::string& y_label,
                                  const std::vector<PlotSeries>& series) {
  if (series.empty()) throw std::invalid_argument("line_chart_svg: no series");
  double x_min = 0.0, x_max = 0.0, y_max = 0.0;
  bool any = false;
  for (const PlotSeries& s : series) {
    for (const auto& [x, y] : s.points) {
      if (!any) {
        x_min = x_max = x;
        any = true;
      }
      x_min = std::min(x_min, x);
      x_max = std::max(x_max, x);
      y_max = std::max(y_max, y);
    }
  }
  if (!any) throw std::invalid_argument("line_chart_svg: no data points");
  if (y_max <= 0.0) y_max = 1.0;
  y_max *= 1.05;

  const double width = 680, height = 420;
  const double ml = 70, mr = 170, mt = 48, mb = 56;
  const double pw = width - ml - mr, ph = height - mt - mb;
  auto sx = [&](double x) {
    return x_max > x_min ? ml + (x - x_min) / (x_max - x_min) * pw : ml + pw / 2;
  };
  auto sy = [&](double y) { return mt + (1.0 - y / y_max) * ph; };

  static const char* kPalette[] = {"#d62728", "#1f77b4", "#2ca02c",
                                   "#9467bd", "#ff7f0e", "#8c564b"};
  const int n_colors = int(sizeof kPalette / sizeof kPalette[0]);

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::px(width) +
         "\" height=\"" + detail::px(height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + detail::px(ml) + "\" y=\"24\" font-size=\"15\">" + title + "</text>\n";
  // axes
  svg += "<line x1=\"" + detail::px(ml) + "\" y1=\"" + detail::px(mt + ph) + "\" x2=\"" +
         detail::px(ml + pw) + "\" y2=\"" + detail::px(mt + ph) +
         "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + detail::px(ml) + "\" y1=\"" + detail::px(mt) + "\" x2=\"" +
         detail::px(ml) + "\" y2=\"" + detail::px(mt + ph) + "\" stroke=\"black\"/>\n";
  svg += "<text x=\"" + detail::px(ml + pw / 2) + "\" y=\"" + detail::px(height - 14) +
         "\" text-anchor=\"middle\">" + x_label + "</text>\n";
  svg += "<text x=\"18\" y=\"" + detail::px(mt + ph / 2) + "\" transform=\"rotate(-90 18 " +
         detail::px(mt + ph / 2) + ")\" text-anchor=\"middle\">" + y_label + "</text>\n";
  // ticks: three per axis
  for (const double f : {0.0, 0.5, 1.0}) {
    const double xv = x_min + (x_max - x_min) * f;
    const double yv = y_max * f;
    svg += "<text x=\"" + detail::px(sx(xv)) + "\" y=\"" + detail::px(mt + ph + 18) +
           "\" text-anchor=\"middle\">" + detail::tick_label(xv) + "</text>\n";
    svg += "<text x=\"" + detail::px(ml - 8) + "\" y=\"" + detail::px(sy(yv) + 4) +
           "\" text-anchor=\"end\">" + detail::tick_label(yv) + "</text>\n";
  }
  // series + legend
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % n_colors];
    std::string pts;
    for (const auto& [x, y] : series[i].points) {
      pts += detail::px(sx(x)) + "," + detail::px(sy(std::max(0.0, y))) + " ";
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    const double ly = mt + 16.0 * double(i);
    svg += "<rect x=\"" + detail::px(ml + pw + 16) + "\" y=\"" + detail::px(ly) +
           "\" width=\"10\" height=\"10\" fill=\"" + color + "\"/>\n";
    svg += "<text x=\"" + detail::px(ml + pw + 32) + "\" y=\"" + detail::px(ly + 9) + "\">" +
           series[i].name + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

/// Ablation table -> one mIoU-vs-fraction polyline per mode. Aggregate rows
/// are preferred; with no aggregates, per-seed rows are averaged here.
inline std::string ablation_curve_svg(const std::string& table_csv) {
  const auto rows = detail::parse_csv(table_csv, ablation_csv_header(), "ablation table");
  if (rows.empty()) throw FormatError("ablation table: no data rows");
  // mode -> fraction -> (sum, n); aggregates win over per-seed rows
  std::map<std::string, std::map<double, std::pair<double, int>>> agg, per_seed;
  for (const auto& cells : rows) {
    const std::string& mode = cells[0];
    const double fraction = detail::csv_double(cells[1], "ablation table fraction");
    const double miou = detail::csv_double(cells[3], "ablation table miou");
    auto& bucket = (cells[2] == "agg" ? agg : per_seed)[mode][fraction];
    bucket.first += miou;
    bucket.second += 1;
  }
  const auto& source = agg.empty() ? per_seed : agg;
  std::vector<PlotSeries> series;
  const char* canon[] = {"fully", "omni_none", "omni_point", "omni_box"};
  auto add_series = [&](const std::string& mode) {
    const auto it = source.find(mode);
    if (it == source.end()) return;
    PlotSeries s;
    s.name = mode;
    for (const auto& [fraction, sum_n] : it->second) {
      s.points.emplace_back(fraction, sum_n.first / double(sum_n.second));
    }
    series.push_back(std::move(s));
  };
  for (const char* mode : canon) add_series(mode);
  for (const auto& [mode, unused] : source) {  // non-canonical names, if any
    (void)unused;
    bool seen = false;
    for (const PlotSeries& s : series) seen = seen || s.name == mode;
    if (!seen) add_series(mode);
  }
  return line_chart_svg("test mIoU vs labeled fraction", "labeled fraction", "mIoU", series);
}

/// Metrics log -> l_sup / l_omni curves plus val_miou where present.
inline std::string training_curve_svg(const std::string& metrics_csv_text) {
  const auto rows =
      detail::parse_csv(metrics_csv_text, metrics_csv_header(), "metrics log");
  if (rows.empty()) throw FormatError("metrics log: no data rows");
  PlotSeries l_sup{"l_sup", {}}, l_omni{"l_omni", {}}, val{"val_miou", {}};
  for (const auto& cells : rows) {
    const double step = detail::csv_double(cells[0], "metrics log step");
    l_sup.points.emplace_back(step, detail::csv_double(cells[1], "metrics log l_sup"));
    l_omni.points.emplace_back(step, detail::csv_double(cells[2], "metrics log l_omni"));
    if (!cells[4].empty()) {
      val.points.emplace_back(step, detail::csv_double(cells[4], "metrics log val_miou"));
    }
  }
  std::vector<PlotSeries> series{std::move(l_sup), std::move(l_omni)};
  if (!val.points.empty()) series.push_back(std::move(val));
  return line_chart_svg("training curves", "step", "loss / val_miou", series);
}

}  // namespace omniseg
