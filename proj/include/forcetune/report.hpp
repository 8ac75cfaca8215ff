#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "forcetune/io.hpp"

namespace forcetune {

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

}  // namespace detail

// Best-so-far convergence plot: one polyline per run, legend from run labels.
inline std::string render_convergence_svg(const std::vector<LoadedRun>& runs) {
  static constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                             "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};
  const double width = 720, height = 440;
  const double left = 70, right = 180, top = 30, bottom = 50;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;

  std::size_t max_windows = 1;
  double y_max = 0.0;
  for (const auto& r : runs) {
    max_windows = std::max(max_windows, r.best_so_far.size());
    for (double v : r.best_so_far) y_max = std::max(y_max, v);
  }
  if (y_max <= 0.0) y_max = 1.0;
  y_max *= 1.05;

  auto x_of = [&](std::size_t i) {
    if (max_windows == 1) return left + plot_w / 2.0;
    return left + plot_w * static_cast<double>(i) / static_cast<double>(max_windows - 1);
  };
  auto y_of = [&](double v) { return top + plot_h * (1.0 - v / y_max); };

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::fmt("%g", width) +
         "\" height=\"" + detail::fmt("%g", height) + "\" viewBox=\"0 0 " +
         detail::fmt("%g", width) + " " + detail::fmt("%g", height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  // Axes.
  svg += "<line x1=\"" + detail::fmt("%g", left) + "\" y1=\"" + detail::fmt("%g", top + plot_h) +
         "\" x2=\"" + detail::fmt("%g", left + plot_w) + "\" y2=\"" +
         detail::fmt("%g", top + plot_h) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + detail::fmt("%g", left) + "\" y1=\"" + detail::fmt("%g", top) +
         "\" x2=\"" + detail::fmt("%g", left) + "\" y2=\"" + detail::fmt("%g", top + plot_h) +
         "\" stroke=\"black\"/>\n";
  // Ticks.
  for (int t = 0; t <= 4; ++t) {
    double v = y_max * t / 4.0;
    double y = y_of(v);
    svg += "<line x1=\"" + detail::fmt("%g", left - 4) + "\" y1=\"" + detail::fmt("%g", y) +
           "\" x2=\"" + detail::fmt("%g", left) + "\" y2=\"" + detail::fmt("%g", y) +
           "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + detail::fmt("%g", left - 8) + "\" y=\"" + detail::fmt("%g", y + 4) +
           "\" text-anchor=\"end\" font-size=\"11\">" + detail::fmt("%.3g", v) + "</text>\n";
  }
  for (std::size_t t = 1; t <= max_windows; t += std::max<std::size_t>(1, max_windows / 6)) {
    double x = x_of(t - 1);
    svg += "<line x1=\"" + detail::fmt("%g", x) + "\" y1=\"" + detail::fmt("%g", top + plot_h) +
           "\" x2=\"" + detail::fmt("%g", x) + "\" y2=\"" +
           detail::fmt("%g", top + plot_h + 4) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + detail::fmt("%g", x) + "\" y=\"" +
           detail::fmt("%g", top + plot_h + 18) + "\" text-anchor=\"middle\" font-size=\"11\">" +
           std::to_string(t) + "</text>\n";
  }
  svg += "<text x=\"" + detail::fmt("%g", left + plot_w / 2) + "\" y=\"" +
         detail::fmt("%g", height - 12) +
         "\" text-anchor=\"middle\" font-size=\"12\">iteration</text>\n";
  svg += "<text x=\"18\" y=\"" + detail::fmt("%g", top + plot_h / 2) +
         "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 18 " +
         detail::fmt("%g", top + plot_h / 2) + ")\">best objective</text>\n";

  for (std::size_t r = 0; r < runs.size(); ++r) {
    const char* color = kPalette[r % (sizeof(kPalette) / sizeof(kPalette[0]))];
    std::string points;
    for (std::size_t i = 0; i < runs[r].best_so_far.size(); ++i) {
      points += detail::fmt("%.2f", x_of(i)) + "," + detail::fmt("%.2f", y_of(runs[r].best_so_far[i]));
      if (i + 1 < runs[r].best_so_far.size()) points += " ";
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
    double ly = top + 16.0 * static_cast<double>(r);
    svg += "<line x1=\"" + detail::fmt("%g", left + plot_w + 10) + "\" y1=\"" +
           detail::fmt("%g", ly) + "\" x2=\"" + detail::fmt("%g", left + plot_w + 30) +
           "\" y2=\"" + detail::fmt("%g", ly) + "\" stroke=\"" + color +
           "\" stroke-width=\"1.5\"/>\n";
    svg += "<text x=\"" + detail::fmt("%g", left + plot_w + 34) + "\" y=\"" +
           detail::fmt("%g", ly + 4) + "\" font-size=\"11\">" + detail::xml_escape(runs[r].label) +
           "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

// Table-I-shaped comparison: first-window objective vs best objective per run.
inline std::string render_before_after_table(const std::vector<LoadedRun>& runs) {
  std::string out;
  out += "run                              ref_n    before       after        change_pct\n";
  for (const auto& r : runs) {
    double before = r.first_objective();
    double after = r.best_objective();
    double change = (after - before) / before * 100.0;
    char line[200];
    std::snprintf(line, sizeof(line), "%-32s %-8.4g %-12.6g %-12.6g %+.1f\n", r.label.c_str(),
                  r.ref_force_n, before, after, change);
    out += line;
  }
  return out;
}

// Table-IV-shaped comparison of runs against baseline runs (paired by order).
inline std::string render_improvement_table(const std::vector<LoadedRun>& runs,
                                            const std::vector<LoadedRun>& baselines,
                                            double tolerance_fraction = 0.05) {
  std::string out;
  out +=
      "run                              baseline                         rmse_change_pct  "
      "iterations_change_pct\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const LoadedRun& run = runs[i];
    const LoadedRun& base = baselines[i];
    char line[260];
    if (base.best_objective() == 0.0) {
      std::snprintf(line, sizeof(line), "%-32s %-32s %-16s %s\n", run.label.c_str(),
                    base.label.c_str(), "undefined", "undefined (baseline best is 0)");
      out += line;
      continue;
    }
    TuningRun run_r, base_r;
    run_r.best_so_far = run.best_so_far;
    run_r.observations = run.observations;
    run_r.best_objective = run.best_objective();
    base_r.best_so_far = base.best_so_far;
    base_r.observations = base.observations;
    base_r.best_objective = base.best_objective();
    ImprovementReport report = improvement_report(base_r, run_r, tolerance_fraction);
    std::snprintf(line, sizeof(line), "%-32s %-32s %+-16.1f %+.1f\n", run.label.c_str(),
                  base.label.c_str(), report.rmse_change_percent,
                  report.iterations_change_percent);
    out += line;
  }
  return out;
}

}  // namespace forcetune
