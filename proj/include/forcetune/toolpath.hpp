#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <string>
#include <string_view>
#include <vector>

#include "forcetune/errors.hpp"

namespace forcetune {

// Endpoint of one linear move; the path starts at the origin (0,0).
struct ToolpathSegment {
  double x_mm = 0.0;
  double y_mm = 0.0;
  double feed_mm_s = 0.0;
};

struct Toolpath {
  std::vector<ToolpathSegment> segments;

  bool empty() const { return segments.empty(); }

  double total_length_mm() const {
    double x = 0.0, y = 0.0, length = 0.0;
    for (const auto& s : segments) {
      length += std::hypot(s.x_mm - x, s.y_mm - y);
      x = s.x_mm;
      y = s.y_mm;
    }
    return length;
  }

  // Time for one full pass of the path at the programmed feeds.
  double lap_time_s() const {
    double x = 0.0, y = 0.0, t = 0.0;
    for (const auto& s : segments) {
      t += std::hypot(s.x_mm - x, s.y_mm - y) / s.feed_mm_s;
      x = s.x_mm;
      y = s.y_mm;
    }
    return t;
  }

  bool closed() const {
    if (segments.empty()) return false;
    const auto& last = segments.back();
    return std::hypot(last.x_mm, last.y_mm) <= 1e-9;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline double parse_number(std::string_view token, int line_no) {
  std::string text(token);
  char* end = nullptr;
  double value = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || *end != '\0' || !std::isfinite(value)) {
    throw ParseError("toolpath line " + std::to_string(line_no) + ": malformed number '" +
                     text + "'");
  }
  return value;
}

}  // namespace detail

// Minimal move-command dialect: one `G1` per line with optional X/Y/F words,
// `;` comments, blank lines. F is mm/min and persists until overridden.
inline Toolpath parse_toolpath(std::string_view text) {
  Toolpath toolpath;
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);

  double x = 0.0, y = 0.0;
  double feed_mm_s = -1.0;  // negative = not set yet
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    pos = (eol == std::string_view::npos) ? text.size() + 1 : eol + 1;
    ++line_no;

    if (std::size_t c = line.find(';'); c != std::string_view::npos) line = line.substr(0, c);
    line = detail::trim(line);
    if (line.empty()) continue;

    // Tokenize on whitespace.
    std::vector<std::string_view> tokens;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      std::size_t start = i;
      while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      if (i > start) tokens.push_back(line.substr(start, i - start));
    }
    if (tokens.empty()) continue;
    if (tokens[0] != "G1") {
      throw ParseError("toolpath line " + std::to_string(line_no) + ": unknown command '" +
                       std::string(tokens[0]) + "'");
    }

    bool has_move = false;
    double nx = x, ny = y;
    for (std::size_t t = 1; t < tokens.size(); ++t) {
      std::string_view word = tokens[t];
      char letter = word.front();
      double value = detail::parse_number(word.substr(1), line_no);
      switch (letter) {
        case 'X':
          nx = value;
          has_move = true;
          break;
        case 'Y':
          ny = value;
          has_move = true;
          break;
        case 'F':
          if (value <= 0.0) {
            throw ParseError("toolpath line " + std::to_string(line_no) +
                             ": feed must be positive");
          }
          feed_mm_s = value / 60.0;  // file feeds are mm/min
          break;
        default:
          throw ParseError("toolpath line " + std::to_string(line_no) + ": unknown word '" +
                           std::string(word) + "'");
      }
    }
    if (!has_move) continue;
    if (feed_mm_s <= 0.0) {
      throw ParseError("toolpath line " + std::to_string(line_no) + ": no feed rate set");
    }
    if (std::hypot(nx - x, ny - y) > 0.0) {
      toolpath.segments.push_back({nx, ny, feed_mm_s});
    }
    x = nx;
    y = ny;
  }
  return toolpath;
}

struct CornerDipConfig {
  double angle_threshold_deg = 30.0;  // direction change that counts as a corner
  double dip_magnitude = 0.5;         // fractional flow loss, in (0,1]
  double dip_duration_s = 0.05;
};

struct DisturbanceEvent {
  double time_s = 0.0;
  double dip_magnitude = 0.0;
  double dip_duration_s = 0.0;
};

struct DisturbanceSchedule {
  std::vector<DisturbanceEvent> events;  // sorted strictly by time_s
  double cycle_s = 0.0;                  // 0 = one-shot; >0 repeats each lap

  // Flow multiplier d(t): 1 outside events, 1 - dip during an active event.
  double dip_factor(double time_s) const {
    if (events.empty()) return 1.0;
    double t = time_s;
    if (cycle_s > 0.0) t = std::fmod(t, cycle_s);
    double dip = 0.0;
    for (const auto& e : events) {
      bool active = (t >= e.time_s && t < e.time_s + e.dip_duration_s);
      if (!active && cycle_s > 0.0) {
        double wrapped = t + cycle_s;
        active = (wrapped >= e.time_s && wrapped < e.time_s + e.dip_duration_s);
      }
      if (active) dip = std::max(dip, e.dip_magnitude);
    }
    return 1.0 - dip;
  }
};

// One event per vertex whose direction change exceeds the angle threshold.
// Event time is the cumulative path time up to the vertex; closed contours
// also check the seam vertex and repeat every lap.
inline DisturbanceSchedule schedule_from_toolpath(const Toolpath& toolpath,
                                                  const CornerDipConfig& config) {
  if (toolpath.empty()) throw std::invalid_argument("schedule_from_toolpath: empty toolpath");
  if (!(config.dip_magnitude > 0.0 && config.dip_magnitude <= 1.0)) {
    throw std::invalid_argument("schedule_from_toolpath: dip_magnitude must be in (0,1]");
  }
  if (!(config.dip_duration_s > 0.0)) {
    throw std::invalid_argument("schedule_from_toolpath: dip_duration_s must be positive");
  }

  struct Leg {
    double dx, dy, duration_s;
  };
  std::vector<Leg> legs;
  double x = 0.0, y = 0.0;
  for (const auto& s : toolpath.segments) {
    double dx = s.x_mm - x, dy = s.y_mm - y;
    double len = std::hypot(dx, dy);
    x = s.x_mm;
    y = s.y_mm;
    if (len <= 1e-12) continue;  // degenerate moves carry no direction
    legs.push_back({dx / len, dy / len, len / s.feed_mm_s});
  }

  DisturbanceSchedule schedule;
  if (legs.empty()) return schedule;

  auto turn_deg = [](const Leg& a, const Leg& b) {
    double cross = a.dx * b.dy - a.dy * b.dx;
    double dot = a.dx * b.dx + a.dy * b.dy;
    return std::atan2(std::abs(cross), dot) * 180.0 / M_PI;
  };

  double elapsed = 0.0;
  for (std::size_t i = 0; i + 1 < legs.size(); ++i) {
    elapsed += legs[i].duration_s;
    if (turn_deg(legs[i], legs[i + 1]) > config.angle_threshold_deg) {
      schedule.events.push_back({elapsed, config.dip_magnitude, config.dip_duration_s});
    }
  }
  elapsed += legs.back().duration_s;
  if (toolpath.closed()) {
    if (turn_deg(legs.back(), legs.front()) > config.angle_threshold_deg) {
      schedule.events.push_back({elapsed, config.dip_magnitude, config.dip_duration_s});
    }
    schedule.cycle_s = elapsed;
  }
  return schedule;
}

}  // namespace forcetune
