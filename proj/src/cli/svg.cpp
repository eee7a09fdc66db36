// Copyright 2026 The bellgate Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace bellgate::cli {

namespace {

constexpr double kWidth = 640.0, kHeight = 420.0;
constexpr double kLeft = 80.0, kRight = 20.0, kTop = 40.0, kBottom = 60.0;
constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Axis {
  double lo = 0.0, hi = 1.0;
  bool log = false;

  double map(double v) const {
    const double t = log ? (std::log10(v) - lo) / (hi - lo) : (v - lo) / (hi - lo);
    return std::clamp(t, 0.0, 1.0);
  }
};

Axis make_axis(const std::vector<Series>& series, bool use_x, bool log) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const Series& s : series)
    for (double v : use_x ? s.x : s.y) {
      if (!std::isfinite(v) || (log && v <= 0.0)) continue;
      const double w = log ? std::log10(v) : v;
      lo = std::min(lo, w);
      hi = std::max(hi, w);
    }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (log) {
    lo = std::floor(lo);
    hi = std::max(std::ceil(hi), lo + 1.0);
  } else if (hi - lo < 1e-300) {
    lo -= 0.5;
    hi += 0.5;
  } else {
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
  return {lo, hi, log};
}

std::vector<double> ticks(const Axis& a) {
  std::vector<double> out;
  if (a.log) {
    for (double e = a.lo; e <= a.hi + 1e-9; e += 1.0) out.push_back(std::pow(10.0, e));
    return out;
  }
  for (int k = 0; k <= 4; ++k) out.push_back(a.lo + (a.hi - a.lo) * k / 4.0);
  return out;
}

}  // namespace

std::string line_plot(const std::vector<Series>& series, const PlotSpec& spec) {
  const Axis ax = make_axis(series, true, spec.log_x);
  const Axis ay = make_axis(series, false, spec.log_y);
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double v) { return kLeft + ax.map(v) * pw; };
  auto py = [&](double v) { return kTop + (1.0 - ay.map(v)) * ph; };

  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"640\" height=\"420\" fill=\"white\"/>\n";
  s += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" + escape(spec.title) + "</text>\n";
  s += "<rect x=\"" + fmt("%.1f", kLeft) + "\" y=\"" + fmt("%.1f", kTop) + "\" width=\"" + fmt("%.1f", pw) +
       "\" height=\"" + fmt("%.1f", ph) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double t : ticks(ax)) {
    const double x = px(t);
    s += "<line x1=\"" + fmt("%.1f", x) + "\" y1=\"" + fmt("%.1f", kTop + ph) + "\" x2=\"" + fmt("%.1f", x) +
         "\" y2=\"" + fmt("%.1f", kTop + ph + 5) + "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + fmt("%.1f", x) + "\" y=\"" + fmt("%.1f", kTop + ph + 18) + "\" text-anchor=\"middle\">" +
         fmt("%.4g", t) + "</text>\n";
  }
  for (double t : ticks(ay)) {
    const double y = py(t);
    s += "<line x1=\"" + fmt("%.1f", kLeft - 5) + "\" y1=\"" + fmt("%.1f", y) + "\" x2=\"" + fmt("%.1f", kLeft) +
         "\" y2=\"" + fmt("%.1f", y) + "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + fmt("%.1f", kLeft - 8) + "\" y=\"" + fmt("%.1f", y + 4) + "\" text-anchor=\"end\">" +
         fmt("%.4g", t) + "</text>\n";
  }
  s += "<text x=\"" + fmt("%.1f", kLeft + pw / 2) + "\" y=\"" + fmt("%.1f", kHeight - 15) +
       "\" text-anchor=\"middle\">" + escape(spec.x_label) + "</text>\n";
  s += "<text x=\"18\" y=\"" + fmt("%.1f", kTop + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
       fmt("%.1f", kTop + ph / 2) + ")\">" + escape(spec.y_label) + "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const Series& ser = series[k];
    const char* color = kColors[k % std::size(kColors)];
    std::string pts;
    for (std::size_t i = 0; i < ser.x.size() && i < ser.y.size(); ++i) {
      if ((spec.log_x && ser.x[i] <= 0.0) || (spec.log_y && ser.y[i] <= 0.0)) continue;
      if (!pts.empty()) pts += ' ';
      pts += fmt("%.2f", px(ser.x[i])) + "," + fmt("%.2f", py(ser.y[i]));
    }
    s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    s += "<text x=\"" + fmt("%.1f", kLeft + 10) + "\" y=\"" + fmt("%.1f", kTop + 16 + 14.0 * static_cast<double>(k)) +
         "\" fill=\"" + color + "\">" + escape(ser.name) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace bellgate::cli
