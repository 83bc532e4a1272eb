#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace nkcli {

namespace {

constexpr double kW = 720, kH = 460;
constexpr double kLeft = 80, kRight = 190, kTop = 40, kBottom = 60;

const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                         "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v, bool log) {
  char buf[32];
  if (log) {
    const double e = std::round(v);
    std::snprintf(buf, sizeof buf, "1e%d", static_cast<int>(e));
  } else {
    std::snprintf(buf, sizeof buf, "%.3g", v);
  }
  return buf;
}

struct Axis {
  double lo = 0, hi = 1;
  bool log = false;

  void fit(const std::vector<double>& v) {
    lo = std::numeric_limits<double>::infinity();
    hi = -lo;
    for (double t : v) {
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
    if (!std::isfinite(lo)) lo = 0, hi = 1;
    if (log) {
      lo = std::floor(lo);
      hi = std::ceil(hi);
    }
    if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
  }

  std::vector<double> ticks() const {
    std::vector<double> t;
    if (log) {
      const int step = std::max(1, static_cast<int>(std::ceil((hi - lo) / 8)));
      for (double e = lo; e <= hi + 1e-9; e += step) t.push_back(e);
      return t;
    }
    const double raw = (hi - lo) / 6;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0})
      if (m * mag >= raw) {
        step = m * mag;
        break;
      }
    for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * step; v += step) t.push_back(v);
    return t;
  }
};

}  // namespace

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string render_svg(const Chart& c) {
  std::vector<std::vector<std::pair<double, double>>> pts(c.series.size());
  std::vector<double> xs, ys;
  for (std::size_t s = 0; s < c.series.size(); ++s) {
    const auto& ser = c.series[s];
    for (std::size_t i = 0; i < std::min(ser.x.size(), ser.y.size()); ++i) {
      double x = ser.x[i], y = ser.y[i];
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      if ((c.log_x && x <= 0) || (c.log_y && y <= 0)) continue;
      if (c.log_x) x = std::log10(x);
      if (c.log_y) y = std::log10(y);
      pts[s].emplace_back(x, y);
      xs.push_back(x);
      ys.push_back(y);
    }
  }
  Axis ax, ay;
  ax.log = c.log_x;
  ay.log = c.log_y;
  ax.fit(xs);
  ay.fit(ys);
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto X = [&](double x) { return kLeft + (x - ax.lo) / (ax.hi - ax.lo) * pw; };
  auto Y = [&](double y) { return kTop + ph - (y - ay.lo) / (ay.hi - ay.lo) * ph; };

  std::string o;
  o += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kW) + "\" height=\"" + num(kH) +
       "\" viewBox=\"0 0 " + num(kW) + " " + num(kH) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o += "<rect x=\"0\" y=\"0\" width=\"" + num(kW) + "\" height=\"" + num(kH) + "\" fill=\"white\"/>\n";
  o += "<text x=\"" + num(kW / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" + xml_escape(c.title) +
       "</text>\n";
  o += "<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double t : ax.ticks()) {
    o += "<line x1=\"" + num(X(t)) + "\" y1=\"" + num(kTop + ph) + "\" x2=\"" + num(X(t)) + "\" y2=\"" +
         num(kTop + ph + 5) + "\" stroke=\"black\"/>\n";
    o += "<text x=\"" + num(X(t)) + "\" y=\"" + num(kTop + ph + 18) + "\" text-anchor=\"middle\">" +
         xml_escape(tick_label(t, ax.log)) + "</text>\n";
  }
  for (double t : ay.ticks()) {
    o += "<line x1=\"" + num(kLeft - 5) + "\" y1=\"" + num(Y(t)) + "\" x2=\"" + num(kLeft) + "\" y2=\"" + num(Y(t)) +
         "\" stroke=\"black\"/>\n";
    o += "<text x=\"" + num(kLeft - 8) + "\" y=\"" + num(Y(t) + 4) + "\" text-anchor=\"end\">" +
         xml_escape(tick_label(t, ay.log)) + "</text>\n";
  }
  o += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(kH - 15) + "\" text-anchor=\"middle\">" +
       xml_escape(c.x_label) + "</text>\n";
  o += "<text x=\"18\" y=\"" + num(kTop + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
       num(kTop + ph / 2) + ")\">" + xml_escape(c.y_label) + "</text>\n";

  for (std::size_t s = 0; s < c.series.size(); ++s) {
    const char* col = kColors[s % (sizeof kColors / sizeof *kColors)];
    if (!pts[s].empty()) {
      std::string path;
      for (const auto& [x, y] : pts[s]) path += num(X(x)) + "," + num(Y(y)) + " ";
      path.pop_back();
      o += std::string("<polyline fill=\"none\" stroke=\"") + col + "\" stroke-width=\"1.5\" points=\"" + path +
           "\"/>\n";
      for (const auto& [x, y] : pts[s])
        o += std::string("<circle cx=\"") + num(X(x)) + "\" cy=\"" + num(Y(y)) + "\" r=\"2.5\" fill=\"" + col +
             "\"/>\n";
    }
    const double ly = kTop + 10 + 18.0 * static_cast<double>(s);
    const double lx = kLeft + pw + 15;
    o += std::string("<line x1=\"") + num(lx) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(lx + 20) + "\" y2=\"" +
         num(ly) + "\" stroke=\"" + col + "\" stroke-width=\"2\"/>\n";
    o += "<text x=\"" + num(lx + 26) + "\" y=\"" + num(ly + 4) + "\">" + xml_escape(c.series[s].label) + "</text>\n";
  }
  o += "</svg>\n";
  return o;
}

}  // namespace nkcli
