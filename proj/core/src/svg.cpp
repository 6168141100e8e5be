#include "coldchain/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace coldchain::svg {
namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
constexpr int kPaletteSize = 8;

// Plot margins: left must fit y tick labels, bottom the x labels.
constexpr double kLeft = 72, kRight = 18, kTop = 40, kBottom = 56;

std::string esc(const std::string& s) {
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

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_text(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// Tick step of the form {1,2,5}*10^k giving roughly the requested count.
double nice_step(double span, int target) {
  if (span <= 0 || target < 1) return 1;
  double raw = span / target;
  double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double r = raw / mag;
  double step = r < 1.5 ? 1 : r < 3.5 ? 2 : r < 7.5 ? 5 : 10;
  return step * mag;
}

std::vector<double> linear_ticks(double lo, double hi) {
  double step = nice_step(hi - lo, 5);
  std::vector<double> t;
  double first = std::ceil(lo / step - 1e-9) * step;
  for (double v = first; v <= hi + 1e-9 * step; v += step) t.push_back(v == 0 ? 0 : v);
  return t;
}

std::vector<double> log_ticks(double lo, double hi) {
  std::vector<double> t;
  int k0 = static_cast<int>(std::floor(std::log10(lo) - 1e-12));
  int k1 = static_cast<int>(std::ceil(std::log10(hi) + 1e-12));
  for (int k = k0; k <= k1; ++k) {
    double v = std::pow(10.0, k);
    if (v >= lo * (1 - 1e-12) && v <= hi * (1 + 1e-12)) t.push_back(v);
  }
  if (t.empty()) t = {lo, hi};
  return t;
}

struct Frame {
  double x0, x1, y0, y1;      // data ranges (y in transformed space when log)
  double px0, px1, py0, py1;  // pixel box (py0 is the bottom)
  bool log_y = false;

  double X(double x) const {
    double t = x1 > x0 ? (x - x0) / (x1 - x0) : 0.5;
    return px0 + t * (px1 - px0);
  }
  double Y(double y) const {
    double v = log_y ? std::log10(y) : y;
    double t = y1 > y0 ? (v - y0) / (y1 - y0) : 0.5;
    return py0 - t * (py0 - py1);
  }
};

void open_svg(std::string& s, int w, int h) {
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) +
       "\" height=\"" + std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) + " " +
       std::to_string(h) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

void draw_title_axes(std::string& s, const Frame& f, const std::string& title,
                     const std::string& x_label, const std::string& y_label, int width) {
  if (!title.empty())
    s += "<text x=\"" + num(width / 2.0) +
         "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + esc(title) + "</text>\n";
  s += "<line x1=\"" + num(f.px0) + "\" y1=\"" + num(f.py0) + "\" x2=\"" + num(f.px1) +
       "\" y2=\"" + num(f.py0) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + num(f.px0) + "\" y1=\"" + num(f.py0) + "\" x2=\"" + num(f.px0) +
       "\" y2=\"" + num(f.py1) + "\" stroke=\"black\"/>\n";
  if (!x_label.empty())
    s += "<text x=\"" + num((f.px0 + f.px1) / 2) + "\" y=\"" + num(f.py0 + 40) +
         "\" text-anchor=\"middle\">" + esc(x_label) + "</text>\n";
  if (!y_label.empty())
    s += "<text x=\"16\" y=\"" + num((f.py0 + f.py1) / 2) +
         "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " + num((f.py0 + f.py1) / 2) +
         ")\">" + esc(y_label) + "</text>\n";
}

void draw_y_ticks(std::string& s, const Frame& f, const std::vector<double>& ticks) {
  for (double v : ticks) {
    double y = f.Y(v);
    s += "<line x1=\"" + num(f.px0 - 4) + "\" y1=\"" + num(y) + "\" x2=\"" + num(f.px1) +
         "\" y2=\"" + num(y) + "\" stroke=\"#dddddd\"/>\n";
    s += "<text x=\"" + num(f.px0 - 8) + "\" y=\"" + num(y + 4) + "\" text-anchor=\"end\">" +
         tick_text(v) + "</text>\n";
  }
}

void draw_legend(std::string& s, const Frame& f, const std::vector<std::string>& names) {
  double lx = f.px1 - 150, ly = f.py1 + 8;
  for (size_t i = 0; i < names.size(); ++i) {
    const char* color = kPalette[i % kPaletteSize];
    s += "<rect x=\"" + num(lx) + "\" y=\"" + num(ly) + "\" width=\"12\" height=\"12\" fill=\"" +
         color + "\"/>\n";
    s += "<text x=\"" + num(lx + 18) + "\" y=\"" + num(ly + 10) + "\">" + esc(names[i]) +
         "</text>\n";
    ly += 18;
  }
}

// Positive floor for log scales: smallest positive datum, or 1 if none.
double log_floor(const std::vector<double>& vals) {
  double lo = 0;
  for (double v : vals)
    if (v > 0 && (lo == 0 || v < lo)) lo = v;
  return lo == 0 ? 1.0 : lo;
}

}  // namespace

void LineChart::add(std::string name, std::vector<double> xs, std::vector<double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("svg: series length mismatch");
  series.push_back({std::move(name), std::move(xs), std::move(ys)});
}

std::string LineChart::render() const {
  Frame f;
  f.log_y = log_y;
  f.px0 = kLeft;
  f.px1 = width - kRight;
  f.py0 = height - kBottom;
  f.py1 = kTop;

  std::vector<double> all_y;
  double x_lo = 0, x_hi = 1;
  bool first = true;
  for (const Series& sr : series)
    for (size_t i = 0; i < sr.x.size(); ++i) {
      if (first || sr.x[i] < x_lo) x_lo = first ? sr.x[i] : std::min(x_lo, sr.x[i]);
      if (first || sr.x[i] > x_hi) x_hi = first ? sr.x[i] : std::max(x_hi, sr.x[i]);
      first = false;
      all_y.push_back(sr.y[i]);
    }
  if (all_y.empty()) {
    x_lo = 0;
    x_hi = 1;
    all_y = {0, 1};
  }
  if (!x_tick_labels.empty()) {
    x_lo = -0.5;
    x_hi = static_cast<double>(x_tick_labels.size()) - 0.5;
  } else if (x_hi == x_lo) {
    x_lo -= 0.5;
    x_hi += 0.5;
  }

  double y_lo, y_hi;
  std::vector<double> yticks;
  if (log_y) {
    double lo = log_floor(all_y);
    double hi = *std::max_element(all_y.begin(), all_y.end());
    if (hi <= lo) hi = lo * 10;
    yticks = log_ticks(lo, hi);
    y_lo = std::log10(lo);
    y_hi = std::log10(hi);
  } else {
    y_lo = *std::min_element(all_y.begin(), all_y.end());
    y_hi = *std::max_element(all_y.begin(), all_y.end());
    if (y_lo > 0 && y_lo < 0.3 * y_hi) y_lo = 0;  // anchor small positive data at zero
    if (y_hi == y_lo) y_hi = y_lo + 1;
    double pad = 0.05 * (y_hi - y_lo);
    if (y_lo != 0) y_lo -= pad;
    y_hi += pad;
    yticks = linear_ticks(y_lo, y_hi);
  }
  f.x0 = x_lo;
  f.x1 = x_hi;
  f.y0 = y_lo;
  f.y1 = y_hi;

  std::string s;
  open_svg(s, width, height);
  draw_title_axes(s, f, title, x_label, y_label, width);
  draw_y_ticks(s, f, yticks);

  if (!x_tick_labels.empty()) {
    for (size_t i = 0; i < x_tick_labels.size(); ++i) {
      double x = f.X(static_cast<double>(i));
      s += "<text x=\"" + num(x) + "\" y=\"" + num(f.py0 + 18) + "\" text-anchor=\"middle\">" +
           esc(x_tick_labels[i]) + "</text>\n";
    }
  } else {
    for (double v : linear_ticks(x_lo, x_hi)) {
      double x = f.X(v);
      s += "<line x1=\"" + num(x) + "\" y1=\"" + num(f.py0) + "\" x2=\"" + num(x) + "\" y2=\"" +
           num(f.py0 + 4) + "\" stroke=\"black\"/>\n";
      s += "<text x=\"" + num(x) + "\" y=\"" + num(f.py0 + 18) + "\" text-anchor=\"middle\">" +
           tick_text(v) + "</text>\n";
    }
  }

  std::vector<std::string> names;
  for (size_t k = 0; k < series.size(); ++k) {
    const Series& sr = series[k];
    names.push_back(sr.name);
    const char* color = kPalette[k % kPaletteSize];
    std::string pts;
    for (size_t i = 0; i < sr.x.size(); ++i) {
      double yv = sr.y[i];
      if (log_y && yv <= 0) continue;  // not representable; drop the point
      pts += num(f.X(sr.x[i])) + "," + num(f.Y(yv)) + " ";
    }
    if (!pts.empty())
      s += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
           "\" stroke-width=\"1.8\"/>\n";
    if (markers)
      for (size_t i = 0; i < sr.x.size(); ++i) {
        if (log_y && sr.y[i] <= 0) continue;
        s += "<circle cx=\"" + num(f.X(sr.x[i])) + "\" cy=\"" + num(f.Y(sr.y[i])) +
             "\" r=\"2.6\" fill=\"" + color + "\"/>\n";
      }
  }
  draw_legend(s, f, names);
  s += "</svg>\n";
  return s;
}

std::string BarChart::render() const {
  for (const BarGroup& g : groups)
    if (g.values.size() != series.size())
      throw std::invalid_argument("svg: bar group size mismatch");

  Frame f;
  f.log_y = log_y;
  f.px0 = kLeft;
  f.px1 = width - kRight;
  f.py0 = height - kBottom;
  f.py1 = kTop;

  std::vector<double> all_y;
  for (const BarGroup& g : groups)
    for (double v : g.values) all_y.push_back(v);
  if (all_y.empty()) all_y = {0, 1};

  double y_lo, y_hi, base;
  std::vector<double> yticks;
  if (log_y) {
    double lo = log_floor(all_y);
    double hi = *std::max_element(all_y.begin(), all_y.end());
    if (hi <= lo) hi = lo * 10;
    lo /= 2;  // headroom below the smallest bar so it has visible height
    yticks = log_ticks(lo, hi);
    y_lo = std::log10(lo);
    y_hi = std::log10(hi);
    base = lo;
  } else {
    y_hi = std::max(0.0, *std::max_element(all_y.begin(), all_y.end()));
    y_lo = std::min(0.0, *std::min_element(all_y.begin(), all_y.end()));
    if (y_hi == y_lo) y_hi = y_lo + 1;
    y_hi += 0.05 * (y_hi - y_lo);
    yticks = linear_ticks(y_lo, y_hi);
    base = 0;
  }
  f.x0 = 0;
  f.x1 = 1;
  f.y0 = y_lo;
  f.y1 = y_hi;

  std::string s;
  open_svg(s, width, height);
  draw_title_axes(s, f, title, "", y_label, width);
  draw_y_ticks(s, f, yticks);

  const double n_groups = static_cast<double>(groups.size());
  const double span = f.px1 - f.px0;
  const double group_w = n_groups > 0 ? span / n_groups : span;
  const double bar_w =
      series.empty() ? group_w : 0.8 * group_w / static_cast<double>(series.size());
  for (size_t gi = 0; gi < groups.size(); ++gi) {
    const BarGroup& g = groups[gi];
    double gx = f.px0 + group_w * (static_cast<double>(gi) + 0.5);
    for (size_t k = 0; k < g.values.size(); ++k) {
      double v = g.values[k];
      if (log_y && v <= 0) continue;
      double cx = gx + bar_w * (static_cast<double>(k) - static_cast<double>(series.size()) / 2.0);
      double y_val = f.Y(v);
      double y_base = f.Y(base);
      double top = std::min(y_val, y_base);
      double h = std::abs(y_base - y_val);
      s += "<rect x=\"" + num(cx) + "\" y=\"" + num(top) + "\" width=\"" + num(bar_w * 0.92) +
           "\" height=\"" + num(h) + "\" fill=\"" + kPalette[k % kPaletteSize] + "\"/>\n";
    }
    s += "<text x=\"" + num(gx) + "\" y=\"" + num(f.py0 + 18) + "\" text-anchor=\"middle\">" +
         esc(g.label) + "</text>\n";
  }
  draw_legend(s, f, series);
  s += "</svg>\n";
  return s;
}

void write_file(const std::string& path, const std::string& svg_text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("svg: cannot open " + path);
  out << svg_text;
  if (!out) throw std::runtime_error("svg: write failed for " + path);
}

}  // namespace coldchain::svg
