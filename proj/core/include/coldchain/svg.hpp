#pragma once

// Self-contained SVG emission for the two chart shapes the experiment
// pipeline needs: multi-series line charts (frontiers, sweeps, bound traces)
// and grouped bar charts (per-parameter averages, value-of-information).
// Output is deterministic for fixed inputs; CSV stays the canonical artifact
// and these are viewing aids only.

#include <string>
#include <vector>

namespace coldchain::svg {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 760;
  int height = 420;
  bool log_y = false;
  bool markers = true;
  // When set, x values are category indices 0..n-1 and these label the ticks.
  std::vector<std::string> x_tick_labels;
  std::vector<Series> series;

  void add(std::string name, std::vector<double> xs, std::vector<double> ys);
  std::string render() const;
};

struct BarGroup {
  std::string label;
  std::vector<double> values;  // one per series, series order
};

struct BarChart {
  std::string title;
  std::string y_label;
  int width = 760;
  int height = 420;
  bool log_y = false;
  std::vector<std::string> series;  // legend entries
  std::vector<BarGroup> groups;

  std::string render() const;
};

void write_file(const std::string& path, const std::string& svg_text);

}  // namespace coldchain::svg
