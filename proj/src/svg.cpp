#include "gatedbev/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace gatedbev {

namespace {

constexpr double kW = 640, kH = 400, kLeft = 70, kRight = 150, kTop = 40, kBottom = 50;
const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

std::string header(const std::string& title, const std::string& y_label, double lo, double hi) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kW) + "\" height=\"" + num(kH) +
                  "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(kW / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" + escape(title) + "</text>\n";
  const double y0 = kH - kBottom;
  s += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(kLeft) + "\" y2=\"" + num(y0) +
       "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(kW - kRight) + "\" y2=\"" + num(y0) +
       "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    const double y = y0 - (y0 - kTop) * k / 4.0;
    s += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(y + 4) + "\" text-anchor=\"end\">" + num(v) + "</text>\n";
  }
  s += "<text x=\"16\" y=\"" + num((kTop + y0) / 2) + "\" transform=\"rotate(-90 16 " + num((kTop + y0) / 2) +
       ")\" text-anchor=\"middle\">" + escape(y_label) + "</text>\n";
  return s;
}

std::string legend(const std::vector<Series>& series) {
  std::string s;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double y = kTop + 16.0 * static_cast<double>(i);
    s += "<rect x=\"" + num(kW - kRight + 12) + "\" y=\"" + num(y) + "\" width=\"10\" height=\"10\" fill=\"" +
         kColors[i % 6] + "\"/>\n";
    s += "<text x=\"" + num(kW - kRight + 28) + "\" y=\"" + num(y + 9) + "\">" + escape(series[i].label) + "</text>\n";
  }
  return s;
}

void value_range(const std::vector<Series>& series, double& lo, double& hi) {
  lo = 0.0;
  hi = 0.0;
  for (const auto& s : series)
    for (double v : s.values)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  if (hi <= lo) hi = lo + 1.0;
}

}  // namespace

std::string svg_line_chart(const std::string& title, const std::vector<Series>& series, const std::string& x_label,
                           const std::string& y_label) {
  double lo, hi;
  value_range(series, lo, hi);
  std::size_t n = 1;
  for (const auto& s : series) n = std::max(n, s.values.size());
  std::string out = header(title, y_label, lo, hi);
  const double y0 = kH - kBottom, plot_w = kW - kLeft - kRight;
  out += "<text x=\"" + num(kLeft + plot_w / 2) + "\" y=\"" + num(kH - 12) + "\" text-anchor=\"middle\">" +
         escape(x_label) + "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    out += "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" + std::string(kColors[i % 6]) + "\" points=\"";
    for (std::size_t k = 0; k < series[i].values.size(); ++k) {
      const double x = kLeft + (n == 1 ? 0.0 : plot_w * static_cast<double>(k) / static_cast<double>(n - 1));
      const double y = y0 - (y0 - kTop) * (series[i].values[k] - lo) / (hi - lo);
      out += num(x) + "," + num(y) + " ";
    }
    out += "\"/>\n";
  }
  out += legend(series);
  return out + "</svg>\n";
}

std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& categories,
                          const std::vector<Series>& series, const std::string& y_label) {
  double lo, hi;
  value_range(series, lo, hi);
  std::string out = header(title, y_label, lo, hi);
  const double y0 = kH - kBottom, plot_w = kW - kLeft - kRight;
  const double group_w = plot_w / static_cast<double>(std::max<std::size_t>(1, categories.size()));
  const double bar_w = group_w * 0.8 / static_cast<double>(std::max<std::size_t>(1, series.size()));
  auto to_y = [&](double v) { return y0 - (y0 - kTop) * (v - lo) / (hi - lo); };
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const double gx = kLeft + group_w * static_cast<double>(c);
    for (std::size_t i = 0; i < series.size(); ++i) {
      if (c >= series[i].values.size() || !std::isfinite(series[i].values[c])) continue;
      const double v = series[i].values[c];
      const double top = std::min(to_y(v), to_y(0.0));
      const double h = std::abs(to_y(v) - to_y(0.0));
      out += "<rect x=\"" + num(gx + group_w * 0.1 + bar_w * static_cast<double>(i)) + "\" y=\"" + num(top) +
             "\" width=\"" + num(bar_w) + "\" height=\"" + num(h) + "\" fill=\"" + kColors[i % 6] + "\"/>\n";
    }
    out += "<text x=\"" + num(gx + group_w / 2) + "\" y=\"" + num(y0 + 16) + "\" text-anchor=\"middle\">" +
           escape(categories[c]) + "</text>\n";
  }
  out += legend(series);
  return out + "</svg>\n";
}

}  // namespace gatedbev
