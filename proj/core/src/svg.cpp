#include "relex/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace relex {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};
constexpr int kPaletteSize = 8;

constexpr double kWidth = 800.0, kHeight = 500.0;
constexpr double kLeft = 70.0, kRight = 620.0, kTop = 20.0, kBottom = 450.0;

std::string fmt(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.12g", value);
  return buffer;
}

}  // namespace

std::string render_regret_svg(const std::vector<RegretSeries>& series, bool log_x) {
  std::size_t max_len = 1;
  double max_y = 0.0;
  for (const auto& s : series) {
    max_len = std::max(max_len, s.cumulative.size());
    for (double v : s.cumulative) max_y = std::max(max_y, v);
  }
  if (max_y <= 0.0) max_y = 1.0;
  const double x_lo = log_x ? std::log10(1.0) : 1.0;
  const double x_hi = log_x ? std::log10(static_cast<double>(std::max<std::size_t>(max_len, 2)))
                            : static_cast<double>(max_len);

  auto x_of = [&](double episode) {
    const double t = log_x ? std::log10(episode) : episode;
    return kLeft + (t - x_lo) / (x_hi - x_lo) * (kRight - kLeft);
  };
  auto y_of = [&](double value) { return kBottom - value / max_y * (kBottom - kTop); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  os << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kBottom << "\" x2=\"" << kRight << "\" y2=\""
     << kBottom << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kBottom
     << "\" stroke=\"black\"/>\n";

  for (int tick = 0; tick <= 4; ++tick) {
    const double frac = tick / 4.0;
    const double yv = frac * max_y;
    const double y = y_of(yv);
    os << "<line x1=\"" << kLeft - 4 << "\" y1=\"" << y << "\" x2=\"" << kLeft << "\" y2=\"" << y
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << kLeft - 8 << "\" y=\"" << y + 4
       << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(yv) << "</text>\n";
    const double xt = x_lo + frac * (x_hi - x_lo);
    const double episode = log_x ? std::pow(10.0, xt) : xt;
    const double x = kLeft + frac * (kRight - kLeft);
    os << "<line x1=\"" << x << "\" y1=\"" << kBottom << "\" x2=\"" << x << "\" y2=\""
       << kBottom + 4 << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << x << "\" y=\"" << kBottom + 18
       << "\" text-anchor=\"middle\" font-size=\"11\">" << fmt(std::round(episode)) << "</text>\n";
  }
  os << "<text x=\"" << (kLeft + kRight) / 2 << "\" y=\"" << kBottom + 36
     << "\" text-anchor=\"middle\" font-size=\"12\">episode" << (log_x ? " (log scale)" : "")
     << "</text>\n";
  os << "<text x=\"16\" y=\"" << (kTop + kBottom) / 2
     << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
     << (kTop + kBottom) / 2 << ")\">cumulative regret</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    if (s.cumulative.empty()) continue;
    const char* color = kPalette[i % kPaletteSize];
    const std::size_t n = s.cumulative.size();
    const std::size_t step = std::max<std::size_t>(1, n / 1000);
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t j = 0; j < n; j += step)
      os << fmt(x_of(static_cast<double>(j + 1))) << ',' << fmt(y_of(s.cumulative[j])) << ' ';
    os << fmt(x_of(static_cast<double>(n))) << ',' << fmt(y_of(s.cumulative[n - 1]));
    os << "\"/>\n";
    const double ly = kTop + 16.0 * (static_cast<double>(i) + 1);
    os << "<line x1=\"" << kRight + 10 << "\" y1=\"" << ly << "\" x2=\"" << kRight + 30
       << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << kRight + 36 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">" << s.label
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace relex
