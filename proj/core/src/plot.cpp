#include <algorithm>
#include <cmath>
#include <array>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "ttus/harness.hpp"
#include "ttus/io.hpp"

namespace ttus {

namespace {

constexpr double kWidth = 640.0, kHeight = 420.0;
constexpr double kLeft = 70.0, kRight = 610.0, kTop = 50.0, kBottom = 370.0;

const char* kPalette[] = {"#4363d8", "#e6194b", "#3cb44b",
                          "#f58231", "#911eb4", "#808000"};

std::string xml_escape(const std::string& s) {
  std::string out;
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
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct Scale {
  double lo = 0.0, hi = 1.0;
  bool log = false;
  double a0 = 0.0, a1 = 1.0;  // pixel range

  double operator()(double v) const {
    const double t = log ? std::log10(v) : v;
    const double t0 = log ? std::log10(lo) : lo;
    const double t1 = log ? std::log10(hi) : hi;
    const double frac = (t1 == t0) ? 0.5 : (t - t0) / (t1 - t0);
    return a0 + frac * (a1 - a0);
  }
};

}  // namespace

std::string render_line_chart_svg(const PanelSpec& panel) {
  if (panel.series.empty()) throw std::invalid_argument("panel has no series");

  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
  double y_lo = std::numeric_limits<double>::infinity(), y_hi = -y_lo;
  for (const auto& s : panel.series) {
    if (s.x.size() != s.mean.size() || s.x.size() != s.std_dev.size()) {
      throw std::invalid_argument("series arrays are not aligned");
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x_lo = std::min(x_lo, s.x[i]);
      x_hi = std::max(x_hi, s.x[i]);
      if (std::isfinite(s.mean[i])) {
        y_lo = std::min(y_lo, s.mean[i] - s.std_dev[i]);
        y_hi = std::max(y_hi, s.mean[i] + s.std_dev[i]);
      }
    }
  }
  if (!std::isfinite(x_lo) || !std::isfinite(y_lo)) {
    throw std::invalid_argument("panel has no finite points");
  }
  if (panel.dashed_y.has_value()) {
    y_lo = std::min(y_lo, *panel.dashed_y);
    y_hi = std::max(y_hi, *panel.dashed_y);
  }
  if (y_hi == y_lo) {
    y_hi += 1.0;
    y_lo -= 1.0;
  } else {
    const double pad = 0.06 * (y_hi - y_lo);
    y_hi += pad;
    y_lo -= pad;
  }
  const bool log_x = panel.log_x && x_lo > 0.0 && x_hi > x_lo;

  Scale sx{x_lo, x_hi, log_x, kLeft, kRight};
  Scale sy{y_lo, y_hi, false, kBottom, kTop};

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << ' '
      << kHeight << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << (kWidth / 2) << "\" y=\"24\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"16\">"
      << xml_escape(panel.title) << "</text>\n";

  // Axes.
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kBottom << "\" x2=\"" << kRight
      << "\" y2=\"" << kBottom << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft
      << "\" y2=\"" << kBottom << "\" stroke=\"black\"/>\n";

  // Ticks: x at the data points of the first series, y at five even stops.
  for (double xv : panel.series.front().x) {
    const double px = sx(xv);
    svg << "<line x1=\"" << num(px) << "\" y1=\"" << kBottom << "\" x2=\""
        << num(px) << "\" y2=\"" << (kBottom + 5) << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << num(px) << "\" y=\"" << (kBottom + 18)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << num(xv) << "</text>\n";
  }
  for (int k = 0; k <= 4; ++k) {
    const double yv = y_lo + (y_hi - y_lo) * k / 4.0;
    const double py = sy(yv);
    svg << "<line x1=\"" << (kLeft - 5) << "\" y1=\"" << num(py) << "\" x2=\""
        << kLeft << "\" y2=\"" << num(py) << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << (kLeft - 8) << "\" y=\"" << num(py + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << num(yv) << "</text>\n";
  }
  svg << "<text x=\"" << (kWidth / 2) << "\" y=\"" << (kHeight - 14)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
      << xml_escape(panel.x_label) << "</text>\n"
      << "<text x=\"18\" y=\"" << ((kTop + kBottom) / 2)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
         "transform=\"rotate(-90 18 "
      << ((kTop + kBottom) / 2) << ")\">" << xml_escape(panel.y_label)
      << "</text>\n";

  if (panel.dashed_y.has_value()) {
    const double py = sy(*panel.dashed_y);
    svg << "<line x1=\"" << kLeft << "\" y1=\"" << num(py) << "\" x2=\""
        << kRight << "\" y2=\"" << num(py)
        << "\" stroke=\"gray\" stroke-dasharray=\"6 4\"/>\n";
  }

  for (std::size_t si = 0; si < panel.series.size(); ++si) {
    const auto& s = panel.series[si];
    const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
    if (s.x.empty()) continue;

    // +-1 std band.
    std::ostringstream band;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      band << num(sx(s.x[i])) << ',' << num(sy(s.mean[i] + s.std_dev[i])) << ' ';
    }
    for (std::size_t i = s.x.size(); i-- > 0;) {
      band << num(sx(s.x[i])) << ',' << num(sy(s.mean[i] - s.std_dev[i])) << ' ';
    }
    svg << "<polygon points=\"" << band.str() << "\" fill=\"" << color
        << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";

    std::ostringstream line;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      line << num(sx(s.x[i])) << ',' << num(sy(s.mean[i])) << ' ';
    }
    svg << "<polyline points=\"" << line.str() << "\" fill=\"none\" stroke=\""
        << color << "\" stroke-width=\"2\"/>\n";

    // Legend entry.
    const double ly = kTop + 16.0 * static_cast<double>(si);
    svg << "<line x1=\"" << (kRight - 150) << "\" y1=\"" << num(ly)
        << "\" x2=\"" << (kRight - 126) << "\" y2=\"" << num(ly)
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << (kRight - 120) << "\" y=\"" << num(ly + 4)
        << "\" font-family=\"sans-serif\" font-size=\"12\">"
        << xml_escape(s.name) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

EmitResult emit_plots(const SweepResult& result,
                      const std::filesystem::path& out_dir) {
  EmitResult emitted;

  // Group cells by (gamma, alpha); the budget is the panel x axis.
  std::map<std::pair<double, double>, std::vector<const ExperimentResult*>> groups;
  for (const auto& cell : result.cells) {
    groups[{cell.gamma_target, cell.alpha}].push_back(&cell);
  }
  if (groups.empty()) {
    emitted.notice = "no sweep cells with results; nothing to plot";
    return emitted;
  }

  struct Panel {
    const char* stem;
    const char* title;
    const char* y_label;
    bool dashed;
  };
  const Panel panels[] = {
      {"coverage", "Coverage", "AvgCoverage", true},
      {"budget", "Mean samplings per prompt", "AvgBudget", false},
      {"lpb", "Mean LPB", "AvgLPB", false},
  };

  bool any_series = false;
  for (const auto& [key, cells] : groups) {
    const auto [gamma, alpha] = key;

    // mode -> (budget, mean, std) per metric, in budget order.
    std::map<std::string, std::array<PlotSeries, 3>> series;
    for (const ExperimentResult* cell : cells) {
      const auto aggs = aggregate_by_mode(cell->rows);
      for (const auto& [mode, agg] : aggs) {
        auto& trio = series[mode];
        const double mean[3] = {agg.coverage_mean, agg.budget_mean, agg.lpb_mean};
        const double sd[3] = {agg.coverage_std, agg.budget_std, agg.lpb_std};
        for (int k = 0; k < 3; ++k) {
          trio[static_cast<std::size_t>(k)].name = mode;
          trio[static_cast<std::size_t>(k)].x.push_back(cell->budget_per_prompt);
          trio[static_cast<std::size_t>(k)].mean.push_back(mean[k]);
          trio[static_cast<std::size_t>(k)].std_dev.push_back(sd[k]);
        }
      }
    }
    if (series.empty()) continue;
    any_series = true;

    std::ostringstream suffix;
    suffix << "_g" << num(gamma) << "_a" << num(alpha);
    for (int k = 0; k < 3; ++k) {
      PanelSpec spec;
      spec.title = std::string(panels[k].title) + " (gamma=" + num(gamma) +
                   ", alpha=" + num(alpha) + ")";
      spec.x_label = "budget per prompt";
      spec.y_label = panels[k].y_label;
      if (panels[k].dashed) spec.dashed_y = 1.0 - alpha;
      for (auto& [mode, trio] : series) {
        spec.series.push_back(trio[static_cast<std::size_t>(k)]);
      }

      const auto svg_path =
          out_dir / (std::string(panels[k].stem) + suffix.str() + ".svg");
      write_text_file(svg_path, render_line_chart_svg(spec));
      emitted.files.push_back(svg_path);

      std::ostringstream csv;
      csv << "mode,budget_per_prompt,mean,std\n";
      for (const auto& s : spec.series) {
        for (std::size_t i = 0; i < s.x.size(); ++i) {
          csv << s.name << ',' << fmt_g17(s.x[i]) << ',' << fmt_g17(s.mean[i])
              << ',' << fmt_g17(s.std_dev[i]) << '\n';
        }
      }
      const auto csv_path =
          out_dir / (std::string(panels[k].stem) + suffix.str() + ".csv");
      write_text_file(csv_path, csv.str());
      emitted.files.push_back(csv_path);
    }
  }
  if (!any_series) {
    emitted.notice = "no mode produced rows; nothing to plot";
  }
  return emitted;
}

}  // namespace ttus
