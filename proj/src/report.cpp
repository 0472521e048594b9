#include "rangemap/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace rangemap::report {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct Series {
  std::string name;
  std::vector<double> xs;
  std::vector<double> ys;
};

constexpr int kWidth = 640;
constexpr int kHeight = 420;
constexpr int kMarginLeft = 60;
constexpr int kMarginRight = 20;
constexpr int kMarginTop = 30;
constexpr int kMarginBottom = 50;
const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};

double map_x(double x, double x_lo, double x_hi) {
  const double span = std::max(x_hi - x_lo, 1e-12);
  return kMarginLeft + (x - x_lo) / span * (kWidth - kMarginLeft - kMarginRight);
}

double map_y(double y, double y_lo, double y_hi) {
  const double span = std::max(y_hi - y_lo, 1e-12);
  return kHeight - kMarginBottom - (y - y_lo) / span * (kHeight - kMarginTop - kMarginBottom);
}

void svg_header(std::ostringstream& out, const std::string& title) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\""
      << " font-size=\"14\">" << title << "</text>\n";
}

void svg_axes(std::ostringstream& out, double x_lo, double x_hi, double y_lo, double y_hi,
              const std::string& x_label, const std::string& y_label) {
  out << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kHeight - kMarginBottom << "\" x2=\""
      << kWidth - kMarginRight << "\" y2=\"" << kHeight - kMarginBottom
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop << "\" x2=\"" << kMarginLeft
      << "\" y2=\"" << kHeight - kMarginBottom << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double fx = x_lo + (x_hi - x_lo) * i / 5.0;
    const double fy = y_lo + (y_hi - y_lo) * i / 5.0;
    const double px = map_x(fx, x_lo, x_hi);
    const double py = map_y(fy, y_lo, y_hi);
    out << "<line x1=\"" << px << "\" y1=\"" << kHeight - kMarginBottom << "\" x2=\"" << px
        << "\" y2=\"" << kHeight - kMarginBottom + 5 << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << px << "\" y=\"" << kHeight - kMarginBottom + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(fx)
        << "</text>\n";
    out << "<line x1=\"" << kMarginLeft - 5 << "\" y1=\"" << py << "\" x2=\"" << kMarginLeft
        << "\" y2=\"" << py << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << kMarginLeft - 8 << "\" y=\"" << py + 3
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(fy)
        << "</text>\n";
  }
  out << "<text x=\"" << (kMarginLeft + kWidth - kMarginRight) / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << x_label
      << "</text>\n";
  out << "<text x=\"16\" y=\"" << (kMarginTop + kHeight - kMarginBottom) / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 "
      << (kMarginTop + kHeight - kMarginBottom) / 2 << ")\">" << y_label << "</text>\n";
}

std::string line_plot(const std::string& title, const std::vector<Series>& series,
                      const std::string& x_label, const std::string& y_label) {
  double x_lo = 0.0, x_hi = 1.0;
  bool first = true;
  for (const auto& s : series) {
    for (const double x : s.xs) {
      if (first) {
        x_lo = x_hi = x;
        first = false;
      }
      x_lo = std::min(x_lo, x);
      x_hi = std::max(x_hi, x);
    }
  }
  if (x_hi <= x_lo) x_hi = x_lo + 1.0;
  const double y_lo = 0.0, y_hi = 1.0;

  std::ostringstream out;
  svg_header(out, title);
  svg_axes(out, x_lo, x_hi, y_lo, y_hi, x_label, y_label);
  int color = 0;
  int legend_y = kMarginTop + 10;
  for (const auto& s : series) {
    out << "<polyline fill=\"none\" stroke=\"" << kColors[color % 4] << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      out << map_x(s.xs[i], x_lo, x_hi) << "," << map_y(std::clamp(s.ys[i], y_lo, y_hi), y_lo, y_hi)
          << " ";
    }
    out << "\"/>\n";
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      out << "<circle cx=\"" << map_x(s.xs[i], x_lo, x_hi) << "\" cy=\""
          << map_y(std::clamp(s.ys[i], y_lo, y_hi), y_lo, y_hi) << "\" r=\"3\" fill=\""
          << kColors[color % 4] << "\"/>\n";
    }
    out << "<rect x=\"" << kWidth - 190 << "\" y=\"" << legend_y - 9 << "\" width=\"12\" height=\"12\" fill=\""
        << kColors[color % 4] << "\"/>\n";
    out << "<text x=\"" << kWidth - 172 << "\" y=\"" << legend_y + 2
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.name << "</text>\n";
    legend_y += 18;
    ++color;
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace

std::string sweep_csv(const SweepData& data) {
  std::ostringstream out;
  out << "sigma,seed,method,precision,recall,f1,correct_matches,wrong_matches,missed,"
         "persisting_observed,precision_defaulted\n";
  for (const auto& r : data.rows) {
    out << fmt(r.sigma) << "," << r.seed << "," << r.method << "," << fmt(r.result.precision) << ","
        << fmt(r.result.recall) << "," << fmt(r.result.f1) << "," << r.result.correct_matches << ","
        << r.result.wrong_matches << "," << r.result.missed << "," << r.result.persisting_observed
        << "," << (r.result.precision_defaulted ? 1 : 0) << "\n";
  }
  return out.str();
}

namespace {

std::map<std::string, std::map<double, std::pair<double, int>>> f1_by_method(const SweepData& data) {
  std::map<std::string, std::map<double, std::pair<double, int>>> acc;
  for (const auto& r : data.rows) {
    auto& cell = acc[r.method][r.sigma];
    cell.first += r.result.f1;
    cell.second += 1;
  }
  return acc;
}

}  // namespace

std::string summary_csv(const SweepData& data) {
  std::ostringstream out;
  out << "sigma,method,mean_f1,runs\n";
  for (const auto& [method, by_sigma] : f1_by_method(data)) {
    for (const auto& [sigma, cell] : by_sigma) {
      out << fmt(sigma) << "," << method << "," << fmt(cell.first / cell.second) << ","
          << cell.second << "\n";
    }
  }
  return out.str();
}

std::string f1_svg(const SweepData& data) {
  std::vector<Series> series;
  for (const auto& [method, by_sigma] : f1_by_method(data)) {
    Series s;
    s.name = method;
    for (const auto& [sigma, cell] : by_sigma) {
      s.xs.push_back(sigma);
      s.ys.push_back(cell.first / cell.second);
    }
    series.push_back(std::move(s));
  }
  return line_plot("Cross-season association F1 vs pose noise", series, "pose noise sigma (m)",
                   "mean F1");
}

std::string histogram_svg(const SweepData& data) {
  // Shared bins across methods so the histograms are comparable.
  double hi = 0.0;
  for (const auto& [method, values] : data.final_sigma_distances) {
    for (const double v : values) hi = std::max(hi, v);
  }
  if (hi <= 0.0) hi = 1.0;
  const int n_bins = 20;

  std::ostringstream out;
  svg_header(out, "Match Mahalanobis distances (highest sweep sigma)");
  double max_count = 1.0;
  std::map<std::string, std::vector<int>> histos;
  for (const auto& [method, values] : data.final_sigma_distances) {
    auto& bins = histos[method];
    bins.assign(n_bins, 0);
    for (const double v : values) {
      const int b = std::min(n_bins - 1, static_cast<int>(v / hi * n_bins));
      bins[b] += 1;
    }
    for (const int c : bins) max_count = std::max(max_count, static_cast<double>(c));
  }
  svg_axes(out, 0.0, hi, 0.0, max_count, "mahalanobis distance", "matches");
  int color = 0;
  int legend_y = kMarginTop + 10;
  const double plot_w = kWidth - kMarginLeft - kMarginRight;
  for (const auto& [method, bins] : histos) {
    const double bw = plot_w / n_bins;
    for (int b = 0; b < n_bins; ++b) {
      if (bins[b] == 0) continue;
      const double x = kMarginLeft + b * bw + color * bw * 0.45;
      const double y = map_y(bins[b], 0.0, max_count);
      out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << bw * 0.45 << "\" height=\""
          << (kHeight - kMarginBottom) - y << "\" fill=\"" << kColors[color % 4]
          << "\" fill-opacity=\"0.7\"/>\n";
    }
    out << "<rect x=\"" << kWidth - 190 << "\" y=\"" << legend_y - 9
        << "\" width=\"12\" height=\"12\" fill=\"" << kColors[color % 4] << "\"/>\n";
    out << "<text x=\"" << kWidth - 172 << "\" y=\"" << legend_y + 2
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << method << "</text>\n";
    legend_y += 18;
    ++color;
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace rangemap::report
