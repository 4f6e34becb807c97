#include "bevworld/run/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace bevworld::run {

namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write csv: " + path);
  for (size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
}

void write_svg_barchart(const std::string& path, const std::string& title,
                        const std::vector<std::string>& labels,
                        const std::vector<BarSeries>& series) {
  const int width = 720, height = 400;
  const int margin_l = 70, margin_b = 60, margin_t = 50, margin_r = 20;
  const double plot_w = width - margin_l - margin_r;
  const double plot_h = height - margin_t - margin_b;
  double vmax = 1e-12;
  for (const auto& s : series) {
    for (double v : s.values) vmax = std::max(vmax, v);
  }
  vmax *= 1.15;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write svg: " + path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
      << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << width / 2 << "' y='24' text-anchor='middle' font-size='16' "
      << "font-family='sans-serif'>" << title << "</text>\n";
  // Axes.
  out << "<line x1='" << margin_l << "' y1='" << margin_t << "' x2='" << margin_l << "' y2='"
      << margin_t + plot_h << "' stroke='black'/>\n";
  out << "<line x1='" << margin_l << "' y1='" << margin_t + plot_h << "' x2='"
      << margin_l + plot_w << "' y2='" << margin_t + plot_h << "' stroke='black'/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double v = vmax * tick / 4;
    const double y = margin_t + plot_h * (1.0 - static_cast<double>(tick) / 4);
    out << "<text x='" << margin_l - 6 << "' y='" << y + 4
        << "' text-anchor='end' font-size='11' font-family='sans-serif'>" << format_double(v)
        << "</text>\n";
  }
  const char* colors[] = {"#4878d0", "#ee854a", "#6acc64", "#d65f5f", "#956cb4", "#8c613c"};
  const size_t n_groups = labels.size();
  const size_t n_series = series.size();
  const double group_w = plot_w / std::max<size_t>(1, n_groups);
  const double bar_w = group_w * 0.8 / std::max<size_t>(1, n_series);
  for (size_t g = 0; g < n_groups; ++g) {
    for (size_t s = 0; s < n_series; ++s) {
      if (g >= series[s].values.size()) continue;
      const double v = series[s].values[g];
      const double h = std::max(0.0, v) / vmax * plot_h;
      const double x = margin_l + g * group_w + group_w * 0.1 + s * bar_w;
      out << "<rect x='" << x << "' y='" << margin_t + plot_h - h << "' width='" << bar_w * 0.92
          << "' height='" << h << "' fill='" << colors[s % 6] << "'/>\n";
    }
    out << "<text x='" << margin_l + g * group_w + group_w / 2 << "' y='"
        << margin_t + plot_h + 18 << "' text-anchor='middle' font-size='11' "
        << "font-family='sans-serif'>" << labels[g] << "</text>\n";
  }
  for (size_t s = 0; s < n_series; ++s) {
    const double x = margin_l + s * 150.0;
    out << "<rect x='" << x << "' y='" << height - 24 << "' width='12' height='12' fill='"
        << colors[s % 6] << "'/>\n";
    out << "<text x='" << x + 16 << "' y='" << height - 13
        << "' font-size='12' font-family='sans-serif'>" << series[s].name << "</text>\n";
  }
  out << "</svg>\n";
}

std::string render_report(const std::string& run_dir) {
  if (!fs::exists(run_dir)) throw std::runtime_error("no such run directory: " + run_dir);
  std::vector<std::string> csvs, svgs, other;
  for (const auto& entry : fs::recursive_directory_iterator(run_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    const std::string rel = fs::relative(entry.path(), run_dir).string();
    if (ext == ".csv") {
      csvs.push_back(rel);
    } else if (ext == ".svg") {
      svgs.push_back(rel);
    } else if (entry.path().filename() == "manifest.txt") {
      other.push_back(rel);
    }
  }
  std::sort(csvs.begin(), csvs.end());
  std::sort(svgs.begin(), svgs.end());
  std::sort(other.begin(), other.end());
  const std::string report_path = (fs::path(run_dir) / "report.txt").string();
  std::ofstream out(report_path);
  if (!out) throw std::runtime_error("cannot write report: " + report_path);
  out << "run artifacts under " << run_dir << "\n\n";
  out << "manifests:\n";
  for (const auto& p : other) out << "  " << p << "\n";
  out << "\ncsv:\n";
  for (const auto& p : csvs) out << "  " << p << "\n";
  out << "\nsvg:\n";
  for (const auto& p : svgs) out << "  " << p << "\n";
  return report_path;
}

}  // namespace bevworld::run
