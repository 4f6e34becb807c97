#pragma once

#include <string>
#include <vector>

namespace bevworld::run {

/// Writes a CSV with a header row; all cells are preformatted strings.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

struct BarSeries {
  std::string name;
  std::vector<double> values;  // one per label
};

/// Self-contained grouped bar chart (no plotting dependency).
void write_svg_barchart(const std::string& path, const std::string& title,
                        const std::vector<std::string>& labels,
                        const std::vector<BarSeries>& series);

/// Scans a finished run directory and writes report.txt indexing every CSV
/// and SVG artifact (recursive). Returns the report path.
std::string render_report(const std::string& run_dir);

std::string format_double(double v);

}  // namespace bevworld::run
