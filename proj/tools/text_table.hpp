#pragma once

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace sensekit::cli {

/// Minimal aligned-column table for human-readable reports.
class TextTable {
 public:
  explicit TextTable(std::vector<std::string> headers)
      : headers_(std::move(headers)) {}

  void add_row(std::vector<std::string> cells) { rows_.push_back(std::move(cells)); }

  static std::string num(double v, int precision = 4) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(precision) << v;
    return out.str();
  }

  std::string str() const {
    std::vector<std::size_t> widths(headers_.size(), 0);
    for (std::size_t c = 0; c < headers_.size(); ++c) widths[c] = headers_[c].size();
    for (const auto& row : rows_)
      for (std::size_t c = 0; c < row.size() && c < widths.size(); ++c)
        widths[c] = std::max(widths[c], row[c].size());

    std::ostringstream out;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t c = 0; c < widths.size(); ++c) {
        const std::string& cell = c < cells.size() ? cells[c] : empty_;
        out << (c ? "  " : "") << cell
            << std::string(widths[c] - std::min(widths[c], cell.size()), ' ');
      }
      out << '\n';
    };
    line(headers_);
    std::size_t total = widths.empty() ? 0 : 2 * (widths.size() - 1);
    for (auto w : widths) total += w;
    out << std::string(total, '-') << '\n';
    for (const auto& row : rows_) line(row);
    return out.str();
  }

 private:
  std::vector<std::string> headers_;
  std::vector<std::vector<std::string>> rows_;
  inline static const std::string empty_;
};

}  // namespace sensekit::cli
