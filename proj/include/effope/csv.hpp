#pragma once

#include <string>
#include <vector>

namespace effope {

/// Shortest decimal form that parses back to the same double.
std::string format_double(double x);
double parse_double(const std::string& text);

std::string csv_row(const std::vector<std::string>& fields);
std::vector<std::string> split_csv_line(const std::string& line);

std::string read_text_file(const std::string& path);

/// Write to a sibling temporary file, then rename over `path`.
void write_file_atomic(const std::string& path, const std::string& content);

} // namespace effope
