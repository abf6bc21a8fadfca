#ifndef OPVI_CSV_HPP
#define OPVI_CSV_HPP

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace opvi::csv {

/// Shortest decimal form that parses back to the same double.
std::string number(double value);

/// Quotes a field if it contains a comma, quote or newline.
std::string field(std::string_view text);

/// Joins already-formatted fields with commas.
std::string row(const std::vector<std::string>& fields);

/// Splits one CSV line (RFC 4180 quoting, no embedded newlines).
std::vector<std::string> split(std::string_view line);

/// Opens `path` for writing, throwing Error naming the path on failure.
std::ofstream open_for_write(const std::filesystem::path& path, bool append = false);

} // namespace opvi::csv

#endif // OPVI_CSV_HPP
