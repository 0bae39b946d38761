#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace vogcl {

// Shortest round-trippable form is not needed; we always print 17
// significant digits so files are byte-stable and lossless.
std::string format_double(double value);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Index of a header column; throws DataError naming the file when absent.
    std::size_t column(std::string_view name) const;
    std::string source;
};

// Plain comma-separated file (no quoting); blank lines are skipped and
// CRLF endings accepted. Throws MissingFileError if the file is absent.
CsvTable read_csv(const std::filesystem::path& path);

std::vector<std::string> split(std::string_view line, char sep);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

// 1-based line and column of a byte offset, for parse error messages.
std::pair<std::size_t, std::size_t> line_and_column(std::string_view text, std::size_t offset);

double parse_double(std::string_view text, std::string_view context);
std::uint64_t parse_uint(std::string_view text, std::string_view context);

}  // namespace vogcl
