#include "vogcl/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "vogcl/errors.hpp"

namespace vogcl {

std::string format_double(double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

std::size_t CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw DataError("column '" + std::string(name) + "' missing from " + source);
}

std::vector<std::string> split(std::string_view line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            break;
        }
        out.emplace_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFileError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("write failed for " + path.string());
}

CsvTable read_csv(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    CsvTable table;
    table.source = path.string();
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split(line, ',');
        if (first) {
            if (!fields.empty() && fields[0].rfind("\xEF\xBB\xBF", 0) == 0) fields[0].erase(0, 3);
            table.header = std::move(fields);
            first = false;
            continue;
        }
        if (fields.size() != table.header.size()) {
            throw DataError(path.string() + ": row has " + std::to_string(fields.size()) + " fields, header has " +
                            std::to_string(table.header.size()));
        }
        table.rows.push_back(std::move(fields));
    }
    if (first) throw DataError(path.string() + " is empty (no header row)");
    return table;
}

double parse_double(std::string_view text, std::string_view context) {
    // std::from_chars for double is unavailable in older libstdc++ builds.
    std::string s(text);
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) {
        throw DataError("cannot parse '" + s + "' as a number (" + std::string(context) + ")");
    }
    return v;
}

std::uint64_t parse_uint(std::string_view text, std::string_view context) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
        throw DataError("cannot parse '" + std::string(text) + "' as a non-negative integer (" + std::string(context) +
                        ")");
    }
    return v;
}

std::pair<std::size_t, std::size_t> line_and_column(std::string_view text, std::size_t offset) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

}  // namespace vogcl
