#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace gtgrn::graphio {

/// Whole-file read. Throws IoError.
std::string read_text_file(const std::string& path);

/// Writes to "<path>.tmp" and renames over `path`, so readers never observe
/// a truncated file. Throws IoError.
void write_text_atomic(const std::string& path, std::string_view content);

/// Splits on runs of spaces/tabs; strips a trailing '\r'.
std::vector<std::string_view> split_fields(std::string_view line);

/// Shortest text that parses back to the identical double.
std::string format_double(double v);

/// Strict double parse of the whole field. Throws ParseError naming `where`.
double parse_double(std::string_view field, std::string_view where);

}  // namespace gtgrn::graphio
