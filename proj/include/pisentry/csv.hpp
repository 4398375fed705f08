#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace pisentry::csv {

// RFC 4180: quote fields containing comma, quote or newline.
std::string escape(std::string_view field);

void write_row(std::ostream& out, const std::vector<std::string>& fields);

// Full-file reader; handles quoted fields, embedded newlines and CRLF rows.
std::vector<std::vector<std::string>> read(std::istream& in);

// Shortest round-trip decimal form ("1", "0.25", "1e+20").
std::string format_double(double v);

double parse_double(std::string_view s); // throws ParseError

} // namespace pisentry::csv
