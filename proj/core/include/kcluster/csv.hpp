#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace kcluster::csv {

using Row = std::vector<std::string>;

// Minimal RFC 4180 reader: quoted fields may contain separators, doubled
// quotes and newlines. Returns nullopt at end of input. `line` is advanced
// by the number of physical lines consumed.
std::optional<Row> read_row(std::istream& in, std::size_t& line);

// Quotes a field only when it contains a comma, quote, CR or LF.
std::string escape(std::string_view field);

void write_row(std::ostream& out, const Row& row);

// Reads the header row and checks it matches `expected` exactly.
void expect_header(std::istream& in, std::size_t& line, const Row& expected,
                   const std::string& source);

}  // namespace kcluster::csv
