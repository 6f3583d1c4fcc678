#include "kcluster/csv.hpp"

#include "kcluster/error.hpp"

namespace kcluster::csv {

std::optional<Row> read_row(std::istream& in, std::size_t& line) {
  if (in.peek() == std::char_traits<char>::eof()) return std::nullopt;

  Row row;
  std::string field;
  bool quoted = false;
  bool field_was_quoted = false;
  ++line;
  for (;;) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) {
      if (quoted) throw ParseError("csv", line, "unterminated quoted field");
      break;
    }
    const char ch = static_cast<char>(c);
    if (quoted) {
      if (ch == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get();
        } else {
          quoted = false;
        }
      } else {
        if (ch == '\n') ++line;
        field.push_back(ch);
      }
      continue;
    }
    if (ch == '"' && field.empty() && !field_was_quoted) {
      quoted = true;
      field_was_quoted = true;
    } else if (ch == ',') {
      row.push_back(std::move(field));
      field.clear();
      field_was_quoted = false;
    } else if (ch == '\n') {
      break;
    } else if (ch == '\r') {
      if (in.peek() == '\n') in.get();
      break;
    } else {
      field.push_back(ch);
    }
  }
  row.push_back(std::move(field));
  return row;
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void write_row(std::ostream& out, const Row& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out << ',';
    out << escape(row[i]);
  }
  out << '\n';
}

void expect_header(std::istream& in, std::size_t& line, const Row& expected,
                   const std::string& source) {
  auto header = read_row(in, line);
  if (!header) throw ParseError(source, 1, "empty file, expected a header row");
  if (*header != expected) {
    std::string want;
    for (const auto& h : expected) want += (want.empty() ? "" : ",") + h;
    throw ParseError(source, line, "bad header, expected '" + want + "'");
  }
}

}  // namespace kcluster::csv
