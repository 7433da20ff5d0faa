#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace psvf::csv {

// A header-indexed table read from a delimited text file. Quoted fields
// follow RFC 4180 (doubled quotes inside quotes, embedded delimiters and
// newlines allowed).
class Table {
 public:
  Table() = default;
  Table(std::vector<std::string> header, std::vector<std::vector<std::string>> rows);

  const std::vector<std::string>& header() const { return header_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }

  std::optional<std::size_t> column(std::string_view name) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// Throws ParseError on ragged rows or an unterminated quote. A leading UTF-8
// BOM is skipped.
Table parse(std::string_view text, const std::string& source_name, char delim = ',');
Table read_file(const std::string& path, char delim = ',');

std::string escape(std::string_view field, char delim = ',');
void write_row(std::ostream& os, const std::vector<std::string>& fields, char delim = ',');

}  // namespace psvf::csv
