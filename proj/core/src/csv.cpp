#include "psvf/csv.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include "psvf/error.hpp"

namespace psvf::csv {

Table::Table(std::vector<std::string> header,
             std::vector<std::vector<std::string>> rows)
    : header_(std::move(header)), rows_(std::move(rows)) {}

std::optional<std::size_t> Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header_.size(); ++i) {
    if (header_[i] == name) return i;
  }
  return std::nullopt;
}

Table parse(std::string_view text, const std::string& source_name, char delim) {
  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
      static_cast<unsigned char>(text[1]) == 0xBB &&
      static_cast<unsigned char>(text[2]) == 0xBF) {
    text.remove_prefix(3);
  }

  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;

  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    // A line holding a single empty field is a blank line.
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == delim) {
      end_field();
    } else if (c == '\r') {
      // tolerated before \n
    } else if (c == '\n') {
      end_record();
      ++line;
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) throw ParseError(source_name, line, "", "unterminated quoted field");
  if (field_started || !record.empty()) end_record();

  if (records.empty()) throw ParseError(source_name, 1, "", "missing header row");
  std::vector<std::string> header = std::move(records.front());
  for (auto& h : header) {
    while (!h.empty() && (h.back() == ' ' || h.back() == '\t')) h.pop_back();
    while (!h.empty() && (h.front() == ' ' || h.front() == '\t')) h.erase(h.begin());
  }
  std::vector<std::vector<std::string>> rows(std::make_move_iterator(records.begin() + 1),
                                             std::make_move_iterator(records.end()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != header.size()) {
      throw ParseError(source_name, r + 2, "",
                       "expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(rows[r].size()));
    }
  }
  return Table(std::move(header), std::move(rows));
}

Table read_file(const std::string& path, char delim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path, delim);
}

std::string escape(std::string_view field, char delim) {
  const bool needs_quotes = field.find_first_of(std::string{delim, '"', '\n', '\r'}) !=
                            std::string_view::npos;
  if (!needs_quotes) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void write_row(std::ostream& os, const std::vector<std::string>& fields, char delim) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) os << delim;
    os << escape(fields[i], delim);
  }
  os << '\n';
}

}  // namespace psvf::csv
