// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <initializer_list>
#include <string>
#include <variant>
#include <vector>

#include "noisepref/experiments/text.hpp"

namespace noisepref {

/// Comma-separated table with a header row; numbers use '.' regardless of locale.
class CsvTable {
 public:
  using Cell = std::variant<double, long long, std::string>;

  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(std::vector<Cell> row) {
    if (row.size() != header_.size()) throw std::logic_error("csv row width does not match header");
    rows_.push_back(std::move(row));
  }

  std::size_t rows() const { return rows_.size(); }

  std::string str() const {
    std::string out;
    append_line(out, header_);
    for (const auto& row : rows_) {
      std::vector<std::string> cells;
      cells.reserve(row.size());
      for (const auto& c : row) {
        if (const auto* d = std::get_if<double>(&c))
          cells.push_back(format_double(*d));
        else if (const auto* i = std::get_if<long long>(&c))
          cells.push_back(std::to_string(*i));
        else
          cells.push_back(std::get<std::string>(c));
      }
      append_line(out, cells);
    }
    return out;
  }

 private:
  static void append_line(std::string& out, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  }

  std::vector<std::string> header_;
  std::vector<std::vector<Cell>> rows_;
};

}  // namespace noisepref
