#pragma once

#include <istream>
#include <string>
#include <vector>

namespace icleval::csv {

struct Row {
  std::size_t line = 0;  // 1-based line where the record starts
  std::vector<std::string> cells;
};

// RFC 4180 reader: quoted cells may contain commas, doubled quotes and newlines.
// Throws DataError on an unterminated quote.
std::vector<Row> read_all(std::istream& in);

}  // namespace icleval::csv
