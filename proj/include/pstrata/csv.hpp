#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pstrata/types.hpp"

namespace pstrata {

// CSV schema (header required): z,s,y,a_1..a_p,c_1..c_q
// Labeled files additionally carry g,y0,y1 at the end.
//
// By default columns named a_* go to A and c_* to C; an explicit partition
// by column name can be supplied instead (sets must be disjoint and cover
// all non-reserved columns).
struct CsvOptions {
  std::vector<std::string> a_cols;  // empty -> prefix convention
  std::vector<std::string> c_cols;
};

Dataset read_dataset_csv(const std::string& path, const CsvOptions& opt = {});
void write_dataset_csv(const std::string& path, const Dataset& d);

std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace pstrata
