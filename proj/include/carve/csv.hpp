#pragma once

#include <iosfwd>
#include <string>

#include "carve/types.hpp"

namespace carve {

/// Reads study data from CSV with header `y,d1..ds,x1..xp` (one observation
/// per row, decimal floats). Ragged or non-numeric rows are rejected.
Dataset read_dataset_csv(std::istream& in, const std::string& study_id);
Dataset read_dataset_csv_file(const std::string& path);

/// Writes the same layout, rendering each value with its shortest
/// round-trip decimal representation.
void write_dataset_csv(std::ostream& out, const Dataset& data);
void write_dataset_csv_file(const std::string& path, const Dataset& data);

/// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double value);

}  // namespace carve
