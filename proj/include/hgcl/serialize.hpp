#pragma once

#include <filesystem>
#include <iosfwd>

#include "hgcl/tensor.hpp"

namespace hgcl {

// Flat binary layout, all fields little-endian:
//   u64 rank, u64 extents[rank], f64 entries[product(extents)]
void write_binary(std::ostream& os, const Tensor& t);
Tensor read_binary(std::istream& is);

void save_binary(const std::filesystem::path& path, const Tensor& t);
Tensor load_binary(const std::filesystem::path& path);

/// One line per row, comma-separated, 17 significant digits. Matrices only.
void write_csv(std::ostream& os, const Tensor& t);
Tensor read_csv(std::istream& is);

void save_csv(const std::filesystem::path& path, const Tensor& t);
Tensor load_csv(const std::filesystem::path& path);

/// `%.17g` rendering used by the CSV writer; round-trips every double.
std::string format_double(double v);

}  // namespace hgcl
