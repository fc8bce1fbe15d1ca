#include "hgcl/serialize.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "hgcl/errors.hpp"

namespace hgcl {
namespace {

constexpr std::uint64_t kMaxRank = 16;

void put_u64(std::ostream& os, std::uint64_t v) {
  std::array<char, 8> buf{};
  for (int i = 0; i < 8; ++i) buf[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(buf.data(), 8);
}

std::uint64_t get_u64(std::istream& is) {
  std::array<unsigned char, 8> buf{};
  if (!is.read(reinterpret_cast<char*>(buf.data()), 8)) {
    throw ValidationError("tensor binary: truncated stream");
  }
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | buf[static_cast<std::size_t>(i)];
  return v;
}

}  // namespace

void write_binary(std::ostream& os, const Tensor& t) {
  put_u64(os, t.rank());
  for (std::size_t e : t.shape()) put_u64(os, e);
  for (double v : t.data()) put_u64(os, std::bit_cast<std::uint64_t>(v));
  if (!os) throw std::runtime_error("tensor binary: write failed");
}

Tensor read_binary(std::istream& is) {
  const std::uint64_t rank = get_u64(is);
  if (rank > kMaxRank) throw ValidationError("tensor binary: implausible rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& e : shape) e = get_u64(is);
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) v = std::bit_cast<double>(get_u64(is));
  return Tensor(std::move(shape), std::move(data));
}

void save_binary(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_binary(os, t);
}

Tensor load_binary(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_binary(is);
}

std::string format_double(double v) {
  std::array<char, 40> buf{};
  std::snprintf(buf.data(), buf.size(), "%.17g", v);
  return buf.data();
}

void write_csv(std::ostream& os, const Tensor& t) {
  require_matrix(t, "write_csv");
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) {
      if (j) os << ',';
      os << format_double(t(i, j));
    }
    os << '\n';
  }
}

Tensor read_csv(std::istream& is) {
  std::vector<double> values;
  std::size_t rows = 0, cols = 0;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::size_t count = 0;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ValidationError("csv: bad number '" + cell + "' on row " + std::to_string(rows + 1));
      }
      ++count;
    }
    if (rows == 0) cols = count;
    if (count != cols) throw ValidationError("csv: ragged row " + std::to_string(rows + 1));
    ++rows;
  }
  return Tensor({rows, cols}, std::move(values));
}

void save_csv(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_csv(os, t);
}

Tensor load_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_csv(is);
}

}  // namespace hgcl
