#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "hgcl/tensor.hpp"

namespace hgcl {

/// fan_in x fan_out matrix ~ U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

Tensor normal_tensor(const Shape& shape, double stddev, std::mt19937_64& rng);

/// Independent stream seed for a named consumer of the root seed.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream);

}  // namespace hgcl
