/// @file  random.hpp
/// @brief Counter-based deterministic random streams.
///
/// Every random draw in the library is a pure function of (key, counter), so
/// results never depend on thread scheduling or on the standard library's
/// distribution implementations.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace simalign {

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Derives a stream key from a seed and any number of tags.
std::uint64_t derive_key(std::uint64_t seed, std::uint64_t tag) noexcept;
std::uint64_t derive_key(std::uint64_t seed, std::uint64_t tag1, std::uint64_t tag2) noexcept;

/// Sequential stream over counters 0, 1, 2, ... of a fixed key.
class RandomStream {
public:
	explicit RandomStream(std::uint64_t key) noexcept : key_(key) {}

	std::uint64_t next_u64() noexcept;
	/// Uniform on [0, 1) with 53 random bits.
	double uniform() noexcept;
	/// Uniform integer on [0, bound); bound must be positive.
	std::uint64_t below(std::uint64_t bound) noexcept;
	/// Standard normal via Box-Muller.
	double normal() noexcept;

private:
	std::uint64_t key_;
	std::uint64_t counter_ = 0;
	double spare_normal_ = 0.0;
	bool has_spare_ = false;
};

/// Uniform on [0, 1) for a single (key, counter) cell.
double uniform_at(std::uint64_t key, std::uint64_t counter) noexcept;

/// Fisher-Yates permutation of 0..n-1 drawn from `key`.
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t key);

} // namespace simalign
