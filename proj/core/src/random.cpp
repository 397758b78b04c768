#include <simalign/random.hpp>

#include <cmath>
#include <numbers>
#include <numeric>

namespace simalign {

std::uint64_t mix64(std::uint64_t x) noexcept {
	x += 0x9e3779b97f4a7c15ULL;
	x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
	x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
	return x ^ (x >> 31);
}

std::uint64_t derive_key(std::uint64_t seed, std::uint64_t tag) noexcept {
	return mix64(mix64(seed) ^ (tag * 0xd1342543de82ef95ULL + 1));
}

std::uint64_t derive_key(std::uint64_t seed, std::uint64_t tag1, std::uint64_t tag2) noexcept {
	return derive_key(derive_key(seed, tag1), tag2);
}

static double to_unit(std::uint64_t bits) noexcept {
	return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

std::uint64_t RandomStream::next_u64() noexcept {
	return mix64(key_ ^ mix64(counter_++));
}

double RandomStream::uniform() noexcept { return to_unit(next_u64()); }

std::uint64_t RandomStream::below(std::uint64_t bound) noexcept {
	// Reject the low remainder so every residue is equally likely.
	const std::uint64_t threshold = -bound % bound;
	std::uint64_t x = next_u64();
	while (x < threshold)
		x = next_u64();
	return x % bound;
}

double RandomStream::normal() noexcept {
	if (has_spare_) {
		has_spare_ = false;
		return spare_normal_;
	}
	double u1 = uniform();
	while (u1 <= 0.0)
		u1 = uniform();
	const double u2 = uniform();
	const double radius = std::sqrt(-2.0 * std::log(u1));
	const double angle = 2.0 * std::numbers::pi * u2;
	spare_normal_ = radius * std::sin(angle);
	has_spare_ = true;
	return radius * std::cos(angle);
}

double uniform_at(std::uint64_t key, std::uint64_t counter) noexcept {
	return to_unit(mix64(key ^ mix64(counter)));
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t key) {
	std::vector<std::size_t> out(n);
	std::iota(out.begin(), out.end(), std::size_t{0});
	RandomStream rng(key);
	for (std::size_t i = n; i > 1; --i) {
		const auto j = static_cast<std::size_t>(rng.below(i));
		std::swap(out[i - 1], out[j]);
	}
	return out;
}

} // namespace simalign
