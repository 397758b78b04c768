/// @file  error.hpp
/// @brief Exception hierarchy shared by every simalign module.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace simalign {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

/// A value violated a documented invariant. `field` names the offending field.
class ValidationError : public Error {
public:
	ValidationError(std::string field, const std::string& message)
		: Error(field + ": " + message), field_(std::move(field)) {}

	const std::string& field() const noexcept { return field_; }

private:
	std::string field_;
};

/// Malformed input file. `line` is 1-based; 0 when the error is not tied to a line.
class ParseError : public Error {
public:
	ParseError(std::string path, std::size_t line, const std::string& message)
		: Error(path + (line ? ":" + std::to_string(line) : std::string{}) + ": " + message),
		  path_(std::move(path)), line_(line) {}

	const std::string& path() const noexcept { return path_; }
	std::size_t line() const noexcept { return line_; }

private:
	std::string path_;
	std::size_t line_;
};

/// Vector or matrix sizes disagree.
class DimensionError : public Error {
public:
	using Error::Error;
};

/// Requested rank exceeds what the data supports.
class RankError : public Error {
public:
	RankError(std::size_t requested, std::size_t achievable)
		: Error("requested " + std::to_string(requested) + " components but corpus rank is " +
		        std::to_string(achievable)),
		  requested_(requested), achievable_(achievable) {}

	std::size_t requested() const noexcept { return requested_; }
	std::size_t achievable() const noexcept { return achievable_; }

private:
	std::size_t requested_;
	std::size_t achievable_;
};

/// Training produced a non-finite loss or parameter.
class DivergenceError : public Error {
public:
	explicit DivergenceError(std::size_t epoch)
		: Error("training diverged at epoch " + std::to_string(epoch) +
		        " (non-finite loss or parameters); try a smaller learning rate"),
		  epoch_(epoch) {}

	std::size_t epoch() const noexcept { return epoch_; }

private:
	std::size_t epoch_;
};

} // namespace simalign
