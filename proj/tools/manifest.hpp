#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace simalign::cli {

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Record of one invocation, written as JSON beside the primary output.
struct RunManifest {
	std::string subcommand;
	std::vector<std::string> argv;
	std::map<std::string, std::string> flags;
	std::map<std::string, std::string> input_digests;
	std::vector<std::string> outputs;

	/// Digest of the exact bytes at `path` as read.
	void add_input(const std::filesystem::path& path);
	void write(const std::filesystem::path& path) const;
};

/// Removes every registered output unless commit() is called.
class OutputGuard {
public:
	OutputGuard() = default;
	OutputGuard(const OutputGuard&) = delete;
	OutputGuard& operator=(const OutputGuard&) = delete;
	~OutputGuard();

	void add(const std::filesystem::path& path) { paths_.push_back(path); }
	void commit() noexcept { committed_ = true; }

private:
	std::vector<std::filesystem::path> paths_;
	bool committed_ = false;
};

} // namespace simalign::cli
