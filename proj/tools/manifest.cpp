#include "manifest.hpp"

#include <simalign/error.hpp>

#include <json.hpp>
#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <memory>

namespace simalign::cli {

std::string sha256_file(const std::filesystem::path& path) {
	std::ifstream in(path, std::ios::binary);
	if (!in)
		throw Error(path.string() + ": cannot open file for hashing");

	std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
	if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
		throw Error("SHA-256 initialisation failed");
	std::array<char, 1 << 16> buf{};
	while (in) {
		in.read(buf.data(), buf.size());
		if (in.gcount() > 0)
			EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
	}
	std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
	unsigned int len = 0;
	EVP_DigestFinal_ex(ctx.get(), digest.data(), &len);

	static constexpr char kHex[] = "0123456789abcdef";
	std::string out;
	for (unsigned int i = 0; i < len; ++i) {
		out += kHex[digest[i] >> 4];
		out += kHex[digest[i] & 0xf];
	}
	return out;
}

void RunManifest::add_input(const std::filesystem::path& path) {
	input_digests[path.string()] = sha256_file(path);
}

void RunManifest::write(const std::filesystem::path& path) const {
	nlohmann::ordered_json j;
	j["tool"] = "simalign";
	j["version"] = SIMALIGN_VERSION;
	j["subcommand"] = subcommand;
	j["argv"] = argv;
	j["flags"] = flags;
	j["input_sha256"] = input_digests;
	j["outputs"] = outputs;
	std::ofstream out(path, std::ios::binary | std::ios::trunc);
	if (!out)
		throw Error(path.string() + ": cannot write manifest");
	out << j.dump(2) << '\n';
}

OutputGuard::~OutputGuard() {
	if (committed_)
		return;
	for (const auto& p : paths_) {
		std::error_code ec;
		std::filesystem::remove(p, ec);
	}
}

} // namespace simalign::cli
