#include "commands.hpp"

#include <simalign/error.hpp>

#include <iostream>

int main(int argc, char** argv) {
	CLI::App app{"simalign: learn linear transforms of deep embeddings from human triplet judgments"};
	app.set_version_flag("--version", std::string(SIMALIGN_VERSION));
	app.require_subcommand(1);

	std::vector<std::string> args(argv + 1, argv + argc);
	simalign::cli::register_commands(app, args);

	try {
		app.parse(argc, argv);
	} catch (const CLI::ParseError& e) {
		return app.exit(e);
	} catch (const simalign::DivergenceError& e) {
		std::cerr << "error: " << e.what() << '\n';
		return 3;
	} catch (const std::exception& e) {
		std::cerr << "error: " << e.what() << '\n';
		return 1;
	}
	return 0;
}
