#pragma once

#include <CLI11.hpp>

#include <string>
#include <vector>

namespace simalign::cli {

/// Registers every subcommand on `app`. `argv` is echoed into run manifests.
void register_commands(CLI::App& app, const std::vector<std::string>& argv);

} // namespace simalign::cli
