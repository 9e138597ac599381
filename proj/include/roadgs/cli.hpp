#pragma once

#include <string>
#include <vector>

namespace roadgs {

/// Entry point shared by the binary and the tests. Subcommands: gen, render,
/// opt, fit, eval. Returns the process exit code; diagnostics go to the
/// provided streams.
int run_cli(const std::vector<std::string>& args, std::string* out = nullptr,
            std::string* err = nullptr);

}  // namespace roadgs
