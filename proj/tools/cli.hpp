#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace lfd::cli {

/// Runs one command line (without the program name). Returns the process exit
/// code; failures print a JSON error report to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lfd::cli
