#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace morphogen {

/// Runs the `morphogen` command line (args excludes the program name).
/// Returns 0 on success, 1 on usage errors and 2 on data or model errors.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace morphogen
