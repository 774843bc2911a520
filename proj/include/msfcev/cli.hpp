#pragma once

// Command-line front end: price, density, curve, simulate, verify,
// calibrate, compare. Data goes to `out` (or --out), diagnostics to `err`.
//
// Exit codes: 0 success; 1 usage, parse or domain error (one line on `err`,
// "error: <kind>: <message>"); 2 partial failure (a verify check failed, a
// fit did not converge, or a compared model failed).

#include <iosfwd>
#include <string>
#include <vector>

namespace msfcev::cli {

// args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace msfcev::cli
