#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace msdetr {

/// Entry point behind the `msdetr` executable. `args` excludes the program
/// name. Returns 0 on success, 1 on validation errors (bad input, config or
/// flags), 2 on other runtime errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace msdetr
