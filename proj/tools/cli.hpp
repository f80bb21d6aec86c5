#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace asil::cli {

// Returns the process exit code: 0 ok, 1 runtime failure, 2 usage error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace asil::cli
