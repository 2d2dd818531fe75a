#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace halunet {

// Runs the `halunet` command line. Returns the process exit code:
// 0 success, 1 runtime/validation failure, 2 usage error.
// `in` is read when a command is given "-" as its data path.
int run_cli(int argc, const char* const* argv, std::istream& in, std::ostream& out,
            std::ostream& err);

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
            std::ostream& err);

}  // namespace halunet
