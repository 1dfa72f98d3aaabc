#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hfn {

// Full command-line surface. Returns the process exit code:
// 0 success, 2 configuration/input error, 3 numerical failure.
int cli_main(std::vector<std::string> args, std::ostream& out, std::ostream& err);

}  // namespace hfn
