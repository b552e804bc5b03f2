#pragma once

#include <iosfwd>

namespace autogcn {

/// Exit codes: 0 ok, 1 property failure, 2 input error, 3 numerical error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace autogcn
