#pragma once

#include <ostream>

namespace pstory {

// Exit codes: 0 success, 1 usage error, 2 data or config error, 3 internal failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pstory
