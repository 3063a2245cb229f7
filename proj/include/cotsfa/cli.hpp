#pragma once

#include <iosfwd>

namespace cotsfa::cli {

/// Runs the command line tool. Exit codes: 0 success, 1 validation error,
/// 2 runtime failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cotsfa::cli
