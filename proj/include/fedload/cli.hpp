#pragma once

namespace fedload::cli {

// Full command-line front door: parses argv, runs the requested subcommand,
// prints a one-line diagnostic on failure. Returns the process exit code:
// 0 success, 1 runtime failure, 2 usage error.
int dispatch(int argc, const char* const* argv);

}  // namespace fedload::cli
