#pragma once
// Command-line entry point, callable in-process for tests.
// Exit codes: 0 success, 1 runtime failure, 2 usage/validation error.

namespace hebb {

int run_cli(int argc, const char* const* argv);

}  // namespace hebb
