#pragma once

namespace prefconflict::cli {

// Full command-line entry point, callable in-process (tests drive it with
// argv vectors). Returns the process exit code: 0 on success, 2 usage,
// 3 input, 4 external service, 5 numerical.
int run_cli(int argc, const char* const* argv);

}  // namespace prefconflict::cli
