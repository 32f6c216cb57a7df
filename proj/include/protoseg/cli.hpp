#pragma once

namespace protoseg::cli {

// Full command-line entry point (argument parsing included), returning the
// process exit code: 0 on success, 1 on usage errors, 2 on runtime failures.
int run(int argc, const char* const* argv);

}  // namespace protoseg::cli
