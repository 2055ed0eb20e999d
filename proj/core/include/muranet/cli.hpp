#pragma once

namespace mura {

// Full command-line entry point (synth / train / eval / predict / visualize).
// Returns the process exit code: 0 success, 1 runtime failure, 2 usage error.
// Failures print a one-line JSON diagnostic to stderr.
int run_command(int argc, const char* const* argv);

}  // namespace mura
