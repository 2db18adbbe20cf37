#pragma once
// POSIX subprocess runner for external ASR/encoder/acoustic backends.
// The configured command string is split on whitespace (no shell); extra
// arguments are appended. stdout and stderr are captured separately and a
// deadline kills the child with SIGKILL.

#include <filesystem>
#include <string>
#include <vector>

namespace cogspeech {

struct SubprocessResult {
    int exit_code = -1;
    bool timed_out = false;
    std::string out;
    std::string err;
};

// Splits a command line on runs of spaces/tabs. Quoting is deliberately not
// supported; backend wrappers needing shell features should live in a script.
std::vector<std::string> split_command(const std::string& command);

// argv[0] is resolved via PATH. stdin_data is written to the child's stdin
// (then closed). timeout_s <= 0 means no deadline.
SubprocessResult run_subprocess(const std::vector<std::string>& argv,
                                const std::string& stdin_data,
                                double timeout_s);

}  // namespace cogspeech
