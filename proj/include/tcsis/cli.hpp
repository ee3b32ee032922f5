#pragma once

namespace tcsis {

// Entry point for the tcsis command-line tool; returns the process exit code
// (0 ok, 1 user error, 2 capacity, 3 numerical failure).
int cli_main(int argc, char** argv);

}  // namespace tcsis
