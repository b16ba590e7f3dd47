#pragma once

#include <iosfwd>
#include <string>

namespace cpmm::cli {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kUsage = 2, kRuntime = 3 };

/// Entry point of the `cpmm` tool. Reports go to `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Fixture directory shipped with the sources.
std::string default_fixture_root();

}  // namespace cpmm::cli
