#pragma once

#include <string>
#include <vector>

namespace sws::cli {

/// Entry point behind main(). args excludes the program name.
/// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical error.
int dispatch(const std::vector<std::string>& args);

/// Worker cap from SWS_THREADS, defaulting to the hardware concurrency.
int worker_count();

}  // namespace sws::cli
