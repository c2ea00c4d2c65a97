#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace hcmen::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kRuntime = 2 };

// Runs one subcommand. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct ScanTiming {
  std::size_t length = 0;
  double median_ms = 0.0;
};

// Forward-only selective scan timings, median of `trials` runs per length.
std::vector<ScanTiming> time_selective_scan(const std::vector<std::size_t>& lengths,
                                            std::size_t trials, std::uint64_t seed = 0);

// Least-squares slope of log(median_ms) against log(length).
double loglog_slope(const std::vector<ScanTiming>& rows);
// Largest time ratio between consecutive lengths, normalized to a doubling.
double max_doubling_ratio(const std::vector<ScanTiming>& rows);

}  // namespace hcmen::cli
