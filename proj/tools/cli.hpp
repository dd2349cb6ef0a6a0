#pragma once

// Command layer behind the flowguard binary.  Each command returns its exit
// status together with the full stdout document (human text, a "---" line,
// then a JSON block) so the commands stay callable in-process.

#include <cstdint>
#include <string>

namespace flowguard::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_invalid = 1;   // unreadable or invalid inputs
inline constexpr int exit_runtime = 2;   // run failed to settle, or IO broke
inline constexpr int exit_mismatch = 3;  // check or rules found a violation

struct CommandResult {
    int status = exit_ok;
    std::string out;
};

// Prints the violation list for a scenario; success means none.
CommandResult cmd_validate(const std::string& scenario_path);

struct RunOptions {
    std::string log_path;     // event log destination, empty to skip
    std::string report_path;  // timing report destination, empty to skip
};

// Runs a scenario and prints the timing report.
CommandResult cmd_run(const std::string& scenario_path,
                      const RunOptions& options = {});

struct RulesOptions {
    std::int64_t window_ms = 100;
    std::int64_t stride_ms = 0;  // 0 means one window per window_ms
};

// Scores a bus policy over a recorded frame trace, window by window.
CommandResult cmd_rules(const std::string& policy_path,
                        const std::string& trace_path,
                        const RulesOptions& options = {});

// Runs a scenario and compares total recovery against an expectation.
CommandResult cmd_check(const std::string& scenario_path,
                        double expect_total_ms, double tolerance_ms = 100.0);

}  // namespace flowguard::cli
