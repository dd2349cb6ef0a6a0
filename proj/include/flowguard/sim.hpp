#pragma once

// Deterministic discrete-event simulator: scripted telemetry per unit, failure
// injection with cascading corruption along the data-flow graph, the full
// monitor/analyze/plan/execute loop per unit, and the cooperation protocol
// over a lossy point-to-point channel.  Identical scenarios produce
// byte-identical event logs.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flowguard/mape.hpp"
#include "flowguard/model.hpp"
#include "flowguard/protocol.hpp"

namespace flowguard::sim {

struct ChannelConfig {
    std::int64_t delay_ms = 0;
    double loss_rate = 0;
    std::uint64_t seed = 1;
};

struct DetectorConfig {
    double cpu_threshold_pct = 90;
    double mem_threshold_pct = 90;
    double sigma_mult = 3;
    int history_window = 30;
    int vote_k = 3;
    int vote_m = 2;
    int heartbeat_misses = 3;
    double syscall_slack = 0.1;
    std::int64_t can_tolerance_ms = 20;
};

struct CanScript {
    std::uint32_t frame_id = 0x113;
    int per_window = 0;
};

struct TelemetryScript {
    double cpu_pct = 40;
    double mem_pct = 30;
    double jitter_pct = 2;
    std::map<int, int> syscalls;
    std::vector<mape::ProcessInfo> processes;
    CanScript can;
};

struct UnitSpec {
    int id = 0;
    std::string component;
    std::vector<int> downstream;
    model::IsolationRecord isolation;
    bool backup_hot = true;
    TelemetryScript telemetry;
    std::optional<std::string> policy;  // bus rule evaluated per window
};

enum class InjectionKind {
    resource_exhaustion,
    rogue_process,
    syscall_anomaly,
    can_flood,
    crash
};

const char* injection_kind_name(InjectionKind kind);

struct Injection {
    std::int64_t at_ms = 0;
    int unit_id = 0;
    InjectionKind kind = InjectionKind::resource_exhaustion;
    int repairs_needed = 1;  // mitigations until the fault is cured
    std::optional<std::int64_t> duration_ms;  // transient fault if set
};

struct PropagationConfig {
    std::int64_t delay_ms = 0;
    // Which anomaly an affected unit exhibits while its input is corrupt.
    InjectionKind affected_kind = InjectionKind::syscall_anomaly;
    std::map<std::pair<int, int>, InjectionKind> edge_kinds;  // overrides
};

struct Scenario {
    std::string name;
    std::string description;
    std::int64_t duration_ms = 5000;
    std::uint64_t seed = 1;
    std::int64_t beacon_period_ms = 100;  // also the monitoring window
    ChannelConfig channel;
    mape::PartitionLatencies latencies;
    DetectorConfig detectors;
    protocol::ProtocolConfig protocol;
    std::vector<UnitSpec> units;
    std::vector<Injection> injections;
    PropagationConfig propagation;
    std::optional<std::vector<double>> host_resources;
};

class ScenarioError : public std::exception {
public:
    explicit ScenarioError(std::string message) : message_(std::move(message)) {}
    const char* what() const noexcept override { return message_.c_str(); }

private:
    std::string message_;
};

// Strict parse: unknown fields rejected, errors carry the field path.
Scenario parse_scenario(const std::string& json_text);
Scenario load_scenario(const std::string& path);

// Component-model and isolation checks over the synthesized model, plus the
// optional host capacity check.
std::vector<model::Violation> validate_scenario(const Scenario& scenario);

// Closed dependency walks in the scenario graph (empty when acyclic).
std::vector<std::vector<int>> scenario_cycles(const Scenario& scenario);

struct LogRecord {
    std::int64_t t_ms = 0;
    std::string kind;
    int unit_id = 0;
    std::string payload;  // rest of the line, kind-specific
};

struct EventLog {
    std::vector<LogRecord> records;
};

std::string to_text(const EventLog& log);

struct UnitTiming {
    int unit_id = 0;
    bool failed = false;  // mitigated at least once; otherwise affected
    std::int64_t t_detect = -1;
    std::int64_t t_mitigate_start = -1;
    std::int64_t t_restore_done = -1;
    std::int64_t t_clear_sent = -1;   // failed units: recovery announced
    std::int64_t t_unblocked = -1;    // affected units: input clean again
    std::int64_t t_clear = -1;        // affected units: back to normal
};

struct TimingReport {
    std::vector<UnitTiming> units;  // only units that left normal
    double avg_failed_handling_ms = 0;
    double avg_affected_clearing_ms = 0;
    std::int64_t total_recovery_ms = 0;
    bool timed_out = false;
    std::vector<int> stuck_units;
};

struct RunResult {
    EventLog log;
    TimingReport report;
};

RunResult run(const Scenario& scenario);

TimingReport timing_report(const EventLog& log);

// Human tables followed by "---" and a JSON block.
std::string report_text(const TimingReport& report);

// Predicted total recovery: longest dependency chain through the propagation
// closure, failed units costing failed_handling_ms and affected units
// clearing_ms each.  Cyclic scenarios are unsupported.
double compose_expected(const Scenario& scenario,
                        double failed_handling_ms = 893.0,
                        double affected_clearing_ms = 296.1);

// Runs twice and compares serialized logs byte for byte.
bool replay_check(const Scenario& scenario);

}  // namespace flowguard::sim
