#pragma once

// Per-unit monitor/analyze/plan/execute building blocks: telemetry detectors
// and the score voter on the analysis side, adaptation-config driven plan
// synthesis and a partition-manager backed executor on the recovery side.

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "flowguard/model.hpp"
#include "flowguard/policy.hpp"
#include "flowguard/wire.hpp"

namespace flowguard::mape {

struct ProcessInfo {
    int pid = 0;
    std::string name;
    std::uint64_t cr3 = 0;  // page-table root, used as a VM-level identity

    bool operator==(const ProcessInfo&) const = default;
};

// One monitoring window worth of observations for a unit.
struct TelemetrySample {
    int unit_id = 0;
    std::int64_t window_index = 0;
    double cpu_pct = 0;
    double mem_pct = 0;
    std::vector<ProcessInfo> processes;
    std::map<int, int> syscall_counts;
    std::vector<policy::CanEvent> can_frames;
    bool heartbeat = true;
};

struct ProcessWhitelist {
    std::set<std::string> names;
};

// Processes recorded right after the partition came up; their identity is
// expected to stay fixed for the partition's lifetime.
struct LaunchSnapshot {
    std::vector<ProcessInfo> processes;
};

struct SyscallEnvelope {
    int min = 0;
    int max = 0;

    bool operator==(const SyscallEnvelope&) const = default;
};

struct SyscallBaseline {
    std::map<int, SyscallEnvelope> envelopes;  // keyed by syscall id
    double slack = 0.1;  // widens each envelope by this fraction at check time

    bool operator==(const SyscallBaseline&) const = default;
};

struct DetectorResult {
    int score = 0;  // 1 = anomaly
    std::vector<std::string> findings;
};

struct DetectorScores {
    int resource = 0;
    int process = 0;
    int syscall = 0;
    int bus = 0;
    int heartbeat = 0;

    int combined() const {
        return (resource || process || syscall || bus || heartbeat) ? 1 : 0;
    }
};

struct DetectionReport {
    int unit_id = 0;
    std::int64_t window_index = 0;
    DetectorScores scores;
    bool voted = false;  // verdict after the score voter
    std::vector<std::string> findings;
};

struct ResourceThresholds {
    double cpu_pct = 90;
    double mem_pct = 90;
};

// Resource exhaustion check: static thresholds plus a dynamic bound of
// mean + sigma_mult * stddev over the trailing history (skipped while the
// history is empty).
DetectorResult check_resources(const TelemetrySample& sample,
                               const std::vector<TelemetrySample>& history,
                               const ResourceThresholds& thresholds,
                               double sigma_mult);

// Flags processes outside the whitelist, processes from the launch snapshot
// that disappeared, and snapshot processes whose pid or cr3 changed.
DetectorResult validate_processes(const TelemetrySample& sample,
                                  const ProcessWhitelist& whitelist,
                                  const LaunchSnapshot& snapshot);

DetectorResult check_syscalls(const TelemetrySample& sample,
                              const SyscallBaseline& baseline);

// Envelope learning over clean windows; ids missing from a window count as
// zero, so an id that only sometimes occurs gets a minimum of 0.
SyscallBaseline train_baseline(const std::vector<TelemetrySample>& windows,
                               double slack);

std::string render_baseline(const SyscallBaseline& baseline);
SyscallBaseline parse_baseline(const std::string& text, double slack);

std::string render_whitelist(const ProcessWhitelist& whitelist);
ProcessWhitelist parse_whitelist(const std::string& text);

// 1 iff the time since the last heartbeat exceeds misses_allowed periods.
int heartbeat_check(std::int64_t age_ms, std::int64_t period_ms,
                    int misses_allowed);

// Majority voter over the last k combined scores: at least m of them must be
// anomalous for the verdict to flip.
bool vote(const std::vector<int>& scores, int k, int m);

// One-to-one matching of observed frames against issued commands: a frame at
// time t is legitimate if some unused command with the same id was issued in
// [t - tol, t].  Returns the frames left unmatched.  Both inputs must be
// time-sorted.
std::vector<policy::CanEvent> cross_validate_can(
    const std::vector<policy::CanEvent>& frames,
    const std::vector<policy::CanEvent>& commands, std::int64_t tol_ms);

// ---------------------------------------------------------------------------
// Adaptation configuration: one main node plus its standby successors.

struct AdaptationNode {
    int id = 0;
    std::string name;
    std::string partition_kind;  // "container" or "vm"
    std::string address;

    bool operator==(const AdaptationNode&) const = default;
};

struct AdaptationSubNode {
    int id = 0;
    std::string name;
    std::string launch_file_path;
    std::string address;
    std::string partition_kind;

    bool operator==(const AdaptationSubNode&) const = default;
};

struct AdaptationConfig {
    AdaptationNode main;                     // id must be 0
    std::vector<AdaptationSubNode> backups;  // ids 1..n in order

    bool operator==(const AdaptationConfig&) const = default;
};

// XML form:
//   <node id="0" name="..." kind="..." address="...">
//     <sub-node id="1" name="..." launch_file_path="..." address="..." kind="..."/>
//   </node>
// Exactly these elements and attributes; anything else is rejected.
AdaptationConfig parse_adaptation_config(const std::string& text);
std::string render_adaptation_config(const AdaptationConfig& config);

class ConfigError : public std::exception {
public:
    explicit ConfigError(std::string message) : message_(std::move(message)) {}
    const char* what() const noexcept override { return message_.c_str(); }

private:
    std::string message_;
};

// ---------------------------------------------------------------------------
// Planning and execution.

struct PlanContext {
    int source_id = 0;
    std::int64_t now_ms = 0;
    std::uint64_t first_seq = 1;
    std::int64_t stop_delay_ms = 200;
};

// Chooses the mitigation steps for a failed component.  With a backup
// available the successor partition is brought up before the current one is
// stopped; without one the component is reset in place.  Once budget_used
// reaches the record's budget the only remaining option is a system reboot.
std::vector<wire::PlanMessage> plan(const model::IsolationRecord& record,
                                    const AdaptationConfig& config,
                                    int budget_used, const PlanContext& ctx);

class PlanError : public std::exception {
public:
    explicit PlanError(std::string message) : message_(std::move(message)) {}
    const char* what() const noexcept override { return message_.c_str(); }

private:
    std::string message_;
};

// Latencies in hundredths of a millisecond so the calibrated constants stay
// exact in reports.
struct PartitionLatencies {
    std::int64_t container_boot_cms = 46682;   // 466.82 ms
    std::int64_t service_launch_cms = 63919;   // 639.19 ms
    std::int64_t hot_restore_cms = 65000;
    std::int64_t stop_cms = 10000;
    std::int64_t stop_delay_cms = 20000;
    std::int64_t pause_cms = 5000;
    std::int64_t reboot_cms = 500000;
    std::int64_t extra_overhead_cms = 0;  // data restore / environment setup
};

enum class PartitionState { running, standby, stopped };

class PartitionError : public std::exception {
public:
    explicit PartitionError(std::string message) : message_(std::move(message)) {}
    const char* what() const noexcept override { return message_.c_str(); }

private:
    std::string message_;
};

// Abstract control surface over partitions; implementations return the
// latency of each operation in centi-milliseconds.
class PartitionManager {
public:
    virtual ~PartitionManager() = default;
    virtual std::int64_t start(const std::string& name) = 0;
    virtual std::int64_t stop(const std::string& name) = 0;
    virtual std::int64_t launch(const std::string& name,
                                const std::string& launch_file) = 0;
    virtual std::int64_t pause(const std::string& name) = 0;
    virtual std::int64_t reboot(const std::string& name) = 0;
};

// In-memory manager with configurable latencies.  A standby partition is a
// pre-booted backup: starting it costs the hot-restore latency, and launching
// services that are already resident costs nothing.  Starting a running
// partition is an error; stopping is idempotent.
class SimulatedPartitionManager : public PartitionManager {
public:
    explicit SimulatedPartitionManager(PartitionLatencies latencies)
        : latencies_(latencies) {}

    void add_partition(const std::string& name, PartitionState state,
                       bool services_loaded);
    PartitionState state(const std::string& name) const;

    std::int64_t start(const std::string& name) override;
    std::int64_t stop(const std::string& name) override;
    std::int64_t launch(const std::string& name,
                        const std::string& launch_file) override;
    std::int64_t pause(const std::string& name) override;
    std::int64_t reboot(const std::string& name) override;

    const PartitionLatencies& latencies() const { return latencies_; }

private:
    struct Entry {
        PartitionState state = PartitionState::stopped;
        bool services_loaded = false;
    };
    Entry& entry(const std::string& name);

    PartitionLatencies latencies_;
    std::map<std::string, Entry> partitions_;
};

struct ActionOutcome {
    wire::Opcode opcode = wire::Opcode::start;
    std::string target;
    std::int64_t start_cms = 0;
    std::int64_t done_cms = 0;
};

struct ExecutionRecord {
    std::vector<ActionOutcome> actions;
    std::int64_t dispatched_cms = 0;
    std::int64_t restore_ready_cms = 0;  // first instant the unit can serve
};

class ExecError : public std::exception {
public:
    explicit ExecError(std::string message) : message_(std::move(message)) {}
    const char* what() const noexcept override { return message_.c_str(); }

private:
    std::string message_;
};

// Dispatches plan steps in order.  Each step begins when the previous one
// completes; a stop that follows a start/launch additionally waits out the
// plan's stop delay.  extra_overhead_cms is added on top of the last
// non-stop completion to produce the restore-ready instant.
ExecutionRecord execute(const std::vector<wire::PlanMessage>& plans,
                        PartitionManager& pm, std::int64_t now_cms,
                        std::int64_t extra_overhead_cms = 0);

}  // namespace flowguard::mape
