#include "flowguard/mape.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <sstream>

namespace flowguard::mape {

namespace {

std::string fmt1(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    return buf;
}

struct Moments {
    double mean = 0;
    double stddev = 0;
};

Moments moments(const std::vector<double>& xs) {
    Moments m;
    if (xs.empty()) return m;
    double sum = 0;
    for (double x : xs) sum += x;
    m.mean = sum / static_cast<double>(xs.size());
    double var = 0;
    for (double x : xs) var += (x - m.mean) * (x - m.mean);
    m.stddev = std::sqrt(var / static_cast<double>(xs.size()));
    return m;
}

}  // namespace

DetectorResult check_resources(const TelemetrySample& sample,
                               const std::vector<TelemetrySample>& history,
                               const ResourceThresholds& thresholds,
                               double sigma_mult) {
    DetectorResult result;
    auto flag = [&](const std::string& text) {
        result.score = 1;
        result.findings.push_back(text);
    };

    if (sample.cpu_pct > thresholds.cpu_pct)
        flag("cpu " + fmt1(sample.cpu_pct) + "% over static threshold " +
             fmt1(thresholds.cpu_pct) + "%");
    if (sample.mem_pct > thresholds.mem_pct)
        flag("mem " + fmt1(sample.mem_pct) + "% over static threshold " +
             fmt1(thresholds.mem_pct) + "%");

    if (!history.empty()) {
        std::vector<double> cpu, mem;
        cpu.reserve(history.size());
        mem.reserve(history.size());
        for (const auto& h : history) {
            cpu.push_back(h.cpu_pct);
            mem.push_back(h.mem_pct);
        }
        Moments mc = moments(cpu);
        Moments mm = moments(mem);
        double cpu_bound = mc.mean + sigma_mult * mc.stddev;
        double mem_bound = mm.mean + sigma_mult * mm.stddev;
        if (sample.cpu_pct > cpu_bound)
            flag("cpu " + fmt1(sample.cpu_pct) + "% over dynamic bound " +
                 fmt1(cpu_bound) + "%");
        if (sample.mem_pct > mem_bound)
            flag("mem " + fmt1(sample.mem_pct) + "% over dynamic bound " +
                 fmt1(mem_bound) + "%");
    }
    return result;
}

DetectorResult validate_processes(const TelemetrySample& sample,
                                  const ProcessWhitelist& whitelist,
                                  const LaunchSnapshot& snapshot) {
    DetectorResult result;
    auto flag = [&](const std::string& text) {
        result.score = 1;
        result.findings.push_back(text);
    };

    for (const auto& proc : sample.processes) {
        if (!whitelist.names.count(proc.name))
            flag("process '" + proc.name + "' not in whitelist");
    }
    for (const auto& expected : snapshot.processes) {
        const ProcessInfo* seen = nullptr;
        for (const auto& proc : sample.processes) {
            if (proc.name == expected.name) {
                seen = &proc;
                break;
            }
        }
        if (!seen) {
            flag("process '" + expected.name + "' from launch snapshot missing");
            continue;
        }
        if (seen->pid != expected.pid)
            flag("process '" + expected.name + "' pid changed " +
                 std::to_string(expected.pid) + " to " +
                 std::to_string(seen->pid));
        if (seen->cr3 != expected.cr3) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "0x%llx to 0x%llx",
                          static_cast<unsigned long long>(expected.cr3),
                          static_cast<unsigned long long>(seen->cr3));
            flag("process '" + expected.name + "' cr3 changed " + buf);
        }
    }
    return result;
}

DetectorResult check_syscalls(const TelemetrySample& sample,
                              const SyscallBaseline& baseline) {
    DetectorResult result;
    auto flag = [&](const std::string& text) {
        result.score = 1;
        result.findings.push_back(text);
    };

    for (const auto& [id, count] : sample.syscall_counts) {
        (void)count;
        if (!baseline.envelopes.count(id))
            flag("syscall " + std::to_string(id) + " not in baseline");
    }
    for (const auto& [id, env] : baseline.envelopes) {
        auto it = sample.syscall_counts.find(id);
        double count = it == sample.syscall_counts.end()
                           ? 0.0
                           : static_cast<double>(it->second);
        double lo = env.min * (1.0 - baseline.slack);
        double hi = env.max * (1.0 + baseline.slack);
        if (count < lo || count > hi)
            flag("syscall " + std::to_string(id) + " count " +
                 std::to_string(static_cast<long long>(count)) + " outside [" +
                 fmt1(lo) + ", " + fmt1(hi) + "]");
    }
    return result;
}

SyscallBaseline train_baseline(const std::vector<TelemetrySample>& windows,
                               double slack) {
    SyscallBaseline baseline;
    baseline.slack = slack;
    std::set<int> ids;
    for (const auto& w : windows)
        for (const auto& [id, count] : w.syscall_counts) {
            (void)count;
            ids.insert(id);
        }
    for (int id : ids) {
        SyscallEnvelope env;
        bool first = true;
        for (const auto& w : windows) {
            auto it = w.syscall_counts.find(id);
            int count = it == w.syscall_counts.end() ? 0 : it->second;
            if (first) {
                env.min = env.max = count;
                first = false;
            } else {
                env.min = std::min(env.min, count);
                env.max = std::max(env.max, count);
            }
        }
        baseline.envelopes[id] = env;
    }
    return baseline;
}

std::string render_baseline(const SyscallBaseline& baseline) {
    std::ostringstream out;
    out << "allowed:";
    for (const auto& [id, env] : baseline.envelopes) {
        (void)env;
        out << ' ' << id;
    }
    out << '\n';
    for (const auto& [id, env] : baseline.envelopes)
        out << id << ' ' << env.min << ' ' << env.max << '\n';
    return out.str();
}

SyscallBaseline parse_baseline(const std::string& text, double slack) {
    std::istringstream in(text);
    std::string header;
    if (!(in >> header) || header != "allowed:")
        throw ConfigError("baseline must start with 'allowed:'");
    std::string rest;
    std::getline(in, rest);
    std::istringstream ids_in(rest);
    std::vector<int> ids;
    int id;
    while (ids_in >> id) ids.push_back(id);
    if (!ids_in.eof())
        throw ConfigError("malformed id list in baseline header");

    SyscallBaseline baseline;
    baseline.slack = slack;
    int row_id, lo, hi;
    while (in >> row_id >> lo >> hi) {
        if (baseline.envelopes.count(row_id))
            throw ConfigError("duplicate baseline row for syscall " +
                              std::to_string(row_id));
        if (lo > hi)
            throw ConfigError("baseline row for syscall " +
                              std::to_string(row_id) + " has min above max");
        baseline.envelopes[row_id] = SyscallEnvelope{lo, hi};
    }
    if (!in.eof()) throw ConfigError("malformed baseline row");
    std::set<int> listed(ids.begin(), ids.end());
    if (listed.size() != ids.size())
        throw ConfigError("duplicate id in baseline header");
    std::set<int> rows;
    for (const auto& [rid, env] : baseline.envelopes) {
        (void)env;
        rows.insert(rid);
    }
    if (listed != rows)
        throw ConfigError("baseline header ids do not match envelope rows");
    return baseline;
}

std::string render_whitelist(const ProcessWhitelist& whitelist) {
    std::string out;
    for (const auto& name : whitelist.names) {
        out += name;
        out += '\n';
    }
    return out;
}

ProcessWhitelist parse_whitelist(const std::string& text) {
    ProcessWhitelist wl;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        wl.names.insert(line);
    }
    return wl;
}

int heartbeat_check(std::int64_t age_ms, std::int64_t period_ms,
                    int misses_allowed) {
    return age_ms > misses_allowed * period_ms ? 1 : 0;
}

bool vote(const std::vector<int>& scores, int k, int m) {
    int considered = std::min<int>(k, static_cast<int>(scores.size()));
    int anomalies = 0;
    for (int i = 0; i < considered; ++i) {
        if (scores[scores.size() - 1 - i] != 0) ++anomalies;
    }
    return anomalies >= m;
}

std::vector<policy::CanEvent> cross_validate_can(
    const std::vector<policy::CanEvent>& frames,
    const std::vector<policy::CanEvent>& commands, std::int64_t tol_ms) {
    std::map<std::uint32_t, std::deque<std::int64_t>> pending;
    for (const auto& cmd : commands) pending[cmd.frame_id].push_back(cmd.t_ms);

    std::vector<policy::CanEvent> unmatched;
    for (const auto& frame : frames) {
        auto it = pending.find(frame.frame_id);
        bool matched = false;
        if (it != pending.end()) {
            auto& queue = it->second;
            while (!queue.empty() && queue.front() < frame.t_ms - tol_ms)
                queue.pop_front();
            if (!queue.empty() && queue.front() <= frame.t_ms) {
                queue.pop_front();
                matched = true;
            }
        }
        if (!matched) unmatched.push_back(frame);
    }
    return unmatched;
}

std::vector<wire::PlanMessage> plan(const model::IsolationRecord& record,
                                    const AdaptationConfig& config,
                                    int budget_used, const PlanContext& ctx) {
    if (budget_used < 0) throw PlanError("budget_used cannot be negative");

    std::vector<wire::PlanMessage> out;
    auto base = [&](wire::Opcode op) {
        wire::PlanMessage msg;
        msg.header.seq = ctx.first_seq + out.size();
        msg.header.timestamp_ms = ctx.now_ms;
        msg.header.type = wire::MsgType::plan;
        msg.source_id = ctx.source_id;
        msg.sick_bit = 1;
        msg.opcode = op;
        return msg;
    };

    if (budget_used >= record.mitigation_budget) {
        auto msg = base(wire::Opcode::reboot);
        msg.successor_name = "system";
        out.push_back(msg);
        return out;
    }

    std::string cur_name, cur_kind, cur_address;
    if (budget_used == 0 || !record.has_backup) {
        // In-place resets never hand off, so the main partition stays active
        // no matter how many have already happened.
        cur_name = config.main.name;
        cur_kind = config.main.partition_kind;
        cur_address = config.main.address;
    } else {
        if (static_cast<size_t>(budget_used) > config.backups.size())
            throw PlanError("no sub-node with id " + std::to_string(budget_used) +
                            " for the currently active partition");
        const auto& cur = config.backups[budget_used - 1];
        cur_name = cur.name;
        cur_kind = cur.partition_kind;
        cur_address = cur.address;
    }

    if (record.has_backup) {
        if (static_cast<size_t>(budget_used) >= config.backups.size())
            throw PlanError("no sub-node with id " +
                            std::to_string(budget_used + 1) +
                            " to take over for '" + cur_name + "'");
        const auto& succ = config.backups[budget_used];

        auto start = base(wire::Opcode::start);
        start.successor_name = succ.name;
        start.payload = {succ.address, succ.partition_kind, ""};
        out.push_back(start);

        auto launch = base(wire::Opcode::launch);
        launch.successor_name = succ.name;
        launch.launch_file_path = succ.launch_file_path;
        launch.payload = {succ.address, succ.partition_kind, ""};
        out.push_back(launch);

        auto stop = base(wire::Opcode::stop);
        stop.successor_name = cur_name;
        stop.payload = {cur_address, cur_kind, ""};
        stop.delay_ms = ctx.stop_delay_ms;
        out.push_back(stop);
    } else {
        auto stop = base(wire::Opcode::stop);
        stop.successor_name = cur_name;
        stop.payload = {cur_address, cur_kind, ""};
        out.push_back(stop);

        auto start = base(wire::Opcode::start);
        start.successor_name = cur_name;
        start.payload = {cur_address, cur_kind, ""};
        out.push_back(start);
    }
    return out;
}

void SimulatedPartitionManager::add_partition(const std::string& name,
                                              PartitionState state,
                                              bool services_loaded) {
    partitions_[name] = Entry{state, services_loaded};
}

PartitionState SimulatedPartitionManager::state(const std::string& name) const {
    auto it = partitions_.find(name);
    if (it == partitions_.end())
        throw PartitionError("unknown partition '" + name + "'");
    return it->second.state;
}

SimulatedPartitionManager::Entry& SimulatedPartitionManager::entry(
    const std::string& name) {
    auto it = partitions_.find(name);
    if (it == partitions_.end())
        throw PartitionError("unknown partition '" + name + "'");
    return it->second;
}

std::int64_t SimulatedPartitionManager::start(const std::string& name) {
    Entry& e = entry(name);
    switch (e.state) {
        case PartitionState::running:
            throw PartitionError("partition '" + name + "' is already running");
        case PartitionState::standby:
            e.state = PartitionState::running;
            return latencies_.hot_restore_cms;
        case PartitionState::stopped:
            e.state = PartitionState::running;
            return latencies_.container_boot_cms;
    }
    throw PartitionError("partition '" + name + "' in unknown state");
}

std::int64_t SimulatedPartitionManager::stop(const std::string& name) {
    Entry& e = entry(name);
    if (e.state == PartitionState::stopped) return 0;
    e.state = PartitionState::stopped;
    e.services_loaded = false;
    return latencies_.stop_cms;
}

std::int64_t SimulatedPartitionManager::launch(const std::string& name,
                                               const std::string& launch_file) {
    (void)launch_file;
    Entry& e = entry(name);
    if (e.state != PartitionState::running)
        throw PartitionError("cannot launch services on '" + name +
                             "' while it is not running");
    if (e.services_loaded) return 0;
    e.services_loaded = true;
    return latencies_.service_launch_cms;
}

std::int64_t SimulatedPartitionManager::pause(const std::string& name) {
    Entry& e = entry(name);
    if (e.state == PartitionState::stopped)
        throw PartitionError("cannot pause stopped partition '" + name + "'");
    if (e.state == PartitionState::standby) return 0;
    e.state = PartitionState::standby;
    return latencies_.pause_cms;
}

std::int64_t SimulatedPartitionManager::reboot(const std::string& name) {
    if (name == "system") return latencies_.reboot_cms;
    Entry& e = entry(name);
    e.state = PartitionState::running;
    e.services_loaded = false;
    return latencies_.reboot_cms;
}

ExecutionRecord execute(const std::vector<wire::PlanMessage>& plans,
                        PartitionManager& pm, std::int64_t now_cms,
                        std::int64_t extra_overhead_cms) {
    ExecutionRecord record;
    record.dispatched_cms = now_cms;
    std::int64_t clock = now_cms;
    std::int64_t last_non_stop = now_cms;
    bool prev_bringup = false;

    for (const auto& msg : plans) {
        std::int64_t begin = clock;
        if (msg.opcode == wire::Opcode::stop && prev_bringup)
            begin += msg.delay_ms * 100;

        std::int64_t latency = 0;
        try {
            switch (msg.opcode) {
                case wire::Opcode::start:
                    latency = pm.start(msg.successor_name);
                    break;
                case wire::Opcode::stop:
                    latency = pm.stop(msg.successor_name);
                    break;
                case wire::Opcode::launch:
                    latency = pm.launch(msg.successor_name, msg.launch_file_path);
                    break;
                case wire::Opcode::pause:
                    latency = pm.pause(msg.successor_name);
                    break;
                case wire::Opcode::reboot:
                    latency = pm.reboot(msg.successor_name);
                    break;
            }
        } catch (const PartitionError& e) {
            throw ExecError(std::string(wire::opcode_name(msg.opcode)) + " '" +
                            msg.successor_name + "' failed: " + e.what());
        }

        ActionOutcome outcome;
        outcome.opcode = msg.opcode;
        outcome.target = msg.successor_name;
        outcome.start_cms = begin;
        outcome.done_cms = begin + latency;
        record.actions.push_back(outcome);

        clock = outcome.done_cms;
        if (msg.opcode != wire::Opcode::stop) last_non_stop = outcome.done_cms;
        prev_bringup = msg.opcode == wire::Opcode::start ||
                       msg.opcode == wire::Opcode::launch;
    }

    record.restore_ready_cms = last_non_stop + extra_overhead_cms;
    return record;
}

}  // namespace flowguard::mape
