#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <map>
#include <memory>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "flowguard/sim.hpp"

namespace flowguard::sim {

namespace {

std::string slug(const std::string& name) {
    std::string s;
    for (char c : name)
        s += (c == ' ') ? '-'
                        : static_cast<char>(std::tolower(
                              static_cast<unsigned char>(c)));
    return s;
}

std::int64_t ceil_div100(std::int64_t cms) { return (cms + 99) / 100; }

enum class Ev { inject, inject_end, corrupt_on, corrupt_off, window, restore, reboot };

struct Event {
    std::int64_t t = 0;
    // Same-instant order: state changes land before the window that samples
    // the interval ending there.
    int rank = 0;
    std::uint64_t seq = 0;
    Ev kind = Ev::window;
    int unit = 0;      // receiver for corrupt events, target otherwise
    int sender = 0;    // corrupt events: whose output flipped
    std::size_t index = 0;  // injection index
    std::uint64_t generation = 0;
};

struct EventAfter {
    bool operator()(const Event& a, const Event& b) const {
        if (a.t != b.t) return a.t > b.t;
        if (a.rank != b.rank) return a.rank > b.rank;
        return a.seq > b.seq;
    }
};

// One contiguous stretch during which some anomaly distorts a unit's
// telemetry; end == -1 while the cause is still active.
struct AnomalySpan {
    std::string key;
    InjectionKind kind = InjectionKind::syscall_anomaly;
    std::int64_t start = 0;
    std::int64_t end = -1;
};

struct PendingMessage {
    std::int64_t available_at = 0;
    std::uint64_t order = 0;
    wire::Message message;
};

struct ActiveInjection {
    Injection spec;
    bool active = false;
    int repairs_left = 0;
};

struct UnitRuntime {
    const UnitSpec* spec = nullptr;
    std::unique_ptr<protocol::UnitProtocol> proto;
    mape::AdaptationConfig adapt;

    std::vector<mape::TelemetrySample> history;
    mape::SyscallBaseline baseline;
    mape::ProcessWhitelist whitelist;
    mape::LaunchSnapshot snapshot;
    std::optional<policy::Policy> bus_policy;
    std::vector<int> scores;
    std::mt19937_64 rng{0};
    std::int64_t last_heartbeat_ms = 0;

    std::vector<AnomalySpan> spans;
    std::set<int> corrupt_inputs;
    bool tainted = false;
    bool output_corrupt = false;

    std::vector<PendingMessage> mailbox;
    bool restoring = false;
    int budget_used = 0;
};

class Simulator {
public:
    explicit Simulator(const Scenario& scenario);
    RunResult run_all();

private:
    void schedule(std::int64_t t, int rank, Ev kind, int unit, int sender,
                  std::size_t index);
    void record(std::int64_t t, const char* kind, int unit,
                std::string payload);
    void flush_bucket();

    void prime(UnitRuntime& u);
    void seed_partitions();

    bool own_injection_active(const UnitRuntime& u) const;
    std::set<InjectionKind> kinds_overlapping(const UnitRuntime& u,
                                              std::int64_t lo,
                                              std::int64_t hi) const;
    bool crash_covers(const UnitRuntime& u, std::int64_t at) const;
    void open_span(UnitRuntime& u, const std::string& key, InjectionKind kind,
                   std::int64_t t);
    void close_span(UnitRuntime& u, const std::string& key, std::int64_t t);
    InjectionKind edge_kind(int from, int to) const;
    void recompute_output(UnitRuntime& u, std::int64_t t);

    void apply(UnitRuntime& u, const protocol::StepResult& step,
               std::int64_t now);
    void send(UnitRuntime& u, const protocol::Emission& emission,
              std::int64_t now);
    void ingest_mailbox(UnitRuntime& u, std::int64_t boundary);

    mape::TelemetrySample make_sample(UnitRuntime& u, std::int64_t boundary,
                                      std::vector<policy::CanEvent>& commands);
    void unit_window(UnitRuntime& u, std::int64_t boundary);
    void window_step(std::int64_t boundary);
    void do_mitigate(UnitRuntime& u, std::int64_t boundary);
    void restore_done(UnitRuntime& u, std::int64_t t);
    void reboot_done(std::int64_t t);

    const Scenario& sc_;
    protocol::ProtocolConfig proto_cfg_;
    std::priority_queue<Event, std::vector<Event>, EventAfter> events_;
    std::uint64_t event_seq_ = 0;
    std::uint64_t send_order_ = 0;
    std::uint64_t generation_ = 0;
    bool in_global_reboot_ = false;
    std::map<int, UnitRuntime> units_;
    std::vector<ActiveInjection> injections_;
    mape::SimulatedPartitionManager pm_;
    std::mt19937_64 channel_rng_;

    EventLog log_;
    std::vector<LogRecord> bucket_;
    std::int64_t bucket_t_ = -1;
};

Simulator::Simulator(const Scenario& scenario)
    : sc_(scenario), pm_(scenario.latencies),
      channel_rng_(scenario.channel.seed) {
    proto_cfg_ = sc_.protocol;
    proto_cfg_.beacon_period_ms = sc_.beacon_period_ms;

    std::map<int, std::vector<int>> upstream;
    for (const UnitSpec& u : sc_.units)
        for (int d : u.downstream) upstream[d].push_back(u.id);

    for (const UnitSpec& u : sc_.units) {
        UnitRuntime& rt = units_[u.id];
        rt.spec = &u;
        rt.proto = std::make_unique<protocol::UnitProtocol>(
            u.id, upstream[u.id], u.downstream, proto_cfg_);
        rt.adapt.main.id = 0;
        rt.adapt.main.name = slug(u.component);
        rt.adapt.main.partition_kind =
            u.isolation.isolation_type == 1 ? "container" : "vm";
        rt.adapt.main.address = "10.0." + std::to_string(u.id) + ".0";
        if (u.isolation.has_backup) {
            for (int k = 1; k <= u.isolation.mitigation_budget; ++k) {
                mape::AdaptationSubNode b;
                b.id = k;
                b.name = rt.adapt.main.name + "-b" + std::to_string(k);
                b.launch_file_path =
                    "/launch/" + rt.adapt.main.name + ".launch";
                b.address = "10.0." + std::to_string(u.id) + "." +
                            std::to_string(k);
                b.partition_kind = rt.adapt.main.partition_kind;
                rt.adapt.backups.push_back(std::move(b));
            }
        }
        for (const mape::ProcessInfo& p : u.telemetry.processes)
            rt.whitelist.names.insert(p.name);
        rt.snapshot.processes = u.telemetry.processes;
        if (u.policy) rt.bus_policy = policy::parse_policy(*u.policy);
        rt.rng.seed(sc_.seed ^
                    (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(u.id)));
        prime(rt);
    }
    seed_partitions();

    for (std::size_t i = 0; i < sc_.injections.size(); ++i) {
        injections_.push_back({sc_.injections[i], false, 0});
        schedule(sc_.injections[i].at_ms, 0, Ev::inject,
                 sc_.injections[i].unit_id, 0, i);
    }
    for (std::int64_t b = sc_.beacon_period_ms; b <= sc_.duration_ms;
         b += sc_.beacon_period_ms)
        schedule(b, 1, Ev::window, 0, 0, 0);
}

void Simulator::schedule(std::int64_t t, int rank, Ev kind, int unit,
                         int sender, std::size_t index) {
    events_.push({t, rank, event_seq_++, kind, unit, sender, index,
                  generation_});
}

void Simulator::record(std::int64_t t, const char* kind, int unit,
                       std::string payload) {
    if (t != bucket_t_) {
        flush_bucket();
        bucket_t_ = t;
    }
    bucket_.push_back({t, kind, unit, std::move(payload)});
}

void Simulator::flush_bucket() {
    std::stable_sort(bucket_.begin(), bucket_.end(),
                     [](const LogRecord& a, const LogRecord& b) {
                         return a.unit_id < b.unit_id;
                     });
    for (LogRecord& r : bucket_) log_.records.push_back(std::move(r));
    bucket_.clear();
}

// Thirty clean windows before the run starts: they seed the resource history
// and train the per-unit syscall envelope.
void Simulator::prime(UnitRuntime& u) {
    const TelemetryScript& script = u.spec->telemetry;
    std::vector<mape::TelemetrySample> clean;
    std::uniform_real_distribution<double> jitter(-script.jitter_pct,
                                                  script.jitter_pct);
    for (int i = 0; i < sc_.detectors.history_window; ++i) {
        mape::TelemetrySample s;
        s.unit_id = u.spec->id;
        s.window_index = i - sc_.detectors.history_window;
        s.cpu_pct = std::clamp(script.cpu_pct + jitter(u.rng), 0.0, 100.0);
        s.mem_pct = std::clamp(script.mem_pct + jitter(u.rng), 0.0, 100.0);
        s.processes = script.processes;
        s.syscall_counts = script.syscalls;
        clean.push_back(std::move(s));
    }
    u.baseline = mape::train_baseline(clean, sc_.detectors.syscall_slack);
    u.history = std::move(clean);
}

void Simulator::seed_partitions() {
    for (const auto& [id, u] : units_) {
        (void)id;
        pm_.add_partition(u.adapt.main.name, mape::PartitionState::running,
                          true);
        for (const mape::AdaptationSubNode& b : u.adapt.backups)
            pm_.add_partition(b.name,
                              u.spec->backup_hot
                                  ? mape::PartitionState::standby
                                  : mape::PartitionState::stopped,
                              u.spec->backup_hot);
    }
}

bool Simulator::own_injection_active(const UnitRuntime& u) const {
    for (const ActiveInjection& ai : injections_)
        if (ai.active && ai.spec.unit_id == u.spec->id) return true;
    return false;
}

std::set<InjectionKind> Simulator::kinds_overlapping(const UnitRuntime& u,
                                                     std::int64_t lo,
                                                     std::int64_t hi) const {
    std::set<InjectionKind> kinds;
    for (const AnomalySpan& s : u.spans)
        if (s.start < hi && (s.end < 0 || s.end > lo)) kinds.insert(s.kind);
    return kinds;
}

bool Simulator::crash_covers(const UnitRuntime& u, std::int64_t at) const {
    for (const AnomalySpan& s : u.spans)
        if (s.kind == InjectionKind::crash && s.start < at &&
            (s.end < 0 || s.end >= at))
            return true;
    return false;
}

void Simulator::open_span(UnitRuntime& u, const std::string& key,
                          InjectionKind kind, std::int64_t t) {
    u.spans.push_back({key, kind, t, -1});
}

void Simulator::close_span(UnitRuntime& u, const std::string& key,
                           std::int64_t t) {
    for (AnomalySpan& s : u.spans)
        if (s.end < 0 && s.key == key) s.end = t;
}

InjectionKind Simulator::edge_kind(int from, int to) const {
    auto it = sc_.propagation.edge_kinds.find({from, to});
    return it == sc_.propagation.edge_kinds.end()
               ? sc_.propagation.affected_kind
               : it->second;
}

// A unit's output is corrupt while it has an active fault of its own, while
// any input is corrupt, or while it is tainted and not yet back to normal.
// Flips travel downstream with the propagation delay.
void Simulator::recompute_output(UnitRuntime& u, std::int64_t t) {
    bool corrupt =
        own_injection_active(u) || !u.corrupt_inputs.empty() ||
        (u.tainted && u.proto->state() != protocol::UnitState::normal);
    if (corrupt == u.output_corrupt) return;
    u.output_corrupt = corrupt;
    for (int d : u.spec->downstream)
        schedule(t + sc_.propagation.delay_ms, 0,
                 corrupt ? Ev::corrupt_on : Ev::corrupt_off, d, u.spec->id, 0);
}

void Simulator::apply(UnitRuntime& u, const protocol::StepResult& step,
                      std::int64_t now) {
    for (const protocol::Transition& tr : step.transitions) {
        record(now, "transition", u.spec->id,
               std::string(protocol::state_name(tr.from)) + " " +
                   protocol::state_name(tr.to));
        if (tr.to == protocol::UnitState::normal) {
            u.tainted = false;
            recompute_output(u, now);
        }
    }
    for (const protocol::Emission& em : step.emissions) send(u, em, now);
}

void Simulator::send(UnitRuntime& u, const protocol::Emission& emission,
                     std::int64_t now) {
    std::string line = wire::encode(emission.message);
    bool dropped = false;
    if (sc_.channel.loss_rate > 0)
        dropped =
            std::bernoulli_distribution(sc_.channel.loss_rate)(channel_rng_);
    record(now, dropped ? "lost" : "send", u.spec->id,
           "to=" + std::to_string(emission.target_unit) + " | " + line);
    if (dropped) return;
    units_.at(emission.target_unit)
        .mailbox.push_back(
            {now + sc_.channel.delay_ms, send_order_++, emission.message});
}

void Simulator::ingest_mailbox(UnitRuntime& u, std::int64_t boundary) {
    std::stable_sort(u.mailbox.begin(), u.mailbox.end(),
                     [](const PendingMessage& a, const PendingMessage& b) {
                         if (a.available_at != b.available_at)
                             return a.available_at < b.available_at;
                         return a.order < b.order;
                     });
    std::vector<PendingMessage> keep;
    for (PendingMessage& m : u.mailbox) {
        if (m.available_at >= boundary) {
            keep.push_back(std::move(m));
            continue;
        }
        protocol::StepResult step;
        if (const auto* b = std::get_if<wire::Beacon>(&m.message))
            step = u.proto->on_beacon(*b, boundary);
        else if (const auto* r = std::get_if<wire::StatusRequest>(&m.message))
            step = u.proto->on_status_request(*r, boundary);
        apply(u, step, boundary);
    }
    u.mailbox = std::move(keep);
}

mape::TelemetrySample Simulator::make_sample(
    UnitRuntime& u, std::int64_t boundary,
    std::vector<policy::CanEvent>& commands) {
    const TelemetryScript& script = u.spec->telemetry;
    const std::int64_t w = sc_.beacon_period_ms;
    std::set<InjectionKind> kinds = kinds_overlapping(u, boundary - w, boundary);
    kinds.erase(InjectionKind::crash);  // a hung partition still looks idle

    mape::TelemetrySample s;
    s.unit_id = u.spec->id;
    s.window_index = boundary / w;
    std::uniform_real_distribution<double> jitter(-script.jitter_pct,
                                                  script.jitter_pct);
    s.cpu_pct = std::clamp(script.cpu_pct + jitter(u.rng), 0.0, 100.0);
    s.mem_pct = std::clamp(script.mem_pct + jitter(u.rng), 0.0, 100.0);
    if (kinds.count(InjectionKind::resource_exhaustion)) s.cpu_pct = 97;

    s.processes = script.processes;
    if (kinds.count(InjectionKind::rogue_process))
        s.processes.push_back({6666, "intruder", 0xdead});

    s.syscall_counts = script.syscalls;
    if (kinds.count(InjectionKind::syscall_anomaly)) {
        for (auto& [id, count] : s.syscall_counts) count *= 3;
        s.syscall_counts[59] += 7;
    }

    for (int i = 0; i < script.can.per_window; ++i) {
        std::int64_t t =
            boundary - w + (i + 1) * w / (script.can.per_window + 1);
        s.can_frames.push_back({static_cast<int>(script.can.frame_id), t});
        commands.push_back({static_cast<int>(script.can.frame_id), t});
    }
    if (kinds.count(InjectionKind::can_flood))
        for (int i = 0; i < 40; ++i)
            s.can_frames.push_back({static_cast<int>(script.can.frame_id),
                                    boundary - w + i * w / 40});
    std::stable_sort(s.can_frames.begin(), s.can_frames.end(),
                     [](const policy::CanEvent& a, const policy::CanEvent& b) {
                         return a.t_ms < b.t_ms;
                     });

    s.heartbeat = !crash_covers(u, boundary);
    return s;
}

void Simulator::unit_window(UnitRuntime& u, std::int64_t boundary) {
    ingest_mailbox(u, boundary);

    protocol::UnitState before = u.proto->state();
    if (before != protocol::UnitState::failed) {
        std::vector<policy::CanEvent> commands;
        mape::TelemetrySample sample = make_sample(u, boundary, commands);
        if (sample.heartbeat) u.last_heartbeat_ms = boundary;

        mape::DetectorScores scores;
        scores.resource =
            mape::check_resources(
                sample, u.history,
                {sc_.detectors.cpu_threshold_pct,
                 sc_.detectors.mem_threshold_pct},
                sc_.detectors.sigma_mult)
                .score;
        scores.process =
            mape::validate_processes(sample, u.whitelist, u.snapshot).score;
        scores.syscall = mape::check_syscalls(sample, u.baseline).score;
        scores.bus = mape::cross_validate_can(sample.can_frames, commands,
                                              sc_.detectors.can_tolerance_ms)
                             .empty()
                         ? 0
                         : 1;
        if (u.bus_policy)
            scores.bus =
                scores.bus | policy::evaluate_policy(
                                 *u.bus_policy, sample.can_frames,
                                 boundary - sc_.beacon_period_ms);
        scores.heartbeat = mape::heartbeat_check(
            boundary - u.last_heartbeat_ms, sc_.beacon_period_ms,
            sc_.detectors.heartbeat_misses);

        int combined = scores.combined();
        if (combined == 0) {
            u.history.push_back(sample);
            if (static_cast<int>(u.history.size()) >
                sc_.detectors.history_window)
                u.history.erase(u.history.begin());
        }
        u.scores.push_back(combined);
        if (static_cast<int>(u.scores.size()) > sc_.detectors.vote_k)
            u.scores.erase(u.scores.begin());
        bool voted =
            mape::vote(u.scores, sc_.detectors.vote_k, sc_.detectors.vote_m);

        record(boundary, "window", u.spec->id,
               "score=" + std::to_string(combined) +
                   " vote=" + std::to_string(voted ? 1 : 0) +
                   " state=" + protocol::state_name(before));

        apply(u, u.proto->on_analysis(voted, boundary), boundary);
        if (u.proto->sick() &&
            (own_injection_active(u) || !u.corrupt_inputs.empty()) &&
            !u.tainted) {
            u.tainted = true;
            recompute_output(u, boundary);
        }
    }

    apply(u, u.proto->tick(boundary), boundary);

    if (u.proto->state() == protocol::UnitState::pending && !u.restoring &&
        u.proto->mitigation_ripe(boundary) && u.proto->try_mitigate(boundary)) {
        record(boundary, "transition", u.spec->id, "pending failed");
        do_mitigate(u, boundary);
    }
}

void Simulator::window_step(std::int64_t boundary) {
    if (in_global_reboot_) return;
    for (auto& [id, u] : units_) {
        (void)id;
        unit_window(u, boundary);
    }
}

void Simulator::do_mitigate(UnitRuntime& u, std::int64_t boundary) {
    mape::PlanContext ctx;
    ctx.source_id = u.spec->id;
    ctx.now_ms = boundary;
    ctx.first_seq = u.proto->next_seq();
    ctx.stop_delay_ms = sc_.latencies.stop_delay_cms / 100;
    std::vector<wire::PlanMessage> plans =
        mape::plan(u.spec->isolation, u.adapt, u.budget_used, ctx);
    u.proto->advance_seq(plans.size());

    bool escalation =
        plans.size() == 1 && plans[0].opcode == wire::Opcode::reboot;
    if (escalation) {
        record(boundary, "escalate", u.spec->id, "");
        record(boundary, "plan", u.spec->id, "| " + wire::encode(plans[0]));
        std::int64_t start_cms = boundary * 100;
        std::int64_t done_cms = start_cms + sc_.latencies.reboot_cms;
        record(boundary, "exec", 0,
               "op=reboot target=system start=" + std::to_string(start_cms) +
                   " done=" + std::to_string(done_cms));
        in_global_reboot_ = true;
        schedule(ceil_div100(done_cms), 0, Ev::reboot, 0, 0, 0);
        return;
    }

    for (const wire::PlanMessage& p : plans)
        record(boundary, "plan", u.spec->id, "| " + wire::encode(p));
    mape::ExecutionRecord exec = mape::execute(
        plans, pm_, boundary * 100, sc_.latencies.extra_overhead_cms);
    for (const mape::ActionOutcome& a : exec.actions)
        record(boundary, "exec", u.spec->id,
               "op=" + std::string(wire::opcode_name(a.opcode)) +
                   " target=" + a.target +
                   " start=" + std::to_string(a.start_cms) +
                   " done=" + std::to_string(a.done_cms));
    ++u.budget_used;
    u.restoring = true;
    schedule(ceil_div100(exec.restore_ready_cms), 0, Ev::restore, u.spec->id,
             0, 0);
}

void Simulator::restore_done(UnitRuntime& u, std::int64_t t) {
    record(t, "restore", u.spec->id, "");
    for (std::size_t i = 0; i < injections_.size(); ++i) {
        ActiveInjection& ai = injections_[i];
        if (!ai.active || ai.spec.unit_id != u.spec->id) continue;
        if (--ai.repairs_left <= 0) {
            ai.active = false;
            close_span(u, "inj:" + std::to_string(i), t);
        }
    }
    u.restoring = false;
    u.scores.clear();
    u.last_heartbeat_ms = t;
    apply(u, u.proto->on_mitigation_complete(t), t);
}

void Simulator::reboot_done(std::int64_t t) {
    ++generation_;
    in_global_reboot_ = false;
    record(t, "restore", 0, "");
    // Deactivate faults before touching units so the per-unit output
    // recomputation cannot re-propagate a corruption that the reboot cured.
    for (ActiveInjection& ai : injections_) {
        ai.active = false;
        ai.repairs_left = 0;
    }
    for (auto& [id, u] : units_) {
        (void)id;
        if (!u.corrupt_inputs.empty()) record(t, "corrupt", u.spec->id, "end");
        for (AnomalySpan& s : u.spans)
            if (s.end < 0) s.end = t;
        u.corrupt_inputs.clear();
        u.tainted = false;
        u.output_corrupt = false;
        u.mailbox.clear();
        u.scores.clear();
        u.last_heartbeat_ms = t;
        u.budget_used = 0;
        u.restoring = false;
        apply(u, u.proto->on_global_restart(t), t);
    }
    pm_ = mape::SimulatedPartitionManager(sc_.latencies);
    seed_partitions();
}

RunResult Simulator::run_all() {
    while (!events_.empty()) {
        Event e = events_.top();
        if (e.t > sc_.duration_ms) break;
        events_.pop();
        // The platform is down while it reboots; nothing else happens.
        if (in_global_reboot_ && e.kind != Ev::reboot) continue;
        switch (e.kind) {
            case Ev::inject: {
                ActiveInjection& ai = injections_[e.index];
                UnitRuntime& u = units_.at(ai.spec.unit_id);
                ai.active = true;
                ai.repairs_left = ai.spec.repairs_needed;
                record(e.t, "inject", u.spec->id,
                       "kind=" +
                           std::string(injection_kind_name(ai.spec.kind)) +
                           " repairs=" +
                           std::to_string(ai.spec.repairs_needed));
                open_span(u, "inj:" + std::to_string(e.index), ai.spec.kind,
                          e.t);
                recompute_output(u, e.t);
                if (ai.spec.duration_ms)
                    schedule(e.t + *ai.spec.duration_ms, 0, Ev::inject_end,
                             u.spec->id, 0, e.index);
                break;
            }
            case Ev::inject_end: {
                ActiveInjection& ai = injections_[e.index];
                if (!ai.active) break;
                UnitRuntime& u = units_.at(ai.spec.unit_id);
                ai.active = false;
                ai.repairs_left = 0;
                close_span(u, "inj:" + std::to_string(e.index), e.t);
                recompute_output(u, e.t);
                break;
            }
            case Ev::corrupt_on: {
                if (e.generation != generation_) break;
                UnitRuntime& u = units_.at(e.unit);
                bool was_clean = u.corrupt_inputs.empty();
                u.corrupt_inputs.insert(e.sender);
                open_span(u, "in:" + std::to_string(e.sender),
                          edge_kind(e.sender, e.unit), e.t);
                if (was_clean) record(e.t, "corrupt", u.spec->id, "start");
                recompute_output(u, e.t);
                break;
            }
            case Ev::corrupt_off: {
                if (e.generation != generation_) break;
                UnitRuntime& u = units_.at(e.unit);
                u.corrupt_inputs.erase(e.sender);
                close_span(u, "in:" + std::to_string(e.sender), e.t);
                if (u.corrupt_inputs.empty())
                    record(e.t, "corrupt", u.spec->id, "end");
                recompute_output(u, e.t);
                break;
            }
            case Ev::window:
                window_step(e.t);
                break;
            case Ev::restore:
                if (e.generation != generation_) break;
                restore_done(units_.at(e.unit), e.t);
                break;
            case Ev::reboot:
                reboot_done(e.t);
                break;
        }
    }

    for (const auto& [id, u] : units_) {
        std::set<int> queue = u.proto->known_failures();
        std::string joined;
        for (int q : queue) {
            if (!joined.empty()) joined += ",";
            joined += std::to_string(q);
        }
        record(sc_.duration_ms, "final", id,
               "state=" +
                   std::string(protocol::state_name(u.proto->state())) +
                   " sick=" + std::to_string(u.proto->sick()) +
                   " queue=" + (joined.empty() ? "-" : joined));
    }
    flush_bucket();

    RunResult result;
    result.log = std::move(log_);
    result.report = timing_report(result.log);
    return result;
}

}  // namespace

std::string to_text(const EventLog& log) {
    std::string out;
    for (const LogRecord& r : log.records) {
        out += std::to_string(r.t_ms);
        out += ' ';
        out += r.kind;
        out += ' ';
        out += std::to_string(r.unit_id);
        if (!r.payload.empty()) {
            out += ' ';
            out += r.payload;
        }
        out += '\n';
    }
    return out;
}

RunResult run(const Scenario& scenario) {
    Simulator sim(scenario);
    return sim.run_all();
}

TimingReport timing_report(const EventLog& log) {
    std::map<int, UnitTiming> timings;
    std::map<int, std::int64_t> last_unblocked;
    std::int64_t first_pending = -1;
    std::int64_t last_normal = -1;
    TimingReport report;

    for (const LogRecord& r : log.records) {
        if (r.unit_id <= 0) continue;
        if (r.kind == "transition") {
            std::istringstream in(r.payload);
            std::string from, to;
            in >> from >> to;
            UnitTiming& ut = timings[r.unit_id];
            ut.unit_id = r.unit_id;
            if (to == "pending") {
                if (ut.t_detect < 0) ut.t_detect = r.t_ms;
                if (first_pending < 0) first_pending = r.t_ms;
            } else if (to == "failed") {
                ut.failed = true;
                if (ut.t_mitigate_start < 0) ut.t_mitigate_start = r.t_ms;
            } else if (to == "normal") {
                last_normal = std::max(last_normal, r.t_ms);
                if (from == "failed")
                    ut.t_clear_sent = r.t_ms;
                else
                    ut.t_clear = r.t_ms;
            }
        } else if (r.kind == "restore") {
            auto it = timings.find(r.unit_id);
            if (it != timings.end()) it->second.t_restore_done = r.t_ms;
        } else if (r.kind == "corrupt" && r.payload == "end") {
            last_unblocked[r.unit_id] = r.t_ms;
        } else if (r.kind == "final") {
            if (r.payload.rfind("state=normal", 0) != 0) {
                report.timed_out = true;
                report.stuck_units.push_back(r.unit_id);
            }
        }
    }

    double failed_sum = 0, affected_sum = 0;
    int failed_n = 0, affected_n = 0;
    for (auto& [id, ut] : timings) {
        if (ut.t_detect < 0 && !ut.failed) continue;
        auto unblocked = last_unblocked.find(id);
        if (unblocked != last_unblocked.end())
            ut.t_unblocked = unblocked->second;
        if (ut.failed) {
            if (ut.t_clear_sent >= 0 && ut.t_detect >= 0) {
                failed_sum += static_cast<double>(ut.t_clear_sent - ut.t_detect);
                ++failed_n;
            }
        } else if (ut.t_clear >= 0 && ut.t_detect >= 0) {
            std::int64_t from = std::max(ut.t_detect, ut.t_unblocked);
            affected_sum += static_cast<double>(ut.t_clear - from);
            ++affected_n;
        }
        report.units.push_back(ut);
    }
    if (failed_n > 0) report.avg_failed_handling_ms = failed_sum / failed_n;
    if (affected_n > 0)
        report.avg_affected_clearing_ms = affected_sum / affected_n;
    if (first_pending >= 0 && last_normal >= first_pending)
        report.total_recovery_ms = last_normal - first_pending;
    return report;
}

std::string report_text(const TimingReport& report) {
    std::ostringstream out;
    auto cell = [](std::int64_t v) {
        return v < 0 ? std::string("-") : std::to_string(v);
    };
    out << "unit  role      detect  mitigate  restore  clear  span_ms\n";
    for (const UnitTiming& u : report.units) {
        std::int64_t clear = u.failed ? u.t_clear_sent : u.t_clear;
        std::int64_t span = -1;
        if (u.failed && u.t_clear_sent >= 0 && u.t_detect >= 0)
            span = u.t_clear_sent - u.t_detect;
        else if (!u.failed && u.t_clear >= 0 && u.t_detect >= 0)
            span = u.t_clear - std::max(u.t_detect, u.t_unblocked);
        out << std::setw(4) << u.unit_id << "  " << std::left << std::setw(8)
            << (u.failed ? "failed" : "affected") << std::right << "  "
            << std::setw(6) << cell(u.t_detect) << "  " << std::setw(8)
            << cell(u.t_mitigate_start) << "  " << std::setw(7)
            << cell(u.t_restore_done) << "  " << std::setw(5) << cell(clear)
            << "  " << std::setw(7) << cell(span) << "\n";
    }
    char line[160];
    std::snprintf(line, sizeof(line),
                  "failed handling avg: %.1f ms\n"
                  "affected clearing avg: %.1f ms\n"
                  "total recovery: %lld ms\n",
                  report.avg_failed_handling_ms,
                  report.avg_affected_clearing_ms,
                  static_cast<long long>(report.total_recovery_ms));
    out << line;
    if (report.timed_out) {
        out << "stuck:";
        for (int id : report.stuck_units) out << " " << id;
        out << "\n";
    }

    nlohmann::json j;
    j["avg_failed_handling_ms"] = report.avg_failed_handling_ms;
    j["avg_affected_clearing_ms"] = report.avg_affected_clearing_ms;
    j["total_recovery_ms"] = report.total_recovery_ms;
    j["timed_out"] = report.timed_out;
    j["stuck_units"] = report.stuck_units;
    j["units"] = nlohmann::json::array();
    for (const UnitTiming& u : report.units) {
        nlohmann::json ju;
        ju["unit"] = u.unit_id;
        ju["role"] = u.failed ? "failed" : "affected";
        ju["t_detect"] = u.t_detect;
        ju["t_mitigate_start"] = u.t_mitigate_start;
        ju["t_restore_done"] = u.t_restore_done;
        ju["t_clear_sent"] = u.t_clear_sent;
        ju["t_unblocked"] = u.t_unblocked;
        ju["t_clear"] = u.t_clear;
        j["units"].push_back(ju);
    }
    out << "---\n" << j.dump(2) << "\n";
    return out.str();
}

bool replay_check(const Scenario& scenario) {
    RunResult first = run(scenario);
    RunResult second = run(scenario);
    return to_text(first.log) == to_text(second.log);
}

}  // namespace flowguard::sim
