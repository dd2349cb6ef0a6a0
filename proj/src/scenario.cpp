#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <queue>
#include <sstream>

#include <json.hpp>

#include "flowguard/policy.hpp"
#include "flowguard/sim.hpp"

namespace flowguard::sim {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& message) {
    throw ScenarioError(path + ": " + message);
}

std::string joined(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

std::string elem(const std::string& path, std::size_t index) {
    return path + "[" + std::to_string(index) + "]";
}

void expect_keys(const json& obj, const std::string& path,
                 std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = std::any_of(allowed.begin(), allowed.end(),
                                 [&](const char* a) { return it.key() == a; });
        if (!known) fail(path, "unknown field '" + it.key() + "'");
    }
}

const json* find(const json& obj, const char* key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

const json& require(const json& obj, const std::string& path, const char* key) {
    const json* v = find(obj, key);
    if (!v) fail(path, std::string("missing field '") + key + "'");
    return *v;
}

const json& as_object(const json& v, const std::string& path) {
    if (!v.is_object()) fail(path, "expected an object");
    return v;
}

const json& as_array(const json& v, const std::string& path) {
    if (!v.is_array()) fail(path, "expected an array");
    return v;
}

std::int64_t as_int(const json& v, const std::string& path) {
    if (!v.is_number_integer()) fail(path, "expected an integer");
    return v.get<std::int64_t>();
}

double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) fail(path, "expected a number");
    return v.get<double>();
}

bool as_bool(const json& v, const std::string& path) {
    if (!v.is_boolean()) fail(path, "expected a boolean");
    return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path) {
    if (!v.is_string()) fail(path, "expected a string");
    return v.get<std::string>();
}

std::int64_t int_field(const json& obj, const std::string& path,
                       const char* key, std::int64_t fallback) {
    const json* v = find(obj, key);
    return v ? as_int(*v, joined(path, key)) : fallback;
}

double num_field(const json& obj, const std::string& path, const char* key,
                 double fallback) {
    const json* v = find(obj, key);
    return v ? as_number(*v, joined(path, key)) : fallback;
}

bool bool_field(const json& obj, const std::string& path, const char* key,
                bool fallback) {
    const json* v = find(obj, key);
    return v ? as_bool(*v, joined(path, key)) : fallback;
}

std::string str_field(const json& obj, const std::string& path,
                      const char* key, const std::string& fallback) {
    const json* v = find(obj, key);
    return v ? as_string(*v, joined(path, key)) : fallback;
}

std::string slug(const std::string& name) {
    std::string s;
    for (char c : name)
        s += (c == ' ') ? '-'
                        : static_cast<char>(std::tolower(
                              static_cast<unsigned char>(c)));
    return s;
}

InjectionKind parse_kind(const std::string& text, const std::string& path) {
    for (InjectionKind k :
         {InjectionKind::resource_exhaustion, InjectionKind::rogue_process,
          InjectionKind::syscall_anomaly, InjectionKind::can_flood,
          InjectionKind::crash})
        if (text == injection_kind_name(k)) return k;
    fail(path, "unknown injection kind '" + text + "'");
}

// Latency fields are written in milliseconds and stored in hundredths.
std::int64_t cms_field(const json& obj, const std::string& path,
                       const char* key, std::int64_t fallback_cms) {
    const json* v = find(obj, key);
    if (!v) return fallback_cms;
    double ms = as_number(*v, joined(path, key));
    if (ms < 0) fail(joined(path, key), "must be non-negative");
    return std::llround(ms * 100.0);
}

ChannelConfig parse_channel(const json& v, const std::string& path) {
    const json& obj = as_object(v, path);
    expect_keys(obj, path, {"delay_ms", "loss_rate", "seed"});
    ChannelConfig c;
    c.delay_ms = int_field(obj, path, "delay_ms", c.delay_ms);
    c.loss_rate = num_field(obj, path, "loss_rate", c.loss_rate);
    c.seed = static_cast<std::uint64_t>(
        int_field(obj, path, "seed", static_cast<std::int64_t>(c.seed)));
    if (c.delay_ms < 0) fail(joined(path, "delay_ms"), "must be non-negative");
    if (c.loss_rate < 0 || c.loss_rate > 1)
        fail(joined(path, "loss_rate"), "must be in [0, 1]");
    return c;
}

mape::PartitionLatencies parse_latencies(const json& v,
                                         const std::string& path) {
    const json& obj = as_object(v, path);
    expect_keys(obj, path,
                {"container_boot_ms", "service_launch_ms", "hot_restore_ms",
                 "stop_ms", "stop_delay_ms", "pause_ms", "reboot_ms",
                 "extra_overhead_ms"});
    mape::PartitionLatencies l;
    l.container_boot_cms =
        cms_field(obj, path, "container_boot_ms", l.container_boot_cms);
    l.service_launch_cms =
        cms_field(obj, path, "service_launch_ms", l.service_launch_cms);
    l.hot_restore_cms =
        cms_field(obj, path, "hot_restore_ms", l.hot_restore_cms);
    l.stop_cms = cms_field(obj, path, "stop_ms", l.stop_cms);
    l.stop_delay_cms = cms_field(obj, path, "stop_delay_ms", l.stop_delay_cms);
    l.pause_cms = cms_field(obj, path, "pause_ms", l.pause_cms);
    l.reboot_cms = cms_field(obj, path, "reboot_ms", l.reboot_cms);
    l.extra_overhead_cms =
        cms_field(obj, path, "extra_overhead_ms", l.extra_overhead_cms);
    return l;
}

DetectorConfig parse_detectors(const json& v, const std::string& path) {
    const json& obj = as_object(v, path);
    expect_keys(obj, path,
                {"cpu_threshold_pct", "mem_threshold_pct", "sigma_mult",
                 "history_window", "vote_k", "vote_m", "heartbeat_misses",
                 "syscall_slack", "can_tolerance_ms"});
    DetectorConfig d;
    d.cpu_threshold_pct =
        num_field(obj, path, "cpu_threshold_pct", d.cpu_threshold_pct);
    d.mem_threshold_pct =
        num_field(obj, path, "mem_threshold_pct", d.mem_threshold_pct);
    d.sigma_mult = num_field(obj, path, "sigma_mult", d.sigma_mult);
    d.history_window = static_cast<int>(
        int_field(obj, path, "history_window", d.history_window));
    d.vote_k = static_cast<int>(int_field(obj, path, "vote_k", d.vote_k));
    d.vote_m = static_cast<int>(int_field(obj, path, "vote_m", d.vote_m));
    d.heartbeat_misses = static_cast<int>(
        int_field(obj, path, "heartbeat_misses", d.heartbeat_misses));
    d.syscall_slack = num_field(obj, path, "syscall_slack", d.syscall_slack);
    d.can_tolerance_ms =
        int_field(obj, path, "can_tolerance_ms", d.can_tolerance_ms);
    if (d.history_window < 1)
        fail(joined(path, "history_window"), "must be at least 1");
    if (d.vote_k < 1) fail(joined(path, "vote_k"), "must be at least 1");
    if (d.vote_m < 1 || d.vote_m > d.vote_k)
        fail(joined(path, "vote_m"), "must be in [1, vote_k]");
    if (d.heartbeat_misses < 1)
        fail(joined(path, "heartbeat_misses"), "must be at least 1");
    if (d.syscall_slack < 0)
        fail(joined(path, "syscall_slack"), "must be non-negative");
    if (d.can_tolerance_ms < 0)
        fail(joined(path, "can_tolerance_ms"), "must be non-negative");
    return d;
}

protocol::ProtocolConfig parse_protocol(const json& v,
                                        const std::string& path) {
    const json& obj = as_object(v, path);
    expect_keys(obj, path,
                {"status_timeout_periods", "assertion_window_ms",
                 "washout_window_ms"});
    protocol::ProtocolConfig p;
    p.status_timeout_periods = static_cast<int>(int_field(
        obj, path, "status_timeout_periods", p.status_timeout_periods));
    p.assertion_window_ms =
        int_field(obj, path, "assertion_window_ms", p.assertion_window_ms);
    p.washout_window_ms =
        int_field(obj, path, "washout_window_ms", p.washout_window_ms);
    if (p.status_timeout_periods < 1)
        fail(joined(path, "status_timeout_periods"), "must be at least 1");
    if (p.assertion_window_ms < 0)
        fail(joined(path, "assertion_window_ms"), "must be non-negative");
    if (p.washout_window_ms < 0)
        fail(joined(path, "washout_window_ms"), "must be non-negative");
    return p;
}

int parse_frame_id(const json& v, const std::string& path) {
    if (v.is_number_integer()) {
        std::int64_t id = v.get<std::int64_t>();
        if (id < 0) fail(path, "must be non-negative");
        return static_cast<int>(id);
    }
    if (v.is_string()) {
        std::string s = v.get<std::string>();
        if (s.rfind("0x", 0) == 0 || s.rfind("0X", 0) == 0) {
            try {
                std::size_t used = 0;
                int id = std::stoi(s.substr(2), &used, 16);
                if (used == s.size() - 2 && id >= 0) return id;
            } catch (const std::exception&) {
            }
        }
        fail(path, "expected an integer or a 0x-prefixed hex string");
    }
    fail(path, "expected an integer or a 0x-prefixed hex string");
}

TelemetryScript parse_telemetry(const json& v, const std::string& path) {
    const json& obj = as_object(v, path);
    expect_keys(obj, path,
                {"cpu_pct", "mem_pct", "jitter_pct", "syscalls", "processes",
                 "can"});
    TelemetryScript t;
    t.cpu_pct = num_field(obj, path, "cpu_pct", t.cpu_pct);
    t.mem_pct = num_field(obj, path, "mem_pct", t.mem_pct);
    t.jitter_pct = num_field(obj, path, "jitter_pct", t.jitter_pct);
    if (t.cpu_pct < 0 || t.cpu_pct > 100)
        fail(joined(path, "cpu_pct"), "must be in [0, 100]");
    if (t.mem_pct < 0 || t.mem_pct > 100)
        fail(joined(path, "mem_pct"), "must be in [0, 100]");
    if (t.jitter_pct < 0) fail(joined(path, "jitter_pct"), "must be non-negative");
    if (const json* sys = find(obj, "syscalls")) {
        const std::string sys_path = joined(path, "syscalls");
        const json& m = as_object(*sys, sys_path);
        for (auto it = m.begin(); it != m.end(); ++it) {
            int id = 0;
            try {
                std::size_t used = 0;
                id = std::stoi(it.key(), &used);
                if (used != it.key().size() || id < 0) throw std::exception();
            } catch (const std::exception&) {
                fail(sys_path, "bad syscall id '" + it.key() + "'");
            }
            std::int64_t count =
                as_int(it.value(), sys_path + "." + it.key());
            if (count < 0)
                fail(sys_path + "." + it.key(), "must be non-negative");
            t.syscalls[id] = static_cast<int>(count);
        }
    }
    if (const json* procs = find(obj, "processes")) {
        const std::string procs_path = joined(path, "processes");
        const json& arr = as_array(*procs, procs_path);
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string p_path = elem(procs_path, i);
            const json& p = as_object(arr[i], p_path);
            expect_keys(p, p_path, {"pid", "name", "cr3"});
            mape::ProcessInfo info;
            info.pid = static_cast<int>(
                as_int(require(p, p_path, "pid"), joined(p_path, "pid")));
            info.name = as_string(require(p, p_path, "name"),
                                  joined(p_path, "name"));
            info.cr3 = static_cast<std::uint64_t>(
                int_field(p, p_path, "cr3", 0));
            t.processes.push_back(std::move(info));
        }
    }
    if (const json* can = find(obj, "can")) {
        const std::string can_path = joined(path, "can");
        const json& c = as_object(*can, can_path);
        expect_keys(c, can_path, {"frame_id", "per_window"});
        if (const json* fid = find(c, "frame_id"))
            t.can.frame_id = static_cast<std::uint32_t>(
                parse_frame_id(*fid, joined(can_path, "frame_id")));
        t.can.per_window = static_cast<int>(
            int_field(c, can_path, "per_window", t.can.per_window));
        if (t.can.per_window < 0)
            fail(joined(can_path, "per_window"), "must be non-negative");
    }
    return t;
}

model::IsolationRecord parse_isolation(const json& v, const std::string& path) {
    const json& obj = as_object(v, path);
    expect_keys(obj, path,
                {"resources", "isolation_type", "has_backup",
                 "mitigation_budget"});
    model::IsolationRecord r;
    const std::string res_path = joined(path, "resources");
    const json& res = as_array(require(obj, path, "resources"), res_path);
    if (res.empty()) fail(res_path, "must not be empty");
    for (std::size_t i = 0; i < res.size(); ++i)
        r.resources.push_back(as_number(res[i], elem(res_path, i)));
    r.isolation_type = static_cast<int>(
        int_field(obj, path, "isolation_type", r.isolation_type));
    r.has_backup =
        static_cast<int>(int_field(obj, path, "has_backup", r.has_backup));
    r.mitigation_budget = static_cast<int>(
        int_field(obj, path, "mitigation_budget", r.mitigation_budget));
    if (r.isolation_type != 0 && r.isolation_type != 1)
        fail(joined(path, "isolation_type"), "must be 0 or 1");
    if (r.has_backup != 0 && r.has_backup != 1)
        fail(joined(path, "has_backup"), "must be 0 or 1");
    if (r.mitigation_budget < 0)
        fail(joined(path, "mitigation_budget"), "must be non-negative");
    return r;
}

UnitSpec parse_unit(const json& v, const std::string& path) {
    const json& obj = as_object(v, path);
    expect_keys(obj, path,
                {"id", "component", "downstream", "isolation", "backup_hot",
                 "telemetry", "policy"});
    UnitSpec u;
    u.id = static_cast<int>(
        as_int(require(obj, path, "id"), joined(path, "id")));
    if (u.id < 1) fail(joined(path, "id"), "must be at least 1");
    u.component =
        as_string(require(obj, path, "component"), joined(path, "component"));
    if (u.component.empty()) fail(joined(path, "component"), "must not be empty");
    if (const json* ds = find(obj, "downstream")) {
        const std::string ds_path = joined(path, "downstream");
        const json& arr = as_array(*ds, ds_path);
        for (std::size_t i = 0; i < arr.size(); ++i) {
            int id = static_cast<int>(as_int(arr[i], elem(ds_path, i)));
            if (std::find(u.downstream.begin(), u.downstream.end(), id) !=
                u.downstream.end())
                fail(ds_path, "duplicate id " + std::to_string(id));
            if (id == u.id) fail(ds_path, "unit feeds itself");
            u.downstream.push_back(id);
        }
    }
    u.isolation =
        parse_isolation(require(obj, path, "isolation"), joined(path, "isolation"));
    u.backup_hot = bool_field(obj, path, "backup_hot", u.backup_hot);
    if (const json* tel = find(obj, "telemetry"))
        u.telemetry = parse_telemetry(*tel, joined(path, "telemetry"));
    if (u.telemetry.processes.empty()) {
        mape::ProcessInfo info;
        info.pid = 100 + u.id;
        info.name = slug(u.component);
        info.cr3 = 0x1000u + static_cast<std::uint64_t>(u.id);
        u.telemetry.processes.push_back(std::move(info));
    }
    if (u.telemetry.syscalls.empty())
        u.telemetry.syscalls = {{0, 120}, {1, 80}};
    if (const json* pol = find(obj, "policy")) {
        const std::string pol_path = joined(path, "policy");
        u.policy = as_string(*pol, pol_path);
        try {
            policy::parse_policy(*u.policy);
        } catch (const policy::ParseError& e) {
            fail(pol_path, e.what());
        }
    }
    return u;
}

Injection parse_injection(const json& v, const std::string& path) {
    const json& obj = as_object(v, path);
    expect_keys(obj, path,
                {"at_ms", "unit", "kind", "repairs_needed", "duration_ms"});
    Injection inj;
    inj.at_ms = as_int(require(obj, path, "at_ms"), joined(path, "at_ms"));
    if (inj.at_ms < 0) fail(joined(path, "at_ms"), "must be non-negative");
    inj.unit_id = static_cast<int>(
        as_int(require(obj, path, "unit"), joined(path, "unit")));
    inj.kind = parse_kind(
        as_string(require(obj, path, "kind"), joined(path, "kind")),
        joined(path, "kind"));
    inj.repairs_needed = static_cast<int>(
        int_field(obj, path, "repairs_needed", inj.repairs_needed));
    if (inj.repairs_needed < 1)
        fail(joined(path, "repairs_needed"), "must be at least 1");
    if (const json* dur = find(obj, "duration_ms")) {
        std::int64_t d = as_int(*dur, joined(path, "duration_ms"));
        if (d < 1) fail(joined(path, "duration_ms"), "must be at least 1");
        inj.duration_ms = d;
    }
    return inj;
}

PropagationConfig parse_propagation(const json& v, const std::string& path) {
    const json& obj = as_object(v, path);
    expect_keys(obj, path, {"delay_ms", "affected_kind", "edge_kinds"});
    PropagationConfig p;
    p.delay_ms = int_field(obj, path, "delay_ms", p.delay_ms);
    if (p.delay_ms < 0) fail(joined(path, "delay_ms"), "must be non-negative");
    if (const json* kind = find(obj, "affected_kind"))
        p.affected_kind =
            parse_kind(as_string(*kind, joined(path, "affected_kind")),
                       joined(path, "affected_kind"));
    if (p.affected_kind == InjectionKind::crash)
        fail(joined(path, "affected_kind"),
             "a crash does not travel over data edges");
    if (const json* edges = find(obj, "edge_kinds")) {
        const std::string edges_path = joined(path, "edge_kinds");
        const json& m = as_object(*edges, edges_path);
        for (auto it = m.begin(); it != m.end(); ++it) {
            const std::string& key = it.key();
            std::size_t arrow = key.find("->");
            int from = 0, to = 0;
            bool ok = arrow != std::string::npos;
            if (ok) {
                try {
                    std::size_t used = 0;
                    from = std::stoi(key.substr(0, arrow), &used);
                    ok = used == arrow;
                    std::string rest = key.substr(arrow + 2);
                    to = std::stoi(rest, &used);
                    ok = ok && used == rest.size();
                } catch (const std::exception&) {
                    ok = false;
                }
            }
            if (!ok) fail(edges_path, "bad edge key '" + key + "'");
            InjectionKind k =
                parse_kind(as_string(it.value(), edges_path + "." + key),
                           edges_path + "." + key);
            if (k == InjectionKind::crash)
                fail(edges_path + "." + key,
                     "a crash does not travel over data edges");
            p.edge_kinds[{from, to}] = k;
        }
    }
    return p;
}

// Structural checks that need the whole scenario in hand.
void check_scenario(const Scenario& s) {
    std::map<int, const UnitSpec*> by_id;
    std::set<std::string> components;
    for (std::size_t i = 0; i < s.units.size(); ++i) {
        const UnitSpec& u = s.units[i];
        if (!by_id.emplace(u.id, &u).second)
            fail(joined(elem("units", i), "id"),
                 "duplicate unit id " + std::to_string(u.id));
        if (!components.insert(u.component).second)
            fail(joined(elem("units", i), "component"),
                 "duplicate component '" + u.component + "'");
    }
    for (std::size_t i = 0; i < s.units.size(); ++i)
        for (int d : s.units[i].downstream)
            if (!by_id.count(d))
                fail(joined(elem("units", i), "downstream"),
                     "unknown unit id " + std::to_string(d));
    for (std::size_t i = 0; i < s.injections.size(); ++i) {
        const Injection& inj = s.injections[i];
        if (!by_id.count(inj.unit_id))
            fail(joined(elem("injections", i), "unit"),
                 "unknown unit id " + std::to_string(inj.unit_id));
        if (inj.at_ms >= s.duration_ms)
            fail(joined(elem("injections", i), "at_ms"),
                 "at " + std::to_string(inj.at_ms) +
                     " but the scenario ends at " +
                     std::to_string(s.duration_ms));
    }
    for (const auto& [edge, kind] : s.propagation.edge_kinds) {
        (void)kind;
        auto it = by_id.find(edge.first);
        std::string name = std::to_string(edge.first) + "->" +
                           std::to_string(edge.second);
        if (it == by_id.end() ||
            std::find(it->second->downstream.begin(),
                      it->second->downstream.end(),
                      edge.second) == it->second->downstream.end())
            fail("propagation.edge_kinds",
                 "no edge " + name + " in the unit graph");
    }
    std::int64_t washout_floor =
        s.propagation.delay_ms + 2 * s.beacon_period_ms;
    if (s.protocol.washout_window_ms < washout_floor)
        fail("protocol.washout_window_ms",
             "must be at least the propagation delay plus two beacon "
             "periods (" +
                 std::to_string(washout_floor) + ")");
    if (s.host_resources) {
        for (std::size_t i = 0; i < s.host_resources->size(); ++i)
            if ((*s.host_resources)[i] < 0)
                fail(elem("host_resources", i), "must be non-negative");
    }
}

model::DataFlowGraph scenario_dfg(const Scenario& s) {
    model::DataFlowGraph dfg;
    std::map<int, std::size_t> index;
    for (const UnitSpec& u : s.units) {
        model::UnitNode node;
        node.component = u.component;
        node.id = u.id;
        index[u.id] = dfg.nodes.size();
        dfg.nodes.push_back(std::move(node));
    }
    for (const UnitSpec& u : s.units)
        for (int d : u.downstream) {
            dfg.nodes[index[u.id]].downstream.insert(d);
            dfg.nodes[index[d]].upstream.insert(u.id);
            dfg.flows.emplace_back(u.id, d);
        }
    return dfg;
}

}  // namespace

const char* injection_kind_name(InjectionKind kind) {
    switch (kind) {
        case InjectionKind::resource_exhaustion: return "resource_exhaustion";
        case InjectionKind::rogue_process: return "rogue_process";
        case InjectionKind::syscall_anomaly: return "syscall_anomaly";
        case InjectionKind::can_flood: return "can_flood";
        case InjectionKind::crash: return "crash";
    }
    return "unknown";
}

Scenario parse_scenario(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ScenarioError(std::string("json parse error: ") + e.what());
    }
    const json& obj = as_object(root, "scenario");
    expect_keys(obj, "scenario",
                {"name", "description", "duration_ms", "seed",
                 "beacon_period_ms", "channel", "latencies", "detectors",
                 "protocol", "units", "injections", "propagation",
                 "host_resources"});

    Scenario s;
    s.name = as_string(require(obj, "scenario", "name"), "name");
    if (s.name.empty()) fail("name", "must not be empty");
    s.description = str_field(obj, "", "description", "");
    s.duration_ms =
        as_int(require(obj, "scenario", "duration_ms"), "duration_ms");
    if (s.duration_ms < 1) fail("duration_ms", "must be at least 1");
    s.seed = static_cast<std::uint64_t>(
        int_field(obj, "", "seed", static_cast<std::int64_t>(s.seed)));
    s.beacon_period_ms =
        int_field(obj, "", "beacon_period_ms", s.beacon_period_ms);
    if (s.beacon_period_ms < 1) fail("beacon_period_ms", "must be at least 1");
    if (const json* v = find(obj, "channel"))
        s.channel = parse_channel(*v, "channel");
    if (const json* v = find(obj, "latencies"))
        s.latencies = parse_latencies(*v, "latencies");
    if (const json* v = find(obj, "detectors"))
        s.detectors = parse_detectors(*v, "detectors");
    if (const json* v = find(obj, "protocol"))
        s.protocol = parse_protocol(*v, "protocol");
    s.protocol.beacon_period_ms = s.beacon_period_ms;

    const json& units = as_array(require(obj, "scenario", "units"), "units");
    if (units.empty()) fail("units", "at least one unit required");
    for (std::size_t i = 0; i < units.size(); ++i)
        s.units.push_back(parse_unit(units[i], elem("units", i)));

    if (const json* v = find(obj, "injections")) {
        const json& arr = as_array(*v, "injections");
        for (std::size_t i = 0; i < arr.size(); ++i)
            s.injections.push_back(
                parse_injection(arr[i], elem("injections", i)));
    }
    if (const json* v = find(obj, "propagation"))
        s.propagation = parse_propagation(*v, "propagation");
    if (const json* v = find(obj, "host_resources")) {
        const json& arr = as_array(*v, "host_resources");
        std::vector<double> host;
        for (std::size_t i = 0; i < arr.size(); ++i)
            host.push_back(as_number(arr[i], elem("host_resources", i)));
        s.host_resources = std::move(host);
    }

    check_scenario(s);
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ScenarioError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str());
}

std::vector<model::Violation> validate_scenario(const Scenario& scenario) {
    model::ComponentModel m;
    model::IsolationSpec spec;
    std::map<int, std::string> names;
    for (const UnitSpec& u : scenario.units) names[u.id] = u.component;
    for (const UnitSpec& u : scenario.units) {
        model::ComponentSpec c;
        c.name = u.component;
        model::Port out;
        out.name = "out";
        out.kind = model::PortKind::provided;
        out.methods = {slug(u.component) + "/data"};
        c.provided.push_back(std::move(out));
        m.components.push_back(std::move(c));
        spec.records[u.component] = u.isolation;
    }
    for (const UnitSpec& u : scenario.units)
        for (int d : u.downstream) {
            m.connections.emplace_back(u.component, names[d]);
            for (auto& c : m.components) {
                if (c.name != names[d]) continue;
                model::Port in;
                in.name = "in-" + slug(u.component);
                in.kind = model::PortKind::required;
                in.methods = {slug(u.component) + "/data"};
                c.required.push_back(std::move(in));
            }
        }
    std::vector<double> host;
    if (scenario.host_resources) {
        host = *scenario.host_resources;
    } else {
        host.assign(scenario.units.front().isolation.resources.size(),
                    std::numeric_limits<double>::infinity());
    }
    auto violations = model::validate_model(m, spec, host);
    if (violations.empty()) {
        std::map<std::string, int> assignment;
        for (const UnitSpec& u : scenario.units)
            assignment[u.component] = u.id;
        model::derive_dfg(m, assignment);
    }
    return violations;
}

std::vector<std::vector<int>> scenario_cycles(const Scenario& scenario) {
    return model::detect_cycles(scenario_dfg(scenario));
}

double compose_expected(const Scenario& scenario, double failed_handling_ms,
                        double affected_clearing_ms) {
    if (!scenario_cycles(scenario).empty())
        throw ScenarioError(
            "compose_expected: cyclic dependency graphs are unsupported");
    std::set<int> injected;
    for (const Injection& inj : scenario.injections)
        injected.insert(inj.unit_id);
    if (injected.empty()) return 0;

    std::map<int, std::vector<int>> down;
    std::map<int, int> indegree;
    for (const UnitSpec& u : scenario.units) down[u.id] = u.downstream;

    // Everything reachable from an injected unit recovers; nothing else moves.
    std::set<int> closure = injected;
    std::queue<int> frontier;
    for (int id : injected) frontier.push(id);
    while (!frontier.empty()) {
        int id = frontier.front();
        frontier.pop();
        for (int d : down[id])
            if (closure.insert(d).second) frontier.push(d);
    }

    for (int id : closure) indegree[id] = 0;
    for (int id : closure)
        for (int d : down[id])
            if (closure.count(d)) ++indegree[d];

    std::map<int, double> finish;
    std::queue<int> ready;
    for (auto& [id, deg] : indegree)
        if (deg == 0) ready.push(id);
    double worst = 0;
    while (!ready.empty()) {
        int id = ready.front();
        ready.pop();
        double start = finish.count(id) ? finish[id] : 0;
        double cost =
            injected.count(id) ? failed_handling_ms : affected_clearing_ms;
        double done = start + cost;
        finish[id] = done;
        worst = std::max(worst, done);
        for (int d : down[id]) {
            if (!closure.count(d)) continue;
            finish[d] = std::max(finish.count(d) ? finish[d] : 0, done);
            if (--indegree[d] == 0) ready.push(d);
        }
    }
    return worst;
}

}  // namespace flowguard::sim
