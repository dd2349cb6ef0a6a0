#include "flowguard/model.hpp"

#include <algorithm>
#include <functional>
#include <sstream>

namespace flowguard::model {
namespace {

void add(std::vector<Violation>& out, std::string component, std::string field,
         std::string message) {
    out.push_back({std::move(component), std::move(field), std::move(message)});
}

// Resolves a wiring endpoint against the component's own ports and its
// immediate subcomponents' ports.
bool endpoint_exists(const ComponentSpec& comp, const std::string& endpoint) {
    auto has_port = [](const ComponentSpec& c, const std::string& port) {
        for (const auto& p : c.provided)
            if (p.name == port) return true;
        for (const auto& p : c.required)
            if (p.name == port) return true;
        return false;
    };
    auto dot = endpoint.find('.');
    if (dot == std::string::npos) return has_port(comp, endpoint);
    std::string sub = endpoint.substr(0, dot);
    std::string port = endpoint.substr(dot + 1);
    for (const auto& s : comp.subcomponents)
        if (s.name == sub) return has_port(s, port);
    return false;
}

void validate_component(const ComponentSpec& comp, std::vector<Violation>& out) {
    std::set<std::string> port_names;
    auto check_ports = [&](const std::vector<Port>& ports, PortKind expected,
                           const char* field) {
        for (const auto& p : ports) {
            if (p.name.empty())
                add(out, comp.name, field, "port with empty name");
            else if (!port_names.insert(p.name).second)
                add(out, comp.name, field, "duplicate port name '" + p.name + "'");
            if (p.methods.empty())
                add(out, comp.name, field,
                    "port '" + p.name + "' declares no methods");
            if (p.kind != expected)
                add(out, comp.name, field,
                    "port '" + p.name + "' listed under the wrong kind");
        }
    };
    check_ports(comp.provided, PortKind::provided, "provided");
    check_ports(comp.required, PortKind::required, "required");

    std::set<std::string> sub_names;
    for (const auto& s : comp.subcomponents) {
        if (!sub_names.insert(s.name).second)
            add(out, comp.name, "subcomponents",
                "duplicate subcomponent '" + s.name + "'");
        validate_component(s, out);
    }
    for (const auto& w : comp.wiring) {
        if (w.from == w.to)
            add(out, comp.name, "wiring", "self-wire on '" + w.from + "'");
        if (!endpoint_exists(comp, w.from))
            add(out, comp.name, "wiring", "unknown endpoint '" + w.from + "'");
        if (!endpoint_exists(comp, w.to))
            add(out, comp.name, "wiring", "unknown endpoint '" + w.to + "'");
    }
}

std::set<std::string> method_union(const std::vector<Port>& ports) {
    std::set<std::string> all;
    for (const auto& p : ports) all.insert(p.methods.begin(), p.methods.end());
    return all;
}

}  // namespace

const UnitNode* DataFlowGraph::find(int id) const {
    for (const auto& n : nodes)
        if (n.id == id) return &n;
    return nullptr;
}

std::vector<Violation> validate_model(const ComponentModel& model,
                                      const IsolationSpec& spec,
                                      const std::vector<double>& host_resources) {
    std::vector<Violation> out;

    std::set<std::string> names;
    for (const auto& c : model.components) {
        if (c.name.empty())
            add(out, "", "components", "component with empty name");
        else if (!names.insert(c.name).second)
            add(out, c.name, "components", "duplicate component name");
        validate_component(c, out);
    }

    for (const auto& [from, to] : model.connections) {
        if (!names.count(from))
            add(out, from, "connections", "connection from unknown component");
        if (!names.count(to))
            add(out, to, "connections", "connection to unknown component");
        if (from == to)
            add(out, from, "connections", "self-connection");
        if (!names.count(from) || !names.count(to) || from == to) continue;

        // Data can only flow across a connection if the producer exposes at
        // least one method the consumer asks for.
        const ComponentSpec* a = nullptr;
        const ComponentSpec* b = nullptr;
        for (const auto& c : model.components) {
            if (c.name == from) a = &c;
            if (c.name == to) b = &c;
        }
        auto provided = method_union(a->provided);
        auto required = method_union(b->required);
        if (provided.empty()) {
            add(out, from, "ports",
                "connection to '" + to + "' but no provided ports");
            continue;
        }
        if (required.empty()) {
            add(out, to, "ports",
                "connection from '" + from + "' but no required ports");
            continue;
        }
        bool overlap = std::any_of(required.begin(), required.end(),
                                   [&](const std::string& m) {
                                       return provided.count(m) != 0;
                                   });
        if (!overlap)
            add(out, from, "ports",
                "no method in common with consumer '" + to + "'");
    }

    // Deployment constraints.
    for (const auto& c : model.components) {
        auto it = spec.records.find(c.name);
        if (it == spec.records.end()) {
            add(out, c.name, "isolation", "no isolation record");
            continue;
        }
        const IsolationRecord& r = it->second;
        if (r.resources.size() != host_resources.size())
            add(out, c.name, "resources",
                "resource vector has wrong dimension");
        for (double v : r.resources)
            if (v < 0)
                add(out, c.name, "resources", "negative resource demand");
        if (r.isolation_type != 0 && r.isolation_type != 1)
            add(out, c.name, "isolation_type", "must be 0 or 1");
        if (r.has_backup != 0 && r.has_backup != 1)
            add(out, c.name, "has_backup", "must be 0 or 1");
        if (r.mitigation_budget < 0)
            add(out, c.name, "mitigation_budget", "must be non-negative");
    }
    for (const auto& [name, r] : spec.records)
        if (!names.count(name))
            add(out, name, "isolation", "record for unknown component");

    for (std::size_t d = 0; d < host_resources.size(); ++d) {
        double total = 0;
        bool usable = true;
        for (const auto& c : model.components) {
            auto it = spec.records.find(c.name);
            if (it == spec.records.end() ||
                it->second.resources.size() != host_resources.size()) {
                usable = false;
                break;
            }
            total += it->second.resources[d];
        }
        if (usable && total > host_resources[d]) {
            std::ostringstream msg;
            msg << "demand " << total << " exceeds host capacity "
                << host_resources[d] << " in dimension " << d;
            add(out, "", "resources", msg.str());
        }
    }
    return out;
}

DataFlowGraph derive_dfg(const ComponentModel& model,
                         const std::map<std::string, int>& id_assignment) {
    std::map<int, std::string> by_id;
    for (const auto& [name, id] : id_assignment) {
        auto [it, inserted] = by_id.emplace(id, name);
        if (!inserted)
            throw ModelError("duplicate unit id " + std::to_string(id) +
                             " assigned to '" + it->second + "' and '" + name +
                             "'");
    }
    for (const auto& c : model.components)
        if (!id_assignment.count(c.name))
            throw ModelError("component '" + c.name + "' has no unit id");
    if (id_assignment.size() != model.components.size())
        throw ModelError("id assignment names components outside the model");

    DataFlowGraph dfg;
    for (const auto& c : model.components) {
        UnitNode n;
        n.component = c.name;
        n.id = id_assignment.at(c.name);
        dfg.nodes.push_back(std::move(n));
    }
    auto node_of = [&](const std::string& name) -> UnitNode& {
        for (auto& n : dfg.nodes)
            if (n.component == name) return n;
        throw ModelError("connection references unknown component '" + name +
                         "'");
    };
    for (const auto& [from, to] : model.connections) {
        UnitNode& a = node_of(from);
        UnitNode& b = node_of(to);
        dfg.flows.emplace_back(a.id, b.id);
        a.downstream.insert(b.id);
        b.upstream.insert(a.id);
    }
    return dfg;
}

std::vector<std::vector<int>> detect_cycles(const DataFlowGraph& dfg) {
    // Iterative Tarjan SCC; every SCC that contains a cycle yields one
    // closed walk through all of its members.
    std::map<int, std::vector<int>> adj;
    std::vector<int> ids;
    for (const auto& n : dfg.nodes) {
        adj[n.id];
        ids.push_back(n.id);
    }
    for (const auto& [a, b] : dfg.flows) adj[a].push_back(b);

    std::map<int, int> index, low, comp;
    std::vector<int> stack;
    std::set<int> on_stack;
    int next_index = 0, next_comp = 0;
    std::map<int, std::vector<int>> comp_members;

    std::function<void(int)> strongconnect = [&](int v) {
        index[v] = low[v] = next_index++;
        stack.push_back(v);
        on_stack.insert(v);
        for (int w : adj[v]) {
            if (!index.count(w)) {
                strongconnect(w);
                low[v] = std::min(low[v], low[w]);
            } else if (on_stack.count(w)) {
                low[v] = std::min(low[v], index[w]);
            }
        }
        if (low[v] == index[v]) {
            int c = next_comp++;
            while (true) {
                int w = stack.back();
                stack.pop_back();
                on_stack.erase(w);
                comp[w] = c;
                comp_members[c].push_back(w);
                if (w == v) break;
            }
        }
    };
    for (int v : ids)
        if (!index.count(v)) strongconnect(v);

    std::vector<std::vector<int>> cycles;
    for (auto& [c, members] : comp_members) {
        bool cyclic = members.size() > 1;
        if (!cyclic) {
            int v = members[0];
            for (int w : adj[v])
                if (w == v) cyclic = true;
        }
        if (!cyclic) continue;

        // DFS inside the SCC until some node on the current path repeats;
        // the segment between its two visits is a genuine cycle.
        std::sort(members.begin(), members.end());
        int start = members[0];
        std::vector<int> path{start};
        std::map<int, std::size_t> pos{{start, 0}};
        std::vector<int> cycle;
        std::function<bool(int)> walk = [&](int v) {
            for (int w : adj[v]) {
                if (comp[w] != c) continue;
                auto it = pos.find(w);
                if (it != pos.end()) {
                    cycle.assign(path.begin() + it->second, path.end());
                    cycle.push_back(w);
                    return true;
                }
                pos[w] = path.size();
                path.push_back(w);
                if (walk(w)) return true;
                path.pop_back();
                pos.erase(w);
            }
            return false;
        };
        walk(start);
        cycles.push_back(std::move(cycle));
    }
    return cycles;
}

std::set<int> upstream(const DataFlowGraph& dfg, int id) {
    const UnitNode* n = dfg.find(id);
    if (!n) throw ModelError("unknown unit id " + std::to_string(id));
    return n->upstream;
}

std::set<int> downstream(const DataFlowGraph& dfg, int id) {
    const UnitNode* n = dfg.find(id);
    if (!n) throw ModelError("unknown unit id " + std::to_string(id));
    return n->downstream;
}

}  // namespace flowguard::model
