#pragma once

#include <cstdint>
#include <exception>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace flowguard::model {

enum class PortKind { provided, required };

// "sync" ports block the caller until the callee answers, "async" ports are
// fire-and-forget topics.  The distinction is carried through validation but
// does not affect graph derivation.
enum class PortMode { sync, async };

struct Port {
    std::string name;                 // identifier, unique within its component
    std::set<std::string> methods;    // method/topic names exposed or consumed
    PortKind kind = PortKind::provided;
    PortMode mode = PortMode::async;
};

// A directed wire between two ports inside a composite component.  Endpoints
// are written "portname" for the component's own ports or "sub.portname" for
// a subcomponent's port.
struct Wire {
    std::string from;
    std::string to;
};

struct ComponentSpec {
    std::string name;
    std::vector<Port> provided;
    std::vector<Port> required;
    std::vector<ComponentSpec> subcomponents;
    std::vector<Wire> wiring;

    bool atomic() const { return subcomponents.empty(); }
};

// An application is a set of components plus directed connections between
// them.  A connection (a, b) means data produced by a is consumed by b.
struct ComponentModel {
    std::vector<ComponentSpec> components;
    std::vector<std::pair<std::string, std::string>> connections;
};

// Deployment constraints for one component: resource demand vector r,
// isolation type t (0 = strong/VM, 1 = lightweight/container), whether a
// standby backup exists (s), and how many local mitigations may be attempted
// before escalating (budget).
struct IsolationRecord {
    std::vector<double> resources;
    int isolation_type = 0;
    int has_backup = 0;
    int mitigation_budget = 1;
};

struct IsolationSpec {
    std::map<std::string, IsolationRecord> records;
};

struct Violation {
    std::string component;   // empty for model-wide problems
    std::string field;
    std::string message;
};

// One vertex of the data-flow graph: a component together with its numeric
// unit id and the ids of its direct neighbours.
struct UnitNode {
    std::string component;
    int id = 0;
    std::set<int> upstream;
    std::set<int> downstream;
};

struct DataFlowGraph {
    std::vector<UnitNode> nodes;                  // in component-model order
    std::vector<std::pair<int, int>> flows;       // (from id, to id)

    const UnitNode* find(int id) const;
};

// Structural and deployment validation.  Returns an empty vector when the
// model is well-formed; otherwise one entry per violation.  host_resources
// bounds the componentwise sum of resource demands.
std::vector<Violation> validate_model(const ComponentModel& model,
                                      const IsolationSpec& spec,
                                      const std::vector<double>& host_resources);

// Maps the component model onto a data-flow graph using the given
// name -> unit id assignment.  The assignment must cover every component
// exactly once with distinct ids; anything else throws ModelError.
DataFlowGraph derive_dfg(const ComponentModel& model,
                         const std::map<std::string, int>& id_assignment);

// Returns one closed walk per cyclic strongly connected region, empty iff the
// graph is acyclic.  Each walk starts and ends on the same id.
std::vector<std::vector<int>> detect_cycles(const DataFlowGraph& dfg);

std::set<int> upstream(const DataFlowGraph& dfg, int id);
std::set<int> downstream(const DataFlowGraph& dfg, int id);

class ModelError : public std::exception {
public:
    explicit ModelError(std::string message) : message_(std::move(message)) {}
    const char* what() const noexcept override { return message_.c_str(); }

private:
    std::string message_;
};

}  // namespace flowguard::model
