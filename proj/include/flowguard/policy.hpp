#pragma once

// Rule language for bus-traffic checks.  A policy is a conjunction of rules;
// each rule binds counting variables to frame ids and tests one linear
// predicate over the counts:
//
//     (Cx:<0x113,1000> . Cy:<0x114,1000> . Cx - Cy < 3) && (Cz:<0x20,500> . Cz < 9)
//
// A binding Cx:<id,h> counts occurrences of frame id inside [anchor,
// anchor + h) where the anchor is the first occurrence of id at or after the
// window start (or the window start itself when the id is absent, making the
// count 0).  A rule describes NORMAL behaviour: its score is 1 exactly when
// the predicate is violated.  The policy scores 1 when any rule does.
// '#' starts a comment that runs to end of line.

#include <cstdint>
#include <exception>
#include <string>
#include <string_view>
#include <vector>

namespace flowguard::policy {

struct CanEvent {
    int frame_id = 0;
    std::int64_t t_ms = 0;

    bool operator==(const CanEvent&) const = default;
};

// Events must be in non-decreasing time order for evaluation.
using EventSequence = std::vector<CanEvent>;

struct Binding {
    std::string var;
    int frame_id = 0;
    bool hex = false;  // id was written in 0x form; kept for rendering
    std::int64_t window_ms = 0;

    bool operator==(const Binding&) const = default;
};

enum class Rel { lt, le, gt, ge };

// Signed variable reference inside a predicate's left-hand sum.
struct TermRef {
    int sign = 1;  // +1 or -1
    std::string var;

    bool operator==(const TermRef&) const = default;
};

struct Predicate {
    std::vector<TermRef> terms;
    Rel rel = Rel::lt;
    std::int64_t threshold = 0;

    bool operator==(const Predicate&) const = default;
};

struct Rule {
    std::vector<Binding> bindings;
    Predicate predicate;

    bool operator==(const Rule&) const = default;
};

struct Policy {
    std::vector<Rule> rules;

    bool operator==(const Policy&) const = default;
};

class ParseError : public std::exception {
public:
    ParseError(int line, int column, std::string message);
    const char* what() const noexcept override { return formatted_.c_str(); }
    int line() const { return line_; }
    int column() const { return column_; }

private:
    int line_;
    int column_;
    std::string formatted_;
};

// Parses policy text.  Duplicate binding variables within a rule and
// predicate variables without a binding are rejected with the offending
// token's position.
Policy parse_policy(std::string_view text);

// Canonical text form; parse(render(p)) == p for any parsed policy p.
std::string render_policy(const Policy& policy);

// Number of events with the given frame id and t in [start, start + h).
std::int64_t count_in_window(const EventSequence& events, int frame_id,
                             std::int64_t start, std::int64_t h);

// 0 when the rule's predicate holds over the window anchored at or after
// window_start, 1 when it is violated.
int evaluate_rule(const Rule& rule, const EventSequence& events,
                  std::int64_t window_start);

int evaluate_policy(const Policy& policy, const EventSequence& events,
                    std::int64_t window_start);

}  // namespace flowguard::policy
