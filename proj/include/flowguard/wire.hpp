#pragma once

// Line-oriented message codec shared by beacons, status requests and plan
// messages.  Every message is one text line:
//
//     <seq> <timestamp_ms> <type> <source_id> <sick_bit> <failure_queue> [extras]
//
// where type is "unit", "status_req" or "plan", the failure queue is either
// "-" or a comma-separated ascending id list, and extras are fixed key=value
// tokens per type.  String values are percent-escaped so a line never breaks
// on whitespace.  encode() is canonical and decode() accepts exactly the
// canonical form, which makes the round trip bit-exact in both directions.

#include <cstdint>
#include <exception>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace flowguard::wire {

enum class MsgType { unit, status_req, plan };

enum class Opcode { start, stop, reboot, pause, launch };

struct Header {
    std::uint64_t seq = 0;
    std::int64_t timestamp_ms = 0;
    MsgType type = MsgType::unit;

    bool operator==(const Header&) const = default;
};

// Periodic failure/clear broadcast.  A status reply travels as a Beacon too,
// addressed to the asking unit instead of the downstream neighbours.
struct Beacon {
    Header header;
    int source_id = 0;
    int sick_bit = 0;
    std::vector<int> failure_queue;  // strictly ascending ids

    bool operator==(const Beacon&) const = default;
};

struct StatusRequest {
    Header header;
    int source_id = 0;
    int sick_bit = 0;
    std::vector<int> failure_queue;
    int target_id = 0;

    bool operator==(const StatusRequest&) const = default;
};

struct PlanPayload {
    std::string address;
    std::string partition_kind;
    std::string extra_args;

    bool operator==(const PlanPayload&) const = default;
};

// One adaptation step from planner to executor.  delay_ms is non-zero for
// stop steps that must wait for a preceding start/launch to settle.
struct PlanMessage {
    Header header;
    int source_id = 0;
    int sick_bit = 0;
    std::vector<int> failure_queue;
    Opcode opcode = Opcode::start;
    std::string successor_name;
    std::string launch_file_path;
    PlanPayload payload;
    std::int64_t delay_ms = 0;

    bool operator==(const PlanMessage&) const = default;
};

using Message = std::variant<Beacon, StatusRequest, PlanMessage>;

std::string encode(const Message& msg);

// Parses one canonical line.  Throws WireError on anything malformed: wrong
// token count, unknown type, unsorted queue, stray or misordered extras.
Message decode(std::string_view line);

const char* opcode_name(Opcode op);

class WireError : public std::exception {
public:
    explicit WireError(std::string message) : message_(std::move(message)) {}
    const char* what() const noexcept override { return message_.c_str(); }

private:
    std::string message_;
};

}  // namespace flowguard::wire
