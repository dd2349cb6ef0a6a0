#include "flowguard/wire.hpp"

#include <charconv>
#include <sstream>

namespace flowguard::wire {
namespace {

const char* type_name(MsgType t) {
    switch (t) {
        case MsgType::unit: return "unit";
        case MsgType::status_req: return "status_req";
        case MsgType::plan: return "plan";
    }
    return "?";
}

MsgType parse_type(std::string_view s) {
    if (s == "unit") return MsgType::unit;
    if (s == "status_req") return MsgType::status_req;
    if (s == "plan") return MsgType::plan;
    throw WireError("unknown message type '" + std::string(s) + "'");
}

Opcode parse_opcode(std::string_view s) {
    if (s == "start") return Opcode::start;
    if (s == "stop") return Opcode::stop;
    if (s == "reboot") return Opcode::reboot;
    if (s == "pause") return Opcode::pause;
    if (s == "launch") return Opcode::launch;
    throw WireError("unknown opcode '" + std::string(s) + "'");
}

std::string escape(std::string_view s) {
    static const char* hex = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : s) {
        if (c == '%' || c == ' ' || c < 0x21 || c == 0x7F) {
            out += '%';
            out += hex[c >> 4];
            out += hex[c & 0xF];
        } else {
            out += static_cast<char>(c);
        }
    }
    return out;
}

int hex_digit(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw WireError("bad escape digit");
}

std::string unescape(std::string_view s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '%') {
            out += s[i];
            continue;
        }
        if (i + 2 >= s.size()) throw WireError("truncated escape");
        out += static_cast<char>(hex_digit(s[i + 1]) * 16 + hex_digit(s[i + 2]));
        i += 2;
    }
    return out;
}

template <typename T>
T parse_int(std::string_view s, const char* what) {
    T value{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw WireError(std::string("bad ") + what + " '" + std::string(s) + "'");
    return value;
}

std::string queue_text(const std::vector<int>& queue) {
    if (queue.empty()) return "-";
    std::string out;
    for (std::size_t i = 0; i < queue.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(queue[i]);
    }
    return out;
}

std::vector<int> parse_queue(std::string_view s) {
    std::vector<int> queue;
    if (s == "-") return queue;
    std::size_t start = 0;
    while (start <= s.size()) {
        std::size_t comma = s.find(',', start);
        std::string_view tok = s.substr(
            start, comma == std::string_view::npos ? comma : comma - start);
        queue.push_back(parse_int<int>(tok, "queue id"));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    for (std::size_t i = 1; i < queue.size(); ++i)
        if (queue[i] <= queue[i - 1])
            throw WireError("failure queue not strictly ascending");
    return queue;
}

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> toks;
    std::size_t start = 0;
    while (start <= line.size()) {
        std::size_t sp = line.find(' ', start);
        if (sp == std::string_view::npos) {
            toks.push_back(line.substr(start));
            break;
        }
        toks.push_back(line.substr(start, sp - start));
        start = sp + 1;
    }
    for (const auto& t : toks)
        if (t.empty()) throw WireError("empty token (double space?)");
    return toks;
}

// Extras are key=value tokens whose keys must appear exactly in the given
// order; values come back unescaped.
std::vector<std::string> take_extras(const std::vector<std::string_view>& toks,
                                     std::size_t from,
                                     const std::vector<std::string>& keys) {
    if (toks.size() - from != keys.size())
        throw WireError("expected " + std::to_string(keys.size()) +
                        " extras, got " + std::to_string(toks.size() - from));
    std::vector<std::string> values;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        std::string_view tok = toks[from + i];
        std::size_t eq = tok.find('=');
        if (eq == std::string_view::npos || tok.substr(0, eq) != keys[i])
            throw WireError("expected extra '" + keys[i] + "', got '" +
                            std::string(tok) + "'");
        values.push_back(unescape(tok.substr(eq + 1)));
    }
    return values;
}

}  // namespace

const char* opcode_name(Opcode op) {
    switch (op) {
        case Opcode::start: return "start";
        case Opcode::stop: return "stop";
        case Opcode::reboot: return "reboot";
        case Opcode::pause: return "pause";
        case Opcode::launch: return "launch";
    }
    return "?";
}

std::string encode(const Message& msg) {
    std::ostringstream out;
    auto base = [&](const Header& h, int source, int sick,
                    const std::vector<int>& queue) {
        out << h.seq << ' ' << h.timestamp_ms << ' ' << type_name(h.type) << ' '
            << source << ' ' << sick << ' ' << queue_text(queue);
    };
    if (const auto* b = std::get_if<Beacon>(&msg)) {
        base(b->header, b->source_id, b->sick_bit, b->failure_queue);
    } else if (const auto* r = std::get_if<StatusRequest>(&msg)) {
        base(r->header, r->source_id, r->sick_bit, r->failure_queue);
        out << " target=" << r->target_id;
    } else {
        const auto& p = std::get<PlanMessage>(msg);
        base(p.header, p.source_id, p.sick_bit, p.failure_queue);
        out << " op=" << opcode_name(p.opcode)
            << " succ=" << escape(p.successor_name)
            << " launch=" << escape(p.launch_file_path)
            << " addr=" << escape(p.payload.address)
            << " pkind=" << escape(p.payload.partition_kind)
            << " args=" << escape(p.payload.extra_args)
            << " delay=" << p.delay_ms;
    }
    return out.str();
}

Message decode(std::string_view line) {
    auto toks = split(line);
    if (toks.size() < 6) throw WireError("line has fewer than 6 fields");

    Header h;
    h.seq = parse_int<std::uint64_t>(toks[0], "seq");
    h.timestamp_ms = parse_int<std::int64_t>(toks[1], "timestamp");
    if (h.timestamp_ms < 0) throw WireError("negative timestamp");
    h.type = parse_type(toks[2]);
    int source = parse_int<int>(toks[3], "source id");
    int sick = parse_int<int>(toks[4], "sick bit");
    if (sick != 0 && sick != 1) throw WireError("sick bit must be 0 or 1");
    auto queue = parse_queue(toks[5]);

    switch (h.type) {
        case MsgType::unit: {
            if (toks.size() != 6) throw WireError("unit message takes no extras");
            return Beacon{h, source, sick, std::move(queue)};
        }
        case MsgType::status_req: {
            auto vals = take_extras(toks, 6, {"target"});
            StatusRequest r{h, source, sick, std::move(queue), 0};
            r.target_id = parse_int<int>(vals[0], "target id");
            return r;
        }
        case MsgType::plan: {
            auto vals = take_extras(
                toks, 6,
                {"op", "succ", "launch", "addr", "pkind", "args", "delay"});
            PlanMessage p;
            p.header = h;
            p.source_id = source;
            p.sick_bit = sick;
            p.failure_queue = std::move(queue);
            p.opcode = parse_opcode(vals[0]);
            p.successor_name = vals[1];
            p.launch_file_path = vals[2];
            p.payload.address = vals[3];
            p.payload.partition_kind = vals[4];
            p.payload.extra_args = vals[5];
            p.delay_ms = parse_int<std::int64_t>(vals[6], "delay");
            return p;
        }
    }
    throw WireError("unreachable");
}

}  // namespace flowguard::wire
