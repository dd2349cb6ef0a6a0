#include <doctest.h>

#include <random>

#include "flowguard/wire.hpp"

using namespace flowguard::wire;

TEST_SUITE_BEGIN("wire");

namespace {

Beacon sample_beacon() {
    Beacon b;
    b.header = {12, 700, MsgType::unit};
    b.source_id = 6;
    b.sick_bit = 1;
    b.failure_queue = {3, 5};
    return b;
}

std::string random_text(std::mt19937_64& rng) {
    static const std::string charset =
        "abcXYZ019-_/.% =\tpercent signs and spaces";
    std::uniform_int_distribution<std::size_t> len(0, 14);
    std::uniform_int_distribution<std::size_t> pick(0, charset.size() - 1);
    std::string s;
    std::size_t n = len(rng);
    for (std::size_t i = 0; i < n; ++i) s += charset[pick(rng)];
    return s;
}

Message random_message(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> kind(0, 2);
    std::uniform_int_distribution<int> small(0, 40);
    Header h{rng() % 100000, static_cast<std::int64_t>(rng() % 1000000),
             MsgType::unit};
    int source = small(rng);
    int sick = static_cast<int>(rng() % 2);
    std::vector<int> queue;
    int cursor = 0;
    for (int i = 0, n = small(rng) % 6; i < n; ++i) {
        cursor += 1 + small(rng);
        queue.push_back(cursor);
    }
    switch (kind(rng)) {
        case 0:
            return Beacon{h, source, sick, queue};
        case 1: {
            h.type = MsgType::status_req;
            return StatusRequest{h, source, sick, queue, small(rng)};
        }
        default: {
            h.type = MsgType::plan;
            PlanMessage p;
            p.header = h;
            p.source_id = source;
            p.sick_bit = sick;
            p.failure_queue = queue;
            p.opcode = static_cast<Opcode>(rng() % 5);
            p.successor_name = random_text(rng);
            p.launch_file_path = random_text(rng);
            p.payload = {random_text(rng), random_text(rng), random_text(rng)};
            p.delay_ms = small(rng) * 10;
            return p;
        }
    }
}

}  // namespace

TEST_CASE("beacon encodes to the documented line shape") {
    CHECK(encode(sample_beacon()) == "12 700 unit 6 1 3,5");

    Beacon clear;
    clear.header = {7, 1550, MsgType::unit};
    clear.source_id = 5;
    CHECK(encode(clear) == "7 1550 unit 5 0 -");
}

TEST_CASE("status request carries its target as an extra") {
    StatusRequest r;
    r.header = {2, 600, MsgType::status_req};
    r.source_id = 5;
    r.sick_bit = 1;
    r.target_id = 2;
    CHECK(encode(r) == "2 600 status_req 5 1 - target=2");
}

TEST_CASE("plan line escapes embedded spaces") {
    PlanMessage p;
    p.header = {9, 900, MsgType::plan};
    p.source_id = 2;
    p.sick_bit = 1;
    p.opcode = Opcode::stop;
    p.successor_name = "Data Loading";
    p.delay_ms = 200;
    std::string line = encode(p);
    CHECK(line ==
          "9 900 plan 2 1 - op=stop succ=Data%20Loading launch= addr= pkind= "
          "args= delay=200");
    CHECK(decode(line) == Message{p});
}

TEST_CASE("decode inverts encode on random messages") {
    std::mt19937_64 rng(424242);
    for (int i = 0; i < 500; ++i) {
        Message m = random_message(rng);
        std::string line = encode(m);
        CHECK(decode(line) == m);
        CHECK(encode(decode(line)) == line);
    }
}

TEST_CASE("malformed lines are rejected") {
    CHECK_THROWS_AS(decode(""), WireError);
    CHECK_THROWS_AS(decode("1 2 unit 3 0"), WireError);          // short
    CHECK_THROWS_AS(decode("1 2 gossip 3 0 -"), WireError);      // type
    CHECK_THROWS_AS(decode("1 2 unit 3 2 -"), WireError);        // sick bit
    CHECK_THROWS_AS(decode("1 -5 unit 3 0 -"), WireError);       // timestamp
    CHECK_THROWS_AS(decode("1 2 unit 3 0 5,4"), WireError);      // unsorted
    CHECK_THROWS_AS(decode("1 2 unit 3 0 5,5"), WireError);      // duplicate
    CHECK_THROWS_AS(decode("1 2 unit 3 0 "), WireError);         // empty token
    CHECK_THROWS_AS(decode("1 2 unit 3  0 -"), WireError);       // double space
    CHECK_THROWS_AS(decode("1 2 unit 3 0 - target=4"), WireError);
    CHECK_THROWS_AS(decode("1 2 status_req 3 0 -"), WireError);  // no target
    CHECK_THROWS_AS(decode("1 2 status_req 3 0 - goal=4"), WireError);
    CHECK_THROWS_AS(decode("x 2 unit 3 0 -"), WireError);        // bad seq
    CHECK_THROWS_AS(
        decode("1 2 plan 3 0 - op=noop succ= launch= addr= pkind= args= "
               "delay=0"),
        WireError);
    CHECK_THROWS_AS(
        decode("1 2 plan 3 0 - op=start succ=%G1 launch= addr= pkind= args= "
               "delay=0"),
        WireError);  // bad escape
    // extras in the wrong order
    CHECK_THROWS_AS(
        decode("1 2 plan 3 0 - succ= op=start launch= addr= pkind= args= "
               "delay=0"),
        WireError);
}

TEST_CASE("every opcode survives the round trip") {
    for (Opcode op : {Opcode::start, Opcode::stop, Opcode::reboot, Opcode::pause,
                      Opcode::launch}) {
        PlanMessage p;
        p.header = {1, 1, MsgType::plan};
        p.opcode = op;
        CHECK(decode(encode(p)) == Message{p});
    }
}

TEST_SUITE_END();
