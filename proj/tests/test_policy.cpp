#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>

#include "flowguard/policy.hpp"

using namespace flowguard::policy;

TEST_SUITE_BEGIN("policy");

namespace {

// Independent evaluator used as the reference: min-scan anchor, explicit
// count loop, fresh predicate arithmetic.
std::int64_t oracle_count(const EventSequence& ev, int id, std::int64_t lo,
                          std::int64_t hi) {
    std::int64_t n = 0;
    for (const auto& e : ev)
        if (e.frame_id == id && e.t_ms >= lo && e.t_ms < hi) ++n;
    return n;
}

int oracle_rule(const Rule& r, const EventSequence& ev, std::int64_t ws) {
    std::map<std::string, std::int64_t> counts;
    for (const auto& b : r.bindings) {
        bool found = false;
        std::int64_t best = 0;
        for (const auto& e : ev) {
            if (e.frame_id == b.frame_id && e.t_ms >= ws &&
                (!found || e.t_ms < best)) {
                found = true;
                best = e.t_ms;
            }
        }
        std::int64_t anchor = found ? best : ws;
        counts[b.var] = oracle_count(ev, b.frame_id, anchor, anchor + b.window_ms);
    }
    std::int64_t lhs = 0;
    for (const auto& t : r.predicate.terms) lhs += t.sign * counts[t.var];
    std::int64_t rhs = r.predicate.threshold;
    bool ok;
    switch (r.predicate.rel) {
        case Rel::lt: ok = lhs < rhs; break;
        case Rel::le: ok = lhs <= rhs; break;
        case Rel::gt: ok = lhs > rhs; break;
        case Rel::ge: ok = lhs >= rhs; break;
        default: ok = false; break;
    }
    return ok ? 0 : 1;
}

EventSequence random_trace(std::mt19937_64& rng, int max_events) {
    std::uniform_int_distribution<int> count(0, max_events);
    std::uniform_int_distribution<int> id(1, 4);
    std::uniform_int_distribution<std::int64_t> t(0, 499);
    EventSequence ev;
    int n = count(rng);
    for (int i = 0; i < n; ++i) ev.push_back({id(rng), t(rng)});
    std::sort(ev.begin(), ev.end(),
              [](const CanEvent& a, const CanEvent& b) { return a.t_ms < b.t_ms; });
    return ev;
}

Rule random_rule(std::mt19937_64& rng) {
    static const char* vars[] = {"Ca", "Cb", "Cc"};
    std::uniform_int_distribution<int> nbind(1, 3);
    std::uniform_int_distribution<int> id(1, 3);
    std::uniform_int_distribution<std::int64_t> h(0, 60);
    std::uniform_int_distribution<std::int64_t> theta(-5, 60);
    Rule r;
    int nb = nbind(rng);
    for (int i = 0; i < nb; ++i)
        r.bindings.push_back({vars[i], id(rng), false, h(rng)});
    std::uniform_int_distribution<int> nterm(1, nb);
    int nt = nterm(rng);
    for (int i = 0; i < nt; ++i) {
        int sign = (i == 0 || rng() % 2 == 0) ? 1 : -1;
        std::uniform_int_distribution<int> pick(0, nb - 1);
        r.predicate.terms.push_back({sign, vars[pick(rng)]});
    }
    r.predicate.rel = static_cast<Rel>(rng() % 4);
    r.predicate.threshold = theta(rng);
    return r;
}

}  // namespace

TEST_CASE("single count rule parses to the expected shape") {
    Policy p = parse_policy("(Cx:<0x113,1000> . Cx < 9)");
    REQUIRE(p.rules.size() == 1);
    const Rule& r = p.rules[0];
    REQUIRE(r.bindings.size() == 1);
    CHECK(r.bindings[0].var == "Cx");
    CHECK(r.bindings[0].frame_id == 0x113);
    CHECK(r.bindings[0].hex);
    CHECK(r.bindings[0].window_ms == 1000);
    REQUIRE(r.predicate.terms.size() == 1);
    CHECK(r.predicate.terms[0] == TermRef{1, "Cx"});
    CHECK(r.predicate.rel == Rel::lt);
    CHECK(r.predicate.threshold == 9);
}

TEST_CASE("two-binding difference rule parses") {
    Policy p =
        parse_policy("(Cx:<0x113,1000> . Cy:<0x114,1000> . Cx - Cy < 3)");
    REQUIRE(p.rules.size() == 1);
    REQUIRE(p.rules[0].bindings.size() == 2);
    CHECK(p.rules[0].predicate.terms ==
          std::vector<TermRef>{{1, "Cx"}, {-1, "Cy"}});
}

TEST_CASE("conjunction yields one rule per clause") {
    Policy p = parse_policy(
        "(Ca:<1,10> . Ca < 5) && (Cb:<2,20> . Cb <= 7) && (Cc:<3,30> . Cc >= "
        "1)");
    REQUIRE(p.rules.size() == 3);
    CHECK(p.rules[1].predicate.rel == Rel::le);
    CHECK(p.rules[2].predicate.rel == Rel::ge);
}

TEST_CASE("comments and whitespace are insignificant") {
    Policy a = parse_policy(
        "# flood guard\n"
        "(Cx:<0x113,1000>\n"
        "   . Cx < 9)   # tail comment\n");
    Policy b = parse_policy("(Cx:<0x113,1000>.Cx<9)");
    CHECK(a == b);
}

TEST_CASE("parenthesised sums flatten with distributed signs") {
    Policy p = parse_policy(
        "(Ca:<1,10> . Cb:<2,10> . Cc:<3,10> . Ca - (Cb + Cc) >= 0)");
    CHECK(p.rules[0].predicate.terms ==
          std::vector<TermRef>{{1, "Ca"}, {-1, "Cb"}, {-1, "Cc"}});

    Policy q = parse_policy(
        "(Ca:<1,10> . Cb:<2,10> . Cc:<3,10> . Ca - (Cb - Cc) >= 0)");
    CHECK(q.rules[0].predicate.terms ==
          std::vector<TermRef>{{1, "Ca"}, {-1, "Cb"}, {1, "Cc"}});
}

TEST_CASE("unbound predicate variable is rejected with its position") {
    try {
        parse_policy("(Cx:<0x113,1000> . Cy < 9)");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 1);
        CHECK(e.column() == 20);
        CHECK(std::string(e.what()).find("'Cy' is not bound") !=
              std::string::npos);
    }
}

TEST_CASE("duplicate binding variable is rejected") {
    CHECK_THROWS_WITH_AS(
        parse_policy("(Cx:<1,10> . Cx:<2,10> . Cx < 5)"),
        doctest::Contains("bound more than once"), ParseError);
}

TEST_CASE("malformed inputs name the offending token") {
    CHECK_THROWS_AS(parse_policy(""), ParseError);
    CHECK_THROWS_AS(parse_policy("(Cx:<1,10> . Cx < 5"), ParseError);
    CHECK_THROWS_AS(parse_policy("(Cx:<1 10> . Cx < 5)"), ParseError);
    CHECK_THROWS_AS(parse_policy("(Cx:<1,10> . Cx = 5)"), ParseError);
    CHECK_THROWS_AS(parse_policy("(Cx:<0x,10> . Cx < 5)"), ParseError);
    CHECK_THROWS_AS(parse_policy("(Cx:<1,10> . Cx < 5) & (Cx:<1,10> . Cx < 5)"),
                    ParseError);
    CHECK_THROWS_AS(parse_policy("(3 < 5)"), ParseError);
    CHECK_THROWS_AS(parse_policy("(Cx:<1,10> . Cx < 5) extra"), ParseError);

    try {
        parse_policy("(Cx:<1,10> . Cx < 5)\n&& (Cy:<2,10> . Cy ! 3)");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
        CHECK(e.column() > 1);
    }
}

TEST_CASE("render round-trips through the parser") {
    const char* samples[] = {
        "(Cx:<0x113,1000> . Cx < 9)",
        "(Cx:<0x113,1000> . Cy:<0x114,1000> . Cx - Cy < 3)",
        "(Ca:<1,10> . Ca >= 1) && (Cb:<276,50> . Cb <= 40)",
        "(Ca:<1,10> . Cb:<2,10> . Ca - (Cb + Ca) < -2)",
    };
    for (const char* text : samples) {
        Policy p = parse_policy(text);
        Policy again = parse_policy(render_policy(p));
        CHECK(again == p);
        // Rendering is a fixed point once canonical.
        CHECK(render_policy(again) == render_policy(p));
    }
}

TEST_CASE("render round-trips on random policies") {
    std::mt19937_64 rng(808);
    for (int i = 0; i < 200; ++i) {
        Policy p;
        int nrules = 1 + static_cast<int>(rng() % 3);
        for (int r = 0; r < nrules; ++r) p.rules.push_back(random_rule(rng));
        Policy again = parse_policy(render_policy(p));
        CHECK(again == p);
    }
}

TEST_CASE("window counting is half-open") {
    EventSequence ev = {{7, 100}, {7, 150}, {7, 199}, {7, 200}, {8, 150}};
    CHECK(count_in_window(ev, 7, 100, 100) == 3);  // 200 excluded
    CHECK(count_in_window(ev, 7, 100, 101) == 4);
    CHECK(count_in_window(ev, 7, 150, 50) == 2);
    CHECK(count_in_window(ev, 7, 100, 0) == 0);
    CHECK(count_in_window(ev, 9, 0, 1000) == 0);
}

TEST_CASE("window counts are additive over a split") {
    std::mt19937_64 rng(5150);
    for (int i = 0; i < 100; ++i) {
        EventSequence ev = random_trace(rng, 200);
        std::int64_t s = static_cast<std::int64_t>(rng() % 400);
        std::int64_t h = static_cast<std::int64_t>(rng() % 120);
        std::int64_t m = h == 0 ? 0 : static_cast<std::int64_t>(rng() % (h + 1));
        for (int id = 1; id <= 4; ++id) {
            CHECK(count_in_window(ev, id, s, h) ==
                  count_in_window(ev, id, s, m) +
                      count_in_window(ev, id, s + m, h - m));
        }
    }
}

TEST_CASE("flood of unmatched frames violates the count rule") {
    Policy p = parse_policy("(Cx:<0x10,100> . Cx < 50)");
    EventSequence ev;
    for (int i = 0; i < 100; ++i) ev.push_back({0x10, 500 + i});
    CHECK(evaluate_policy(p, ev, 500) == 1);
    CHECK(evaluate_policy(p, EventSequence{}, 500) == 0);
}

TEST_CASE("absent id anchors at the window start with count zero") {
    // A liveness-style rule: at least one frame expected per window.
    Policy p = parse_policy("(Cx:<0x20,100> . Cx >= 1)");
    EventSequence ev = {{0x21, 510}};
    CHECK(evaluate_policy(p, ev, 500) == 1);
    ev.push_back({0x20, 710});
    // First occurrence at 710 anchors the window there.
    CHECK(evaluate_policy(p, ev, 500) == 0);
}

TEST_CASE("anchor starts at the first occurrence after the window start") {
    Policy p = parse_policy("(Cx:<5,100> . Cx < 3)");
    // Three frames that fit one 100ms window only when anchored at 400.
    EventSequence ev = {{5, 120}, {5, 400}, {5, 450}, {5, 499}};
    CHECK(evaluate_rule(p.rules[0], ev, 300) == 1);  // anchored at 400, count 3
    CHECK(evaluate_rule(p.rules[0], ev, 460) == 0);  // anchored at 499, count 1
}

TEST_CASE("score is invariant under time translation") {
    std::mt19937_64 rng(31337);
    for (int i = 0; i < 100; ++i) {
        Rule r = random_rule(rng);
        EventSequence ev = random_trace(rng, 100);
        std::int64_t ws = static_cast<std::int64_t>(rng() % 520) - 10;
        std::int64_t delta = static_cast<std::int64_t>(rng() % 2000) - 1000;
        EventSequence shifted = ev;
        for (auto& e : shifted) e.t_ms += delta;
        CHECK(evaluate_rule(r, ev, ws) == evaluate_rule(r, shifted, ws + delta));
    }
}

TEST_CASE("unrelated frame ids never change a score") {
    std::mt19937_64 rng(2718);
    for (int i = 0; i < 100; ++i) {
        Rule r = random_rule(rng);
        EventSequence ev = random_trace(rng, 100);
        std::int64_t ws = static_cast<std::int64_t>(rng() % 500);
        int before = evaluate_rule(r, ev, ws);
        EventSequence noisy = ev;
        for (int k = 0; k < 20; ++k)
            noisy.push_back({99, static_cast<std::int64_t>(rng() % 600)});
        std::sort(noisy.begin(), noisy.end(), [](auto& a, auto& b) {
            return a.t_ms < b.t_ms;
        });
        CHECK(evaluate_rule(r, noisy, ws) == before);
    }
}

TEST_CASE("evaluator agrees with the reference implementation") {
    std::mt19937_64 rng(160914);
    for (int i = 0; i < 300; ++i) {
        Rule r = random_rule(rng);
        EventSequence ev = random_trace(rng, 150);
        for (std::int64_t ws : {-20L, 0L, 100L, 250L, 499L, 600L})
            CHECK(evaluate_rule(r, ev, ws) == oracle_rule(r, ev, ws));
    }
}

TEST_CASE("policy score is the disjunction of rule scores") {
    Policy p = parse_policy("(Ca:<1,100> . Ca < 2) && (Cb:<2,100> . Cb < 2)");
    EventSequence quiet = {{1, 10}, {2, 10}};
    CHECK(evaluate_policy(p, quiet, 0) == 0);
    EventSequence noisy = {{1, 10}, {2, 10}, {2, 11}, {2, 12}};
    CHECK(evaluate_policy(p, noisy, 0) == 1);
    for (const auto& r : p.rules) {
        int a = evaluate_rule(r, noisy, 0);
        CHECK((a == 0 || a == 1));
    }
}

TEST_SUITE_END();
