#include <doctest.h>

#include <algorithm>
#include <random>

#include "flowguard/model.hpp"
#include "test_support.hpp"

using namespace flowguard::model;

TEST_SUITE_BEGIN("model");

TEST_CASE("well-formed pipeline validates cleanly") {
    auto report = validate_model(testsup::pipeline_model(),
                                 testsup::pipeline_isolation(),
                                 testsup::pipeline_host());
    for (const auto& v : report)
        INFO(v.component, "/", v.field, ": ", v.message);
    CHECK(report.empty());
}

TEST_CASE("connection to a missing component is reported") {
    auto m = testsup::pipeline_model();
    m.connections.emplace_back("Fusion", "Ghost");
    auto report = validate_model(m, testsup::pipeline_isolation(),
                                 testsup::pipeline_host());
    REQUIRE(!report.empty());
    bool named = std::any_of(report.begin(), report.end(), [](const Violation& v) {
        return v.message.find("unknown component") != std::string::npos;
    });
    CHECK(named);
}

TEST_CASE("host over-subscription is reported") {
    auto spec = testsup::pipeline_isolation();
    spec.records["Fusion"].resources[0] = 64;
    auto report = validate_model(testsup::pipeline_model(), spec,
                                 testsup::pipeline_host());
    bool found = std::any_of(report.begin(), report.end(), [](const Violation& v) {
        return v.field == "resources" &&
               v.message.find("exceeds host capacity") != std::string::npos;
    });
    CHECK(found);
}

TEST_CASE("missing isolation record is reported") {
    auto spec = testsup::pipeline_isolation();
    spec.records.erase("Sensing");
    auto report = validate_model(testsup::pipeline_model(), spec,
                                 testsup::pipeline_host());
    bool found = std::any_of(report.begin(), report.end(), [](const Violation& v) {
        return v.component == "Sensing" && v.field == "isolation";
    });
    CHECK(found);
}

TEST_CASE("producer/consumer method mismatch is reported") {
    ComponentModel m;
    ComponentSpec a, b;
    a.name = "a";
    a.provided.push_back({"out", {"pose"}, PortKind::provided, PortMode::async});
    b.name = "b";
    b.required.push_back({"in", {"image"}, PortKind::required, PortMode::async});
    m.components = {a, b};
    m.connections = {{"a", "b"}};
    IsolationSpec spec;
    spec.records["a"] = {{1}, 0, 0, 1};
    spec.records["b"] = {{1}, 0, 0, 1};
    auto report = validate_model(m, spec, {4});
    bool found = std::any_of(report.begin(), report.end(), [](const Violation& v) {
        return v.message.find("no method in common") != std::string::npos;
    });
    CHECK(found);
}

TEST_CASE("wiring endpoints are resolved against subcomponent ports") {
    ComponentSpec inner;
    inner.name = "inner";
    inner.provided.push_back({"sink", {"x"}, PortKind::provided, PortMode::async});

    ComponentSpec outer;
    outer.name = "outer";
    outer.provided.push_back({"out", {"x"}, PortKind::provided, PortMode::async});
    outer.subcomponents.push_back(inner);
    outer.wiring.push_back({"inner.sink", "out"});

    ComponentModel m;
    m.components.push_back(outer);
    IsolationSpec spec;
    spec.records["outer"] = {{1}, 0, 0, 1};
    CHECK(validate_model(m, spec, {4}).empty());

    m.components[0].wiring.push_back({"inner.nope", "out"});
    auto report = validate_model(m, spec, {4});
    bool found = std::any_of(report.begin(), report.end(), [](const Violation& v) {
        return v.field == "wiring" &&
               v.message.find("inner.nope") != std::string::npos;
    });
    CHECK(found);

    m.components[0].wiring.push_back({"out", "out"});
    report = validate_model(m, spec, {4});
    found = std::any_of(report.begin(), report.end(), [](const Violation& v) {
        return v.message.find("self-wire") != std::string::npos;
    });
    CHECK(found);
}

TEST_CASE("pipeline graph puts Fusion at unit 5 between 2,3 and 6") {
    auto dfg = derive_dfg(testsup::pipeline_model(), testsup::pipeline_ids());
    const UnitNode* fusion = dfg.find(5);
    REQUIRE(fusion != nullptr);
    CHECK(fusion->component == "Fusion");
    CHECK(fusion->upstream == std::set<int>{2, 3});
    CHECK(fusion->downstream == std::set<int>{6});
}

TEST_CASE("two-node graph has the single expected flow") {
    ComponentModel m;
    for (const char* n : {"A", "B"}) {
        ComponentSpec c;
        c.name = n;
        m.components.push_back(c);
    }
    m.connections = {{"A", "B"}};
    auto dfg = derive_dfg(m, {{"A", 1}, {"B", 2}});
    REQUIRE(dfg.flows.size() == 1);
    CHECK(dfg.flows[0] == std::pair<int, int>{1, 2});
    CHECK(upstream(dfg, 2) == std::set<int>{1});
    CHECK(downstream(dfg, 1) == std::set<int>{2});
}

TEST_CASE("duplicate unit ids are rejected with the offending pair") {
    ComponentModel m;
    for (const char* n : {"A", "B"}) {
        ComponentSpec c;
        c.name = n;
        m.components.push_back(c);
    }
    CHECK_THROWS_WITH_AS(derive_dfg(m, {{"A", 1}, {"B", 1}}),
                         doctest::Contains("duplicate unit id 1"), ModelError);
}

TEST_CASE("missing and surplus id assignments are rejected") {
    ComponentModel m;
    ComponentSpec c;
    c.name = "A";
    m.components.push_back(c);
    CHECK_THROWS_AS(derive_dfg(m, {}), ModelError);
    CHECK_THROWS_AS(derive_dfg(m, {{"A", 1}, {"B", 2}}), ModelError);
}

// Relabeling the same model must produce an isomorphic graph: mapping ids
// through the permutation reproduces exactly the same flow set.
TEST_CASE("graph derivation commutes with id relabeling") {
    std::mt19937_64 rng(20260823);
    for (int round = 0; round < 50; ++round) {
        int n = 2 + static_cast<int>(rng() % 9);
        auto m = testsup::random_model(rng, n, 0.35, false);
        auto base_ids = testsup::identity_ids(m);

        std::vector<int> perm(n);
        for (int i = 0; i < n; ++i) perm[i] = i + 101;
        std::shuffle(perm.begin(), perm.end(), rng);
        std::map<std::string, int> relabeled;
        std::map<int, int> mapping;  // base id -> relabeled id
        int idx = 0;
        for (const auto& c : m.components) {
            relabeled[c.name] = perm[idx];
            mapping[base_ids[c.name]] = perm[idx];
            ++idx;
        }

        auto a = derive_dfg(m, base_ids);
        auto b = derive_dfg(m, relabeled);
        REQUIRE(a.nodes.size() == b.nodes.size());

        std::set<std::pair<int, int>> mapped, actual;
        for (auto [x, y] : a.flows) mapped.insert({mapping[x], mapping[y]});
        for (auto [x, y] : b.flows) actual.insert({x, y});
        CHECK(mapped == actual);

        for (const auto& n2 : a.nodes) {
            std::set<int> mapped_up;
            for (int u : n2.upstream) mapped_up.insert(mapping[u]);
            CHECK(mapped_up == upstream(b, mapping[n2.id]));
        }
    }
}

TEST_CASE("flows mirror the per-node neighbour sets") {
    std::mt19937_64 rng(7);
    for (int round = 0; round < 30; ++round) {
        auto m = testsup::random_model(rng, 2 + static_cast<int>(rng() % 10),
                                       0.4, false);
        auto dfg = derive_dfg(m, testsup::identity_ids(m));
        CHECK(dfg.nodes.size() == m.components.size());
        for (const auto& node : dfg.nodes) {
            for (int d : node.downstream) {
                CHECK(upstream(dfg, d).count(node.id) == 1);
                bool flow_present =
                    std::count(dfg.flows.begin(), dfg.flows.end(),
                               std::pair<int, int>{node.id, d}) > 0;
                CHECK(flow_present);
            }
            for (int u : node.upstream)
                CHECK(downstream(dfg, u).count(node.id) == 1);
        }
    }
}

TEST_CASE("neighbour queries match a direct edge scan") {
    std::mt19937_64 rng(99);
    for (int round = 0; round < 30; ++round) {
        auto m = testsup::random_model(rng, 3 + static_cast<int>(rng() % 8),
                                       0.5, false);
        auto dfg = derive_dfg(m, testsup::identity_ids(m));
        for (const auto& node : dfg.nodes) {
            std::set<int> up, down;
            for (auto [a, b] : dfg.flows) {
                if (b == node.id) up.insert(a);
                if (a == node.id) down.insert(b);
            }
            CHECK(upstream(dfg, node.id) == up);
            CHECK(downstream(dfg, node.id) == down);
        }
    }
}

TEST_CASE("neighbour queries reject unknown ids") {
    auto dfg = derive_dfg(testsup::pipeline_model(), testsup::pipeline_ids());
    CHECK_THROWS_AS(upstream(dfg, 99), ModelError);
    CHECK_THROWS_AS(downstream(dfg, 99), ModelError);
}

TEST_CASE("pipeline graph is acyclic") {
    auto dfg = derive_dfg(testsup::pipeline_model(), testsup::pipeline_ids());
    CHECK(detect_cycles(dfg).empty());
}

TEST_CASE("a two-node loop is detected as a closed walk") {
    ComponentModel m;
    for (const char* n : {"X", "Y"}) {
        ComponentSpec c;
        c.name = n;
        m.components.push_back(c);
    }
    m.connections = {{"X", "Y"}, {"Y", "X"}};
    auto dfg = derive_dfg(m, {{"X", 1}, {"Y", 2}});
    auto cycles = detect_cycles(dfg);
    REQUIRE(cycles.size() == 1);
    const auto& walk = cycles[0];
    REQUIRE(walk.size() >= 3);
    CHECK(walk.front() == walk.back());
}

// Oracle: a graph is cyclic iff its transitive closure puts some node
// downstream of itself.
TEST_CASE("cycle detection agrees with a transitive-closure oracle") {
    std::mt19937_64 rng(123456);
    for (int round = 0; round < 60; ++round) {
        int n = 4 + static_cast<int>(rng() % 17);  // up to 20 nodes
        bool acyclic_only = (round % 2) == 0;
        auto m = testsup::random_model(rng, n, 0.12, acyclic_only);
        auto dfg = derive_dfg(m, testsup::identity_ids(m));

        std::vector<std::vector<bool>> reach(n + 1, std::vector<bool>(n + 1));
        for (auto [a, b] : dfg.flows) reach[a][b] = true;
        for (int k = 1; k <= n; ++k)
            for (int i = 1; i <= n; ++i)
                for (int j = 1; j <= n; ++j)
                    if (reach[i][k] && reach[k][j]) reach[i][j] = true;
        bool cyclic = false;
        for (int i = 1; i <= n; ++i)
            if (reach[i][i]) cyclic = true;

        auto cycles = detect_cycles(dfg);
        CHECK(cycles.empty() == !cyclic);
        for (const auto& walk : cycles) {
            REQUIRE(walk.size() >= 2);
            CHECK(walk.front() == walk.back());
            for (std::size_t i = 0; i + 1 < walk.size(); ++i)
                CHECK(downstream(dfg, walk[i]).count(walk[i + 1]) == 1);
        }
    }
}

TEST_CASE("shrinking the host never removes violations") {
    auto model = testsup::pipeline_model();
    auto spec = testsup::pipeline_isolation();
    std::size_t prev = validate_model(model, spec, {12, 32768}).size();
    for (double cores : {11.0, 7.0, 3.0, 1.0}) {
        std::size_t now = validate_model(model, spec, {cores, 32768}).size();
        CHECK(now >= prev);
        prev = now;
    }
}

TEST_SUITE_END();
