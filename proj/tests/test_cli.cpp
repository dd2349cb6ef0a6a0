#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "cli.hpp"

using flowguard::cli::CommandResult;
using nlohmann::json;

namespace {

std::string scenario_path(const std::string& name) {
    return std::string(FLOWGUARD_SCENARIO_DIR) + "/" + name;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// The machine block sits after the "---" line.
json machine_block(const CommandResult& result) {
    std::size_t cut = result.out.find("\n---\n");
    REQUIRE(cut != std::string::npos);
    return json::parse(result.out.substr(cut + 5));
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("validate accepts a bundled scenario") {
    CommandResult r = flowguard::cli::cmd_validate(scenario_path("unit5.json"));
    CHECK(r.status == flowguard::cli::exit_ok);
    json m = machine_block(r);
    CHECK(m["ok"] == true);
    CHECK(m["violations"].empty());
}

TEST_CASE("validate reports a missing file") {
    CommandResult r = flowguard::cli::cmd_validate("/no/such.json");
    CHECK(r.status == flowguard::cli::exit_invalid);
    CHECK(r.out.find("cannot read") != std::string::npos);
}

TEST_CASE("validate rejects an overcommitted host") {
    std::string path = temp_path("flowguard_overcommit.json");
    json doc = json::parse(slurp(scenario_path("unit5.json")));
    doc["host_resources"] = {1, 64};
    write_file(path, doc.dump());
    CommandResult r = flowguard::cli::cmd_validate(path);
    CHECK(r.status == flowguard::cli::exit_invalid);
    CHECK(r.out.find("violation:") != std::string::npos);
    CHECK(machine_block(r)["ok"] == false);
}

TEST_CASE("validate warns about cycles but passes") {
    CommandResult r =
        flowguard::cli::cmd_validate(scenario_path("cycle2.json"));
    CHECK(r.status == flowguard::cli::exit_ok);
    CHECK(r.out.find("warning: dependency cycle 1 -> 2 -> 1") !=
          std::string::npos);
    CHECK(machine_block(r)["cycles"].size() == 1);
}

TEST_CASE("run writes the log and report files it was asked for") {
    std::string log_path = temp_path("flowguard_run.log");
    std::string report_path = temp_path("flowguard_run.report");
    CommandResult r = flowguard::cli::cmd_run(scenario_path("unit5.json"),
                                              {log_path, report_path});
    CHECK(r.status == flowguard::cli::exit_ok);
    std::string log_text = slurp(log_path);
    CHECK(log_text.find("500 inject 5 ") != std::string::npos);
    std::string report_text = slurp(report_path);
    CHECK(report_text.find("total recovery: 1400 ms") != std::string::npos);
    CHECK(r.out.find("total recovery: 1400 ms") != std::string::npos);
    json m = machine_block(r);
    CHECK(m["total_recovery_ms"] == 1400);
    CHECK(m["timed_out"] == false);
}

TEST_CASE("run flags a truncated scenario as timed out") {
    std::string path = temp_path("flowguard_truncated.json");
    json doc = json::parse(slurp(scenario_path("unit5.json")));
    doc["duration_ms"] = 900;
    write_file(path, doc.dump());
    CommandResult r = flowguard::cli::cmd_run(path);
    CHECK(r.status == flowguard::cli::exit_runtime);
    CHECK(machine_block(r)["timed_out"] == true);
}

TEST_CASE("rules flags the flood windows and votes them anomalous") {
    CommandResult r = flowguard::cli::cmd_rules(
        scenario_path("policies/frame-rate.policy"),
        scenario_path("traces/flood.can"));
    CHECK(r.status == flowguard::cli::exit_mismatch);
    json m = machine_block(r);
    CHECK(m["violations"] == json::array({1000, 1100, 1200}));
    CHECK(m["verdict"] == "anomalous");
    CHECK(m["first_flagged"] == 1100);
}

TEST_CASE("rules passes a clean trace") {
    CommandResult r = flowguard::cli::cmd_rules(
        scenario_path("policies/frame-rate.policy"),
        scenario_path("traces/clean.can"));
    CHECK(r.status == flowguard::cli::exit_ok);
    json m = machine_block(r);
    CHECK(m["violations"].empty());
    CHECK(m["verdict"] == "clean");
}

TEST_CASE("rules rejects a malformed policy with its location") {
    std::string path = temp_path("flowguard_bad.policy");
    write_file(path, "(Cx:<0x113,100> . Cx <");
    CommandResult r = flowguard::cli::cmd_rules(
        path, scenario_path("traces/clean.can"));
    CHECK(r.status == flowguard::cli::exit_invalid);
    CHECK(r.out.find("line 1") != std::string::npos);
}

TEST_CASE("rules rejects a garbled trace line") {
    std::string path = temp_path("flowguard_bad.can");
    write_file(path, "0 0x113\nnot a record\n");
    CommandResult r = flowguard::cli::cmd_rules(
        scenario_path("policies/frame-rate.policy"), path);
    CHECK(r.status == flowguard::cli::exit_invalid);
    CHECK(r.out.find("line 2") != std::string::npos);
}

TEST_CASE("check agrees with the recorded recovery totals") {
    struct Quote {
        const char* file;
        double expect;
    };
    const Quote quotes[] = {{"unit5.json", 1479.6},
                            {"set456.json", 2020.0},
                            {"set4567.json", 2699.3}};
    for (const Quote& q : quotes) {
        INFO("scenario ", q.file);
        CommandResult r =
            flowguard::cli::cmd_check(scenario_path(q.file), q.expect);
        CHECK(r.status == flowguard::cli::exit_ok);
        CHECK(machine_block(r)["ok"] == true);
    }
}

TEST_CASE("check reports a mismatch with both values") {
    CommandResult r =
        flowguard::cli::cmd_check(scenario_path("unit5.json"), 5000.0);
    CHECK(r.status == flowguard::cli::exit_mismatch);
    CHECK(r.out.find("MISMATCH") != std::string::npos);
    json m = machine_block(r);
    CHECK(m["expected_ms"] == 5000.0);
    CHECK(m["measured_ms"] == 1400.0);
}

}  // TEST_SUITE
