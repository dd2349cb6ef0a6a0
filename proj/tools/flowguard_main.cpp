#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{
        "flowguard: decentralized runtime protection for data-flow "
        "pipelines"};
    app.require_subcommand(1);

    std::string scenario_path;
    flowguard::cli::RunOptions run_options;
    std::string policy_path;
    std::string trace_path;
    flowguard::cli::RulesOptions rules_options;
    double expect_total_ms = 0;
    double tolerance_ms = 100;

    CLI::App* validate =
        app.add_subcommand("validate", "Check a scenario file");
    validate->add_option("scenario", scenario_path, "scenario JSON file")
        ->required();

    CLI::App* run =
        app.add_subcommand("run", "Simulate a scenario and report timings");
    run->add_option("scenario", scenario_path, "scenario JSON file")
        ->required();
    run->add_option("--log", run_options.log_path,
                    "write the event log to this file");
    run->add_option("--report", run_options.report_path,
                    "write the timing report to this file");

    CLI::App* rules =
        app.add_subcommand("rules", "Score a bus policy over a frame trace");
    rules->add_option("policy", policy_path, "policy file")->required();
    rules->add_option("trace", trace_path, "frame trace, '<t_ms> <frame_id>'")
        ->required();
    rules->add_option("--window", rules_options.window_ms,
                      "evaluation window in ms");
    rules->add_option("--stride", rules_options.stride_ms,
                      "window step in ms (defaults to the window)");

    CLI::App* check = app.add_subcommand(
        "check", "Run a scenario and compare total recovery");
    check->add_option("scenario", scenario_path, "scenario JSON file")
        ->required();
    check->add_option("--expect", expect_total_ms,
                      "expected total recovery in ms")
        ->required();
    check->add_option("--tol", tolerance_ms, "allowed deviation in ms");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? flowguard::cli::exit_ok
                         : flowguard::cli::exit_invalid;
    }

    flowguard::cli::CommandResult result;
    if (validate->parsed())
        result = flowguard::cli::cmd_validate(scenario_path);
    else if (run->parsed())
        result = flowguard::cli::cmd_run(scenario_path, run_options);
    else if (rules->parsed())
        result = flowguard::cli::cmd_rules(policy_path, trace_path,
                                           rules_options);
    else
        result = flowguard::cli::cmd_check(scenario_path, expect_total_ms,
                                           tolerance_ms);

    std::fputs(result.out.c_str(), stdout);
    return result.status;
}
