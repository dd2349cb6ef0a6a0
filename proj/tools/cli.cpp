#include "cli.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "flowguard/policy.hpp"
#include "flowguard/sim.hpp"

namespace flowguard::cli {

namespace {

using nlohmann::json;

std::optional<std::string> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string finish(const std::string& human, const json& machine) {
    return human + "---\n" + machine.dump(2) + "\n";
}

CommandResult input_error(const std::string& message) {
    return {exit_invalid,
            finish("error: " + message + "\n", json{{"error", message}})};
}

std::string cycle_warning(const std::vector<int>& cycle) {
    std::string s = "warning: dependency cycle";
    for (std::size_t i = 0; i < cycle.size(); ++i)
        s += (i ? " -> " : " ") + std::to_string(cycle[i]);
    // Close the walk visually when the detector returned it open.
    if (cycle.size() > 1 && cycle.back() != cycle.front())
        s += " -> " + std::to_string(cycle.front());
    return s;
}

std::string fmt_ms(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    return buf;
}

struct LoadedScenario {
    sim::Scenario scenario;
    std::vector<model::Violation> violations;
    std::vector<std::vector<int>> cycles;
};

// Shared front half of every scenario command: read, parse, validate.
std::optional<LoadedScenario> load_checked(const std::string& path,
                                           CommandResult& error_out) {
    std::optional<std::string> text = read_file(path);
    if (!text) {
        error_out = input_error("cannot read '" + path + "'");
        return std::nullopt;
    }
    LoadedScenario out;
    try {
        out.scenario = sim::parse_scenario(*text);
    } catch (const sim::ScenarioError& e) {
        error_out = input_error(path + ": " + e.what());
        return std::nullopt;
    }
    out.violations = sim::validate_scenario(out.scenario);
    out.cycles = sim::scenario_cycles(out.scenario);
    return out;
}

json violations_json(const std::vector<model::Violation>& violations) {
    json arr = json::array();
    for (const model::Violation& v : violations)
        arr.push_back({{"component", v.component},
                       {"field", v.field},
                       {"message", v.message}});
    return arr;
}

std::string violation_line(const model::Violation& v) {
    std::string s = "violation: ";
    if (!v.component.empty()) s += v.component + ": ";
    if (!v.field.empty()) s += v.field + ": ";
    return s + v.message;
}

}  // namespace

CommandResult cmd_validate(const std::string& scenario_path) {
    CommandResult error;
    std::optional<LoadedScenario> loaded =
        load_checked(scenario_path, error);
    if (!loaded) return error;

    std::ostringstream human;
    human << "scenario: " << loaded->scenario.name << "\n"
          << "units: " << loaded->scenario.units.size()
          << ", injections: " << loaded->scenario.injections.size()
          << ", duration: " << loaded->scenario.duration_ms << " ms\n";
    for (const model::Violation& v : loaded->violations)
        human << violation_line(v) << "\n";
    for (const auto& cycle : loaded->cycles)
        human << cycle_warning(cycle) << "\n";
    bool ok = loaded->violations.empty();
    human << (ok ? "ok\n" : "invalid\n");

    json machine = {{"name", loaded->scenario.name},
                    {"ok", ok},
                    {"violations", violations_json(loaded->violations)},
                    {"cycles", loaded->cycles}};
    return {ok ? exit_ok : exit_invalid, finish(human.str(), machine)};
}

CommandResult cmd_run(const std::string& scenario_path,
                      const RunOptions& options) {
    CommandResult error;
    std::optional<LoadedScenario> loaded =
        load_checked(scenario_path, error);
    if (!loaded) return error;
    if (!loaded->violations.empty()) {
        std::string human;
        for (const model::Violation& v : loaded->violations)
            human += violation_line(v) + "\n";
        return {exit_invalid,
                finish(human, json{{"ok", false},
                                   {"violations",
                                    violations_json(loaded->violations)}})};
    }

    std::string warnings;
    for (const auto& cycle : loaded->cycles)
        warnings += cycle_warning(cycle) + "\n";

    sim::RunResult result = sim::run(loaded->scenario);
    std::string report = sim::report_text(result.report);

    if (!options.log_path.empty()) {
        std::ofstream out(options.log_path, std::ios::binary);
        out << sim::to_text(result.log);
        if (!out) return {exit_runtime,
                          warnings + "error: cannot write '" +
                              options.log_path + "'\n"};
    }
    if (!options.report_path.empty()) {
        std::ofstream out(options.report_path, std::ios::binary);
        out << report;
        if (!out) return {exit_runtime,
                          warnings + "error: cannot write '" +
                              options.report_path + "'\n"};
    }

    int status = result.report.timed_out ? exit_runtime : exit_ok;
    return {status, warnings + report};
}

CommandResult cmd_rules(const std::string& policy_path,
                        const std::string& trace_path,
                        const RulesOptions& options) {
    if (options.window_ms < 1) return input_error("window must be positive");
    std::int64_t stride =
        options.stride_ms > 0 ? options.stride_ms : options.window_ms;

    std::optional<std::string> policy_text = read_file(policy_path);
    if (!policy_text) return input_error("cannot read '" + policy_path + "'");
    policy::Policy pol;
    try {
        pol = policy::parse_policy(*policy_text);
    } catch (const policy::ParseError& e) {
        return input_error(policy_path + ": " + e.what());
    }

    std::optional<std::string> trace_text = read_file(trace_path);
    if (!trace_text) return input_error("cannot read '" + trace_path + "'");
    policy::EventSequence events;
    std::istringstream lines(*trace_text);
    std::string line;
    int line_no = 0;
    while (std::getline(lines, line)) {
        ++line_no;
        if (std::size_t hash = line.find('#'); hash != std::string::npos)
            line.resize(hash);
        std::istringstream fields(line);
        std::int64_t t;
        std::string id_text;
        if (!(fields >> t)) {
            fields.clear();
            std::string leftover;
            if (fields >> leftover)
                return input_error(trace_path + ": line " +
                                   std::to_string(line_no) + ": bad record");
            continue;  // blank or comment-only line
        }
        if (!(fields >> id_text) || t < 0)
            return input_error(trace_path + ": line " +
                               std::to_string(line_no) + ": bad record");
        int frame_id = 0;
        try {
            frame_id = static_cast<int>(std::stol(id_text, nullptr, 0));
        } catch (const std::exception&) {
            return input_error(trace_path + ": line " +
                               std::to_string(line_no) + ": bad frame id '" +
                               id_text + "'");
        }
        std::string extra;
        if (fields >> extra)
            return input_error(trace_path + ": line " +
                               std::to_string(line_no) + ": bad record");
        events.push_back({frame_id, t});
    }
    std::stable_sort(events.begin(), events.end(),
                     [](const policy::CanEvent& a, const policy::CanEvent& b) {
                         return a.t_ms < b.t_ms;
                     });

    std::int64_t last_t = events.empty() ? 0 : events.back().t_ms;
    std::ostringstream human;
    human << "policy: " << policy::render_policy(pol) << "\n"
          << "trace: " << events.size() << " frames over [0, " << last_t
          << "] ms\n";

    // Same two-of-three voter the runtime detectors use.
    std::vector<int> scores;
    std::vector<std::int64_t> violations;
    std::int64_t first_flagged = -1;
    json windows = json::array();
    for (std::int64_t start = 0; start <= last_t; start += stride) {
        int score = policy::evaluate_policy(pol, events, start);
        scores.push_back(score);
        int recent = 0;
        for (std::size_t i = scores.size() > 3 ? scores.size() - 3 : 0;
             i < scores.size(); ++i)
            recent += scores[i];
        int vote = recent >= 2 ? 1 : 0;
        if (vote && first_flagged < 0) first_flagged = start;
        if (score) violations.push_back(start);
        human << "window " << start << " score " << score
              << (score ? " *" : "") << "\n";
        windows.push_back({{"start", start}, {"score", score}});
    }

    if (violations.empty()) {
        human << "violations: none\n";
    } else {
        human << "violations:";
        for (std::int64_t t : violations) human << " " << t;
        human << "\n";
    }
    if (first_flagged >= 0)
        human << "verdict: anomalous from " << first_flagged << "\n";
    else
        human << "verdict: clean\n";

    json machine = {{"window_ms", options.window_ms},
                    {"stride_ms", stride},
                    {"windows", windows},
                    {"violations", violations},
                    {"verdict", first_flagged >= 0 ? "anomalous" : "clean"}};
    if (first_flagged >= 0) machine["first_flagged"] = first_flagged;

    return {violations.empty() ? exit_ok : exit_mismatch,
            finish(human.str(), machine)};
}

CommandResult cmd_check(const std::string& scenario_path,
                        double expect_total_ms, double tolerance_ms) {
    CommandResult error;
    std::optional<LoadedScenario> loaded =
        load_checked(scenario_path, error);
    if (!loaded) return error;
    if (!loaded->violations.empty()) {
        std::string human;
        for (const model::Violation& v : loaded->violations)
            human += violation_line(v) + "\n";
        return {exit_invalid,
                finish(human, json{{"ok", false},
                                   {"violations",
                                    violations_json(loaded->violations)}})};
    }

    sim::RunResult result = sim::run(loaded->scenario);
    double measured = static_cast<double>(result.report.total_recovery_ms);
    if (result.report.timed_out) {
        std::string msg = "run timed out before settling";
        return {exit_runtime,
                finish("error: " + msg + "\n",
                       json{{"error", msg}, {"measured_ms", measured}})};
    }

    double delta = std::abs(measured - expect_total_ms);
    bool ok = delta <= tolerance_ms;
    std::ostringstream human;
    human << "expected total recovery: " << fmt_ms(expect_total_ms)
          << " ms\n"
          << "measured total recovery: " << fmt_ms(measured) << " ms\n"
          << "delta: " << fmt_ms(delta) << " ms (tolerance "
          << fmt_ms(tolerance_ms) << ")\n"
          << (ok ? "within tolerance\n" : "MISMATCH\n");
    json machine = {{"expected_ms", expect_total_ms},
                    {"measured_ms", measured},
                    {"delta_ms", delta},
                    {"tolerance_ms", tolerance_ms},
                    {"ok", ok}};
    return {ok ? exit_ok : exit_mismatch, finish(human.str(), machine)};
}

}  // namespace flowguard::cli
