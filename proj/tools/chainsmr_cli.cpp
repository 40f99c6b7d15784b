#include "chainsmr/harness.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

using namespace chainsmr;
namespace fs = std::filesystem;

namespace {

constexpr int kExitSafety = 1;
constexpr int kExitInvalid = 2;

struct Common {
    std::string scenario_path;
    std::string out_dir = "out";
    std::string protocol;
    std::string adversary;
    Tick window = 0;
};

Scenario load(const Common& c) {
    Scenario s = load_scenario(c.scenario_path);
    if (!c.protocol.empty()) s.protocol = parse_protocol(c.protocol);
    if (!c.adversary.empty()) s.adversary = parse_adversary(c.adversary);
    if (const char* env = std::getenv("CHAINSMR_SEED")) {
        try {
            s.seed = std::stoull(env);
        } catch (const std::exception&) {
            throw InvalidScenario("CHAINSMR_SEED is not an integer");
        }
    }
    s.validate();
    return s;
}

Tick window_for(const Common& c, const Scenario& s) { return c.window > 0 ? c.window : 100 * s.delta; }

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
}

// "5" means seeds 1..5; "10-19" is inclusive.
std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
    std::vector<std::uint64_t> out;
    auto dash = spec.find('-');
    std::uint64_t lo = 1, hi = 0;
    try {
        if (dash == std::string::npos) {
            hi = std::stoull(spec);
        } else {
            lo = std::stoull(spec.substr(0, dash));
            hi = std::stoull(spec.substr(dash + 1));
        }
    } catch (const std::exception&) {
        throw InvalidScenario("bad --seeds value '" + spec + "'");
    }
    for (auto s = lo; s <= hi; ++s) out.push_back(s);
    if (out.empty()) throw InvalidScenario("--seeds selects no seeds");
    return out;
}

int cmd_run(const Common& c, bool dump_trace) {
    Scenario s = load(c);
    Trace t = simulate(s);
    Report r = make_report(t, window_for(c, s));
    fs::path out(c.out_dir);
    fs::create_directories(out / "logs");
    write_file(out / "report.json", report_to_json(r).dump(2) + "\n");
    for (ReplicaId i = 0; i < t.logs.size(); ++i)
        if (t.honest[i]) write_persisted_log(out / "logs" / ("replica_" + std::to_string(i) + ".log"), i, t.logs[i]);
    if (dump_trace) write_file(out / "trace.json", trace_to_json(t).dump() + "\n");
    std::cout << "commits " << r.commits_total << "  hops mean " << r.hops.mean << "  messages/commit "
              << r.messages_per_commit << "\nsafety " << (r.safety.pass ? "PASS" : "FAIL ") << r.safety.detail
              << "\nliveness " << (r.liveness.pass ? "PASS " : "FAIL ") << r.liveness.detail << '\n';
    for (const auto& v : r.violations) std::cout << "violation: " << v << '\n';
    return r.safety.pass && r.violations.empty() ? 0 : kExitSafety;
}

int cmd_sweep(const Common& c, const std::string& seeds, bool serial) {
    Scenario base = load(c);
    std::vector<Scenario> scenarios;
    for (auto seed : parse_seeds(seeds)) {
        Scenario s = base;
        s.seed = seed;
        scenarios.push_back(s);
    }
    auto window = window_for(c, base);
    auto reports = serial ? run_sweep_serial(scenarios, window) : run_sweep_parallel(scenarios, window);
    fs::path out(c.out_dir);
    fs::create_directories(out);
    write_file(out / "sweep.csv", sweep_csv(reports));
    nlohmann::json agg = nlohmann::json::object();
    for (const auto& a : aggregate_reports(reports)) {
        agg[a.metric] = {{"mean", a.mean}, {"stddev", a.stddev}};
        std::cout << a.metric << ": " << a.mean << " +- " << a.stddev << '\n';
    }
    write_file(out / "aggregate.json", agg.dump(2) + "\n");
    bool safe = std::all_of(reports.begin(), reports.end(), [](const Report& r) { return r.safety.pass; });
    std::cout << reports.size() << " runs, safety " << (safe ? "PASS" : "FAIL") << '\n';
    return safe ? 0 : kExitSafety;
}

int cmd_check(const std::string& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".log") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        std::cerr << "no .log files in " << dir << '\n';
        return kExitInvalid;
    }
    std::vector<std::vector<CommitEntry>> logs;
    int status = 0;
    for (const auto& f : files) {
        try {
            logs.push_back(read_persisted_log(f).entries);
            std::cout << f.filename().string() << ": " << logs.back().size() << " entries ok\n";
        } catch (const std::exception& e) {
            std::cout << f.filename().string() << ": " << e.what() << '\n';
            status = kExitSafety;
        }
    }
    auto v = check_safety(logs, std::vector<bool>(logs.size(), true));
    std::cout << "prefix consistency " << (v.pass ? "PASS" : "FAIL " + v.detail) << '\n';
    return v.pass ? status : kExitSafety;
}

int cmd_replay(const Common& c, const std::string& trace_out) {
    Scenario s = load(c);
    std::string a = trace_to_json(simulate(s)).dump();
    std::string b = trace_to_json(simulate(s)).dump();
    std::cout << "trace sha256 " << hash(a).hex() << (a == b ? "  (replayed identically)" : "  (MISMATCH)") << '\n';
    if (!trace_out.empty()) write_file(trace_out, a + "\n");
    return a == b ? 0 : kExitSafety;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Chained BFT SMR simulator"};
    app.require_subcommand(1);
    Common c;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--scenario", c.scenario_path, "scenario JSON file")->required()->check(CLI::ExistingFile);
        sub->add_option("--protocol", c.protocol, "override the scenario protocol");
        sub->add_option("--adversary", c.adversary, "override the scenario adversary");
        sub->add_option("--window", c.window, "liveness window in ticks (default 100 delta)");
    };

    bool dump_trace = false;
    auto* run = app.add_subcommand("run", "simulate one scenario");
    add_common(run);
    run->add_option("--out", c.out_dir, "output directory");
    run->add_flag("--trace", dump_trace, "also write trace.json");

    std::string seeds = "3";
    bool serial = false;
    auto* sweep = app.add_subcommand("sweep", "simulate a range of seeds and aggregate");
    add_common(sweep);
    sweep->add_option("--out", c.out_dir, "output directory");
    sweep->add_option("--seeds", seeds, "count k (seeds 1..k) or inclusive range a-b");
    sweep->add_flag("--serial", serial, "run without OpenMP");

    std::string log_dir;
    auto* check = app.add_subcommand("check", "validate persisted commit logs");
    check->add_option("--out,--logs", log_dir, "directory holding .log files")->required();

    std::string trace_out;
    auto* replay = app.add_subcommand("replay", "re-run a scenario twice and compare traces");
    add_common(replay);
    replay->add_option("--trace-out", trace_out, "write the trace JSON here");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*run) return cmd_run(c, dump_trace);
        if (*sweep) return cmd_sweep(c, seeds, serial);
        if (*check) return cmd_check(log_dir);
        if (*replay) return cmd_replay(c, trace_out);
    } catch (const InvalidScenario& e) {
        std::cerr << "invalid scenario: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInvalid;
    }
    return 0;
}
