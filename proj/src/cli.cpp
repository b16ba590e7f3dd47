#include "cpmm/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "cpmm/bandits.hpp"
#include "cpmm/demo.hpp"
#include "cpmm/error.hpp"
#include "cpmm/fixtures.hpp"
#include "cpmm/sim.hpp"

#ifndef CPMM_FIXTURE_DIR
#define CPMM_FIXTURE_DIR "fixtures"
#endif

namespace cpmm::cli {

namespace fs = std::filesystem;
using payload::Json;

std::string default_fixture_root() { return CPMM_FIXTURE_DIR; }

namespace {

struct Options {
    std::string scenario;
    std::optional<std::uint64_t> seed;
    std::optional<long> rounds;
    std::string out_dir;
    bool full_protocol = false;
    std::string experiment;
    int seeds = 0;
    double disclosure = 0.5;
    int k_max = 8;
    std::string fixture_root = default_fixture_root();
    bool write = false;
};

sim::ScenarioConfig load_scenario(const Options& o) {
    if (o.scenario.empty()) throw ValidationError("--scenario is required");
    if (!fs::exists(o.scenario)) throw ValidationError("scenario file not found: " + o.scenario);
    Json j;
    try {
        j = Json::parse(fixtures::read_file(o.scenario));
    } catch (const Json::parse_error& e) {
        throw ParseError(o.scenario, e.what());
    }
    auto c = sim::scenario_from_json(j);
    if (o.seed) c.seed = *o.seed;
    if (o.rounds) c.rounds = *o.rounds;
    if (o.full_protocol) c.full_protocol = true;
    c.validate();
    return c;
}

void write_output(const std::string& dir, const std::string& name, const std::string& bytes) {
    if (dir.empty()) return;
    fs::create_directories(dir);
    std::ofstream f(fs::path(dir) / name, std::ios::binary);
    if (!f) throw ValidationError("cannot write to " + dir);
    f << bytes;
}

int cmd_run(const Options& o, std::ostream& out) {
    const auto c = load_scenario(o);
    const auto m = sim::run_market(c);
    const std::string summary = payload::canonical_serialize(m.summary());
    write_output(o.out_dir, "metrics.tsv", m.table());
    write_output(o.out_dir, "summary.json", summary + "\n");
    out << summary << "\n";
    return kOk;
}

Json convergence_report(const Options& o) {
    const auto base = load_scenario(o);
    const int seeds = o.seeds > 0 ? o.seeds : 20;
    Json runs = Json::array();
    bool pass = true;
    for (int s = 0; s < seeds; ++s) {
        auto c = base;
        c.seed = base.seed + static_cast<std::uint64_t>(s);
        const double p_star = sim::equilibrium_oracle(c);
        const auto r = sim::convergence_experiment(c, {0.01 * p_star, 0.05 * p_star, 0.1 * p_star});
        const bool ok = r.tail_median_error <= 0.05 * p_star && r.non_increasing && r.settle_round[1].has_value();
        pass = pass && ok;
        Json row = r.to_json();
        row["seed"] = c.seed;
        row["pass"] = ok;
        runs.push_back(row);
    }
    return {{"experiment", "convergence"}, {"pass", pass}, {"runs", runs}};
}

Json efficiency_report(const Options& o) {
    long rounds = o.rounds.value_or(1000);
    if (!o.scenario.empty()) rounds = o.rounds.value_or(load_scenario(o).rounds);
    const int seeds = o.seeds > 0 ? o.seeds : 20;
    const auto rows = sim::efficiency_experiment({4, 16, 64}, seeds, rounds, o.disclosure);
    Json table = Json::array();
    bool pass = true;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        table.push_back({{"agents", rows[i].agents}, {"mean", rows[i].mean}, {"min", rows[i].min}, {"max", rows[i].max}});
        pass = pass && rows[i].min >= 0.0 && rows[i].max <= 1.0;
        if (i > 0) pass = pass && rows[i].mean >= rows[i - 1].mean;
    }
    return {{"experiment", "efficiency"}, {"disclosure", o.disclosure}, {"rounds", rounds}, {"seeds", seeds},
            {"pass", pass}, {"rows", table}};
}

Json sybil_report(const Options& o) {
    const auto c = load_scenario(o);
    const auto r = sim::sybil_experiment(c, o.k_max, o.seeds > 0 ? o.seeds : 20);
    Json j = r.to_json();
    j["experiment"] = "sybil";
    j["pass"] = r.marginal_non_increasing && r.within_budget;
    return j;
}

Json regret_report(const Options& o) {
    const auto curve = bandit::regret_curve({1000, 2000, 5000, 10000}, o.seeds > 0 ? o.seeds : 50);
    Json points = Json::array();
    bool pass = true;
    for (const auto& p : curve) {
        points.push_back({{"horizon", p.horizon},
                          {"ucb_mean_regret", p.ucb_mean},
                          {"ucb_bound", p.ucb_bound},
                          {"linucb_mean_regret", p.linucb_mean},
                          {"linucb_bound", p.linucb_bound}});
        pass = pass && p.ucb_mean <= p.ucb_bound && p.linucb_mean <= p.linucb_bound;
    }
    return {{"experiment", "regret"}, {"pass", pass}, {"curve", points}};
}

Json elasticity_report(const Options& o) {
    const auto c = load_scenario(o);
    const auto r = sim::elasticity_experiment(c, o.seeds > 0 ? o.seeds : 20, {0.1, 0.25, 0.5, 0.75, 0.9});
    Json j = r.to_json();
    j["experiment"] = "elasticity";
    j["pass"] = r.min >= -1.05 && r.max <= 0.05;
    return j;
}

int cmd_experiment(const Options& o, std::ostream& out) {
    Json report;
    if (o.experiment == "convergence") report = convergence_report(o);
    else if (o.experiment == "efficiency") report = efficiency_report(o);
    else if (o.experiment == "sybil") report = sybil_report(o);
    else if (o.experiment == "regret") report = regret_report(o);
    else if (o.experiment == "elasticity") report = elasticity_report(o);
    else throw ValidationError("unknown experiment '" + o.experiment + "'");
    const std::string text = report.dump(2);
    write_output(o.out_dir, o.experiment + ".json", text + "\n");
    out << text << "\n";
    return report["pass"].get<bool>() ? kOk : kCheckFailed;
}

int cmd_verify_fixtures(const Options& o, std::ostream& out) {
    if (o.write) {
        fixtures::write_golden(o.fixture_root);
        out << "wrote golden payloads under " << o.fixture_root << "\n";
    }
    bool all = true;
    for (const auto& c : fixtures::verify(o.fixture_root)) {
        out << (c.ok ? "ok    " : "FAIL  ") << c.name << (c.ok ? "" : ": " + c.detail) << "\n";
        all = all && c.ok;
    }
    return all ? kOk : kCheckFailed;
}

int cmd_demo(std::ostream& out) {
    const auto r = demo::run_demo();
    out << demo::render(r);
    return r.completed ? kOk : kRuntime;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Capability-priced micro-market toolkit", "cpmm"};
    app.require_subcommand(1);
    Options o;

    auto* run_cmd = app.add_subcommand("run", "Run one market scenario and export its metrics");
    run_cmd->add_option("--scenario", o.scenario, "Scenario file")->required();
    run_cmd->add_option("--seed", o.seed, "Seed override");
    run_cmd->add_option("--rounds", o.rounds, "Round count override");
    run_cmd->add_option("--out", o.out_dir, "Directory for metrics.tsv and summary.json");
    run_cmd->add_flag("--full-protocol", o.full_protocol, "Replay every trade through the full protocol");

    auto* exp_cmd = app.add_subcommand("experiment", "Run a named property experiment");
    exp_cmd->add_option("name", o.experiment, "convergence, efficiency, sybil, regret or elasticity")->required();
    exp_cmd->add_option("--scenario", o.scenario, "Scenario file");
    exp_cmd->add_option("--seed", o.seed, "Base seed override");
    exp_cmd->add_option("--rounds", o.rounds, "Round count override");
    exp_cmd->add_option("--seeds", o.seeds, "Number of seeds");
    exp_cmd->add_option("--disclosure", o.disclosure, "Disclosure level for the efficiency markets");
    exp_cmd->add_option("--k-max", o.k_max, "Largest number of attacker identities");
    exp_cmd->add_option("--out", o.out_dir, "Directory for the report");

    auto* fix_cmd = app.add_subcommand("verify-fixtures", "Re-encode every fixture and compare byte for byte");
    fix_cmd->add_option("--root", o.fixture_root, "Fixture directory");
    fix_cmd->add_flag("--write", o.write, "Regenerate the golden payload files first");

    auto* demo_cmd = app.add_subcommand("demo", "Replay a single scripted trade");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kUsage;
    }

    try {
        if (*run_cmd) return cmd_run(o, out);
        if (*exp_cmd) return cmd_experiment(o, out);
        if (*fix_cmd) return cmd_verify_fixtures(o, out);
        if (*demo_cmd) return cmd_demo(out);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const DimensionError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        err << "runtime error: " << e.what() << "\n";
        return kRuntime;
    }
    return kUsage;
}

}  // namespace cpmm::cli
