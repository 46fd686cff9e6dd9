// ============================================================================
// cpsp — command-line frontend
// ============================================================================
//
//   cpsp verify <scenario.cpsp>        run the attack search
//   cpsp export <trace.json>           render a saved trace as DOT
//   cpsp check-completeness <scenario> randomized canonicalization trials
//   cpsp corpus list                   list the bundled scenarios
//
// Exit codes for verify: 0 attack found, 1 no attack (exhaustive),
// 2 limits exceeded, 3 error.
//
// ============================================================================

#include <cpsp/completeness.hpp>
#include <cpsp/export.hpp>
#include <cpsp/lang.hpp>
#include <cpsp/search.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace cpsp;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}

struct CommonOpts {
    std::string backend = "auto";
    std::string solver_path;
    int max_depth = 64;
    long max_states = 100000;
    int workers = 1;
    uint64_t seed = 0;
    int solver_timeout_ms = 20000;
};

SatOracle make_oracle(const CommonOpts& o) {
    SolverConfig cfg;
    cfg.command = o.solver_path.empty() ? default_solver_command() : o.solver_path;
    cfg.timeout_ms = o.solver_timeout_ms;
    Backend mode = Backend::Auto;
    if (o.backend == "builtin") mode = Backend::Builtin;
    else if (o.backend == "smt") mode = Backend::Smt;
    return SatOracle(cfg, mode);
}

int cmd_verify(const std::string& path, const CommonOpts& opts, const std::string& emit,
               const std::string& out_dir) {
    Scenario sc = parse_scenario(slurp(path));
    if (!sc.has_goal) {
        std::cerr << "error: scenario has no goal\n";
        return 3;
    }

    SatOracle oracle = make_oracle(opts);
    SearchLimits limits;
    limits.max_depth = opts.max_depth;
    limits.max_states = opts.max_states;
    limits.workers = opts.workers;
    limits.seed = opts.seed;
    limits.solver_timeout_ms = opts.solver_timeout_ms;

    SearchOutcome outcome = find_attack(sc, oracle, limits);

    const char* verdict = outcome.verdict == SearchVerdict::Attack ? "attack found"
                          : outcome.verdict == SearchVerdict::NoAttack
                              ? "no attack (search exhausted)"
                              : "inconclusive (limits exceeded)";
    std::cout << sc.name << ": " << verdict << "\n";
    std::cout << "  states          " << outcome.stats.states << "\n";
    std::cout << "  solver calls    builtin " << outcome.stats.builtin_calls << " / smt "
              << outcome.stats.smt_calls << "\n";
    std::cout << "  max depth       " << outcome.stats.max_depth << "\n";
    std::cout << "  wall time       " << outcome.stats.wall_ms << " ms\n";

    if (emit != "none") {
        fs::path dir(out_dir);
        fs::create_directories(dir);
        if (emit == "json" || emit == "both")
            write_file(dir / (sc.name + ".trace.json"),
                       trace_json(sc.name, outcome).dump(2) + "\n");
        if ((emit == "dot" || emit == "both") && outcome.trace)
            write_file(dir / (sc.name + ".dot"), bundle_dot(outcome.trace->witness));
    }

    switch (outcome.verdict) {
        case SearchVerdict::Attack: return 0;
        case SearchVerdict::NoAttack: return 1;
        case SearchVerdict::LimitExceeded: return 2;
    }
    return 3;
}

int cmd_export(const std::string& path, const std::string& out_file) {
    nlohmann::json trace = nlohmann::json::parse(slurp(path));
    std::string dot = dot_from_trace(trace);
    if (out_file.empty() || out_file == "-") {
        std::cout << dot;
    } else {
        write_file(out_file, dot);
        std::cout << "wrote " << out_file << "\n";
    }
    return 0;
}

int cmd_check_completeness(const std::string& path, const CommonOpts& opts, int trials,
                           bool negative_control) {
    Scenario sc = parse_scenario(slurp(path));
    if (sc.explicit_intruder_names.empty())
        std::cout << "note: no explicit intruders declared; trials have nothing to scatter "
                     "and pass vacuously\n";
    SatOracle oracle = make_oracle(opts);
    std::mt19937_64 rng(opts.seed ? opts.seed : 0x9e3779b97f4a7c15ULL);

    int passed = 0, vacuous = 0;
    for (int i = 0; i < trials; ++i) {
        TrialSetup setup;
        setup.participants = sc.participant_names;
        setup.intruders = sc.explicit_intruder_names;
        setup.seed = rng();
        setup.break_canonical = negative_control;
        auto out = completeness_trial(setup, oracle);
        std::cout << "trial " << (i + 1) << "/" << trials << ": "
                  << (out.pass ? "pass" : "FAIL") << " (" << out.detail << ")\n";
        if (out.pass) ++passed;
        if (out.vacuous) ++vacuous;
    }
    std::cout << passed << "/" << trials << " trials passed";
    if (vacuous) std::cout << " (" << vacuous << " vacuous)";
    std::cout << "\n";
    return passed == trials ? 0 : 1;
}

int cmd_corpus_list(const std::string& dir) {
    fs::path corpus(dir);
    if (!fs::is_directory(corpus)) {
        std::cerr << "error: no corpus directory at " << corpus << "\n";
        return 3;
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(corpus))
        if (entry.path().extension() == ".cpsp") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        try {
            Scenario sc = parse_scenario(slurp(f.string()));
            std::cout << f.filename().string() << ": scenario " << sc.name << ", "
                      << sc.participant_names.size() << " participants, " << sc.runs.size()
                      << " runs";
            if (!sc.explicit_intruder_names.empty())
                std::cout << ", " << sc.explicit_intruder_names.size() << " explicit intruders";
            std::cout << "\n";
        } catch (const std::exception& e) {
            std::cout << f.filename().string() << ": parse error: " << e.what() << "\n";
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"symbolic verifier for cyber-physical security protocols"};
    app.require_subcommand(1);

    CommonOpts opts;
    if (const char* w = getenv("CPSP_WORKERS"); w && *w) opts.workers = std::max(1, atoi(w));

    std::string scenario_path, emit = "json", out_dir = ".", trace_path, out_file;
    int trials = 50;
    bool negative_control = false;
    std::string corpus_dir = getenv("CPSP_CORPUS") ? getenv("CPSP_CORPUS") : "corpus";

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--backend", opts.backend, "satisfiability backend")
            ->check(CLI::IsMember({"auto", "builtin", "smt"}));
        cmd->add_option("--solver-path", opts.solver_path,
                        "external SMT solver command (default: $CPSP_SOLVER or bundled cpsp-smt)");
        cmd->add_option("--max-depth", opts.max_depth, "bundle node limit");
        cmd->add_option("--max-states", opts.max_states, "explored state limit");
        cmd->add_option("--workers", opts.workers, "parallel search workers");
        cmd->add_option("--seed", opts.seed, "random seed");
        cmd->add_option("--solver-timeout", opts.solver_timeout_ms, "per-call solver timeout (ms)");
    };

    CLI::App* verify = app.add_subcommand("verify", "search a scenario for an attack");
    verify->add_option("scenario", scenario_path, "scenario file")->required();
    add_common(verify);
    verify->add_option("--emit", emit, "artifacts to write")
        ->check(CLI::IsMember({"none", "json", "dot", "both"}));
    verify->add_option("--out", out_dir, "artifact directory");

    CLI::App* exp = app.add_subcommand("export", "render a trace JSON as DOT");
    exp->add_option("trace", trace_path, "trace JSON file")->required();
    exp->add_option("-o,--out", out_file, "output file (default stdout)");

    CLI::App* chk = app.add_subcommand("check-completeness",
                                       "randomized canonical-intruder trials");
    chk->add_option("scenario", scenario_path, "scenario with explicit intruders")->required();
    add_common(chk);
    chk->add_option("--trials", trials, "number of trials");
    chk->add_flag("--negative-control", negative_control,
                  "tamper with the transformation (harness self-test)");

    CLI::App* corpus = app.add_subcommand("corpus", "bundled scenario corpus");
    CLI::App* corpus_list = corpus->add_subcommand("list", "list corpus scenarios");
    corpus_list->add_option("--dir", corpus_dir, "corpus directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (verify->parsed()) return cmd_verify(scenario_path, opts, emit, out_dir);
        if (exp->parsed()) return cmd_export(trace_path, out_file);
        if (chk->parsed())
            return cmd_check_completeness(scenario_path, opts, trials, negative_control);
        if (corpus->parsed() && corpus_list->parsed()) return cmd_corpus_list(corpus_dir);
        std::cerr << "error: no subcommand\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
