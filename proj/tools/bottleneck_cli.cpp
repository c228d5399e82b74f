#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "bottleneck/config.hpp"
#include "bottleneck/experiments.hpp"
#include "bottleneck/game.hpp"
#include "bottleneck/server.hpp"

using namespace bottleneck;
namespace fs = std::filesystem;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
    int parallel = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
};

ConfigFile load(const Globals& g) {
    ConfigFile cfg = g.config.empty() ? parse_config(nlohmann::json::object()) : load_config(g.config);
    if (g.seed) cfg.sweep.seed = *g.seed;
    cfg.sweep.parallel = g.parallel;
    return cfg;
}

std::ofstream open_out(const Globals& g, const std::string& name) {
    fs::create_directories(g.out);
    const fs::path p = fs::path(g.out) / name;
    std::ofstream f(p);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    std::cout << "wrote " << p.string() << "\n";
    return f;
}

std::string command_line(int argc, char** argv) {
    std::string s;
    for (int i = 0; i < argc; ++i) s += (i ? " " : "") + std::string(argv[i]);
    return s;
}

void print_points(const SweepResult& r) {
    std::printf("%8s %6s %10s %8s %8s\n", "inflow", "p", "outflow", "sd", "denied");
    for (const auto& p : r.points)
        std::printf("%8.0f %6.2f %10.1f %8.1f %8.1f\n", p.inflow, p.penetration, p.mean, p.sd, p.denied);
}

void write_sweep(const Globals& g, const std::string& stem, const SweepConfig& cfg, const SweepResult& r,
                 const std::string& cmd) {
    auto runs = open_out(g, stem + "_runs.csv");
    write_runs_csv(runs, r);
    auto summary = open_out(g, stem + "_summary.csv");
    write_summary_csv(summary, r);
    auto manifest = open_out(g, stem + "_manifest.json");
    write_manifest(manifest, cfg, r, cmd);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mixed-autonomy bottleneck simulator and experiment harness"};
    app.require_subcommand(1);
    Globals g;
    std::uint64_t seed = 0;
    app.add_option("--config", g.config, "JSON config file")->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", seed, "Base seed");
    app.add_option("--out", g.out, "Output directory");
    app.add_option("--parallel", g.parallel, "Worker threads")->check(CLI::PositiveNumber);

    // capacity
    auto* cap = app.add_subcommand("capacity", "Uncontrolled inflow/outflow sweep");
    int cap_runs = 0;
    std::vector<double> cap_inflows;
    cap->add_option("--runs", cap_runs, "Runs per inflow (default from config)");
    cap->add_option("--inflows", cap_inflows, "Inflow grid (veh/h)")->delimiter(',');

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "Search edge lengths / min_gap for the target onset");
    int cal_runs = 0;
    cal->add_option("--runs", cal_runs, "Runs per inflow");

    // tune-feedback
    auto* tune = app.add_subcommand("tune-feedback", "Grid search over n_crit, K, q_init");
    std::string tune_mode = "alinea";
    double tune_inflow = 3500, tune_p = 0.4;
    int tune_runs = 10;
    tune->add_option("--mode", tune_mode, "alinea or av-feedback")->check(CLI::IsMember({"alinea", "av-feedback"}));
    tune->add_option("--inflow", tune_inflow, "Evaluation inflow");
    tune->add_option("--penetration", tune_p, "AV share (av-feedback)");
    tune->add_option("--runs", tune_runs, "Runs per grid point");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Evaluate a controller (reroute off)");
    std::string ev_mode = "none", ev_policy, ev_space;
    std::vector<double> ev_inflows, ev_pens;
    int ev_runs = 0;
    ev->add_option("--mode", ev_mode, "none | alinea | av-feedback | policy | scripted")
        ->check(CLI::IsMember({"none", "alinea", "av-feedback", "policy", "scripted"}));
    ev->add_option("--policy", ev_policy, "host:port of a policy server (policy mode)");
    ev->add_option("--state-space", ev_space, "Observation layout for policy modes");
    ev->add_option("--inflows", ev_inflows, "Inflow grid")->delimiter(',');
    ev->add_option("--penetrations", ev_pens, "Penetration list")->delimiter(',');
    ev->add_option("--runs", ev_runs, "Runs per point");

    // ablate
    auto* ab = app.add_subcommand("ablate", "Lane changing and radar range ablations");
    std::string ab_mode = "scripted", ab_policy;
    double ab_inflow = 2400;
    std::vector<double> ab_pens{0.05, 0.10, 0.20, 0.40};
    int ab_runs = 5;
    ab->add_option("--mode", ab_mode, "policy | scripted | av-feedback | alinea | none");
    ab->add_option("--policy", ab_policy, "host:port (policy mode)");
    ab->add_option("--inflow", ab_inflow, "Inflow");
    ab->add_option("--penetrations", ab_pens, "Penetration list")->delimiter(',');
    ab->add_option("--runs", ab_runs, "Runs per point");

    // hysteresis
    auto* hy = app.add_subcommand("hysteresis", "Congest at a high inflow, then lower it");
    double hy_high = 2500, hy_low = 2300, hy_hold = 300;
    int hy_runs = 10;
    hy->add_option("--high", hy_high);
    hy->add_option("--low", hy_low);
    hy->add_option("--hold", hy_hold);
    hy->add_option("--runs", hy_runs);

    // game
    auto* game = app.add_subcommand("game", "Print the go/no-go games, equilibria and optima");

    // serve
    auto* serve = app.add_subcommand("serve", "Environment server (newline-delimited JSON)");
    int port = 5555;
    std::string host = "127.0.0.1";
    bool use_stdio = false;
    serve->add_option("--port", port, "TCP port");
    serve->add_option("--host", host, "Bind address");
    serve->add_flag("--stdio", use_stdio, "Serve one session on stdin/stdout");

    CLI11_PARSE(app, argc, argv);
    if (*seed_opt) g.seed = seed;
    const std::string cmd = command_line(argc, argv);

    try {
        if (*game) {
            std::cout << describe(build_go_nogo_game(false), "Closed network (exited vehicles keep earning)") << "\n"
                      << describe(build_go_nogo_game(true), "Open network (exited vehicles earn nothing)");
            return 0;
        }
        ConfigFile cfg = load(g);

        if (*cap) {
            SweepConfig sc = cfg.sweep;
            sc.mode = ControlMode::none;
            sc.penetrations = {0.0};
            if (cap_runs > 0) sc.runs = cap_runs;
            if (!cap_inflows.empty()) sc.inflows = cap_inflows;
            const auto r = capacity_sweep(sc);
            print_points(r);
            const auto onset = congestion_onset(r.points);
            std::printf("onset: %s   peak: %.1f\n", onset ? std::to_string(static_cast<int>(*onset)).c_str() : "none",
                        peak_outflow(r.points));
            write_sweep(g, "capacity", sc, r, cmd);
        } else if (*cal) {
            CalibrationConfig cc;
            cc.sweep = cfg.sweep;
            if (cal_runs > 0) cc.sweep.runs = cal_runs;
            const auto rep = calibrate_network(cc);
            for (const auto& c : rep.tried) {
                std::printf("lengths [");
                for (std::size_t i = 0; i < c.lengths.size(); ++i) std::printf("%s%.0f", i ? " " : "", c.lengths[i]);
                std::printf("] min_gap %.2f  onset %s%s\n", c.min_gap,
                            c.onset ? std::to_string(static_cast<int>(*c.onset)).c_str() : "none",
                            c.accepted ? "  <- accepted" : "");
            }
            auto f = open_out(g, "calibrated_network.json");
            f << nlohmann::json{{"network", rep.spec}}.dump(2) << "\n";
            if (!rep.found) {
                std::cerr << rep.diagnostic << "\n";
                return 2;
            }
        } else if (*tune) {
            SweepConfig sc = cfg.sweep;
            sc.mode = parse_mode(tune_mode);
            sc.inflows = {tune_inflow};
            sc.penetrations = {sc.mode == ControlMode::av_feedback ? tune_p : 0.0};
            sc.runs = tune_runs;
            const auto r = tune_feedback(sc, FeedbackGrid{});
            auto f = open_out(g, "tune_" + tune_mode + ".csv");
            write_tune_csv(f, r);
            auto b = open_out(g, "tune_" + tune_mode + "_best.json");
            b << nlohmann::json{{"feedback", r.best}}.dump(2) << "\n";
            std::printf("best: n_crit %.0f K %.0f q_init %.0f\n", r.best.n_crit, r.best.K, r.best.q_init);
        } else if (*ev) {
            SweepConfig sc = cfg.sweep;
            sc.mode = parse_mode(ev_mode);
            if (!ev_policy.empty()) sc.policy_endpoint = ev_policy;
            if (!ev_space.empty()) sc.state_space = parse_state_space(ev_space);
            if (!ev_inflows.empty()) sc.inflows = ev_inflows;
            if (!ev_pens.empty()) sc.penetrations = ev_pens;
            else if (sc.mode == ControlMode::none || sc.mode == ControlMode::alinea) sc.penetrations = {0.0};
            if (ev_runs > 0) sc.runs = ev_runs;
            const auto r = evaluate_controller(sc);
            print_points(r);
            write_sweep(g, "evaluate_" + ev_mode, sc, r, cmd);
        } else if (*ab) {
            SweepConfig sc = cfg.sweep;
            sc.mode = parse_mode(ab_mode);
            if (!ab_policy.empty()) sc.policy_endpoint = ab_policy;
            sc.inflows = {ab_inflow};
            sc.penetrations = ab_pens;
            sc.runs = ab_runs;
            const auto rows = ablation_run(sc);
            for (const auto& r : rows)
                std::printf("%-16s p=%.2f  %8.1f +- %6.1f\n", r.variant.c_str(), r.penetration, r.mean, r.sd);
            auto f = open_out(g, "ablation.csv");
            write_ablation_csv(f, rows);
        } else if (*hy) {
            auto f = open_out(g, "hysteresis.csv");
            f << "run,seed,congested_at,outflow_after,free_flow\n";
            for (int r = 0; r < hy_runs; ++r) {
                const auto s = derive_seed(cfg.sweep.seed, 7, static_cast<std::uint64_t>(r));
                const auto res = hysteresis_run(cfg.network, s, hy_high, hy_low, hy_hold);
                std::printf("run %d  congested at %.0f s  outflow after %.0f veh/h\n", r, res.congested_at,
                            res.outflow_after);
                f << r << ',' << s << ',' << res.congested_at << ',' << res.outflow_after << ',' << res.free_flow
                  << '\n';
            }
        } else if (*serve) {
            if (use_stdio) {
                serve_stdio(std::cin, std::cout, cfg.episode);
                return 0;
            }
            TcpServer server;
            const int bound = server.start_env(port, cfg.episode, host);
            std::cerr << "listening on " << host << ":" << bound << "\n";
            server.wait();
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
