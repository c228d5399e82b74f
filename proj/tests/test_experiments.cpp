#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "bottleneck/config.hpp"
#include "bottleneck/experiments.hpp"

using namespace bottleneck;

namespace {

SweepConfig small_sweep() {
    SweepConfig c;
    c.inflows = {800.0, 2600.0, 3400.0};
    c.runs = 3;
    c.horizon = 400.0;
    c.window = 200.0;
    return c;
}

std::string csv(const SweepResult& r, bool summary) {
    std::ostringstream os;
    summary ? write_summary_csv(os, r) : write_runs_csv(os, r);
    return os.str();
}

} // namespace

TEST_CASE("sweep: default grid") {
    const auto g = SweepConfig::default_inflows();
    REQUIRE(g.size() == 32);
    CHECK(g.front() == 400.0);
    CHECK(g.back() == 3500.0);
    CHECK(g[1] - g[0] == 100.0);
}

TEST_CASE("sweep: parallel output is byte-identical to sequential") {
    auto seq = small_sweep();
    auto par = seq;
    par.parallel = 4;
    const auto a = capacity_sweep(seq), b = capacity_sweep(par);
    CHECK(csv(a, false) == csv(b, false));
    CHECK(csv(a, true) == csv(b, true));
}

TEST_CASE("sweep: seeds do not depend on the grid layout") {
    auto a = small_sweep();
    auto b = small_sweep();
    b.inflows = {3400.0, 1500.0};
    const auto ra = capacity_sweep(a), rb = capacity_sweep(b);
    for (int r = 0; r < 3; ++r) {
        const auto& x = ra.runs[2 * 3 + r];
        const auto& y = rb.runs[r];
        REQUIRE(x.inflow == 3400.0);
        REQUIRE(y.inflow == 3400.0);
        CHECK(x.seed == y.seed);
        CHECK(x.outflow == y.outflow);
    }
    std::set<std::uint64_t> seeds;
    for (const auto& r : ra.runs) seeds.insert(r.seed);
    CHECK(seeds.size() == ra.runs.size());
    CHECK(run_seed(2024, 3400.0, 1) == ra.runs[7].seed);
}

TEST_CASE("sweep: summary statistics") {
    const auto r = capacity_sweep(small_sweep());
    REQUIRE(r.points.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        double mean = 0.0;
        for (int k = 0; k < 3; ++k) mean += r.runs[i * 3 + k].outflow;
        mean /= 3.0;
        double var = 0.0;
        for (int k = 0; k < 3; ++k) var += (r.runs[i * 3 + k].outflow - mean) * (r.runs[i * 3 + k].outflow - mean);
        CHECK(r.points[i].mean == doctest::Approx(mean));
        CHECK(r.points[i].sd == doctest::Approx(std::sqrt(var / 2.0)));
        CHECK(r.points[i].sd >= 0.0);
    }
    CHECK(r.points[0].mean == doctest::Approx(800.0).epsilon(0.25));
}

TEST_CASE("sweep: zero inflow gives zero outflow") {
    auto c = small_sweep();
    c.inflows = {0.0};
    const auto r = capacity_sweep(c);
    CHECK(r.points.front().mean == 0.0);
}

TEST_CASE("sweep: evaluate with no controller equals the capacity sweep") {
    auto c = small_sweep();
    CHECK(csv(evaluate_controller(c), false) == csv(capacity_sweep(c), false));
}

TEST_CASE("sweep: csv schema") {
    const auto r = capacity_sweep(small_sweep());
    const auto runs = csv(r, false), summary = csv(r, true);
    CHECK(runs.rfind("inflow,penetration,mode,run,seed,outflow_vph,denied_inflow\n", 0) == 0);
    CHECK(summary.rfind("inflow,penetration,mean_outflow_vph,std_outflow_vph,mean_denied\n", 0) == 0);
    CHECK(std::count(runs.begin(), runs.end(), '\n') == 1 + 9);
    CHECK(std::count(summary.begin(), summary.end(), '\n') == 1 + 3);
}

TEST_CASE("sweep: onset and peak") {
    std::vector<SweepPoint> pts{{400, 0, 401, 0, 0}, {2300, 0, 2200, 0, 0}, {2400, 0, 2000, 0, 0},
                                {3500, 0, 1700, 0, 0}};
    CHECK(congestion_onset(pts) == 2400.0);
    CHECK(peak_outflow(pts) == 2200.0);
    pts.pop_back();
    pts.pop_back();
    CHECK_FALSE(congestion_onset(pts).has_value());
}

TEST_CASE("sweep: validation") {
    auto c = small_sweep();
    c.inflows.clear();
    CHECK_THROWS(capacity_sweep(c));
    c = small_sweep();
    c.runs = 0;
    CHECK_THROWS(capacity_sweep(c));
}

TEST_CASE("manifest: hash tracks results-relevant settings only") {
    auto a = small_sweep();
    auto b = a;
    b.parallel = 8;
    CHECK(config_hash(a) == config_hash(b));
    b.seed = 7;
    CHECK(config_hash(a) != config_hash(b));
    b = a;
    b.network.krauss.min_gap = 2.0;
    CHECK(config_hash(a) != config_hash(b));

    const auto r = capacity_sweep(a);
    std::ostringstream os;
    write_manifest(os, a, r, "bottleneck capacity");
    const auto j = nlohmann::json::parse(os.str());
    CHECK(j.contains("config"));
    CHECK(j.contains("config_hash"));
    CHECK(j["config"]["seed"] == 2024);
    CHECK(j.dump().find("bottleneck capacity") != std::string::npos);
}

TEST_CASE("parallel_for: every index once, errors propagate") {
    std::vector<std::atomic<int>> hits(100);
    parallel_for(100, 4, [&](int i) { hits[i]++; });
    for (auto& h : hits) CHECK(h.load() == 1);
    CHECK_THROWS_AS(parallel_for(50, 3, [](int i) {
                        if (i == 17) throw std::runtime_error("boom");
                    }),
                    std::runtime_error);
}

TEST_CASE("controllers: every mode runs collision free") {
    auto c = small_sweep();
    c.inflows = {3000.0};
    c.runs = 2;
    c.penetrations = {0.2};
    for (auto m : {ControlMode::none, ControlMode::alinea, ControlMode::av_feedback, ControlMode::scripted}) {
        c.mode = m;
        CHECK_NOTHROW(evaluate_controller(c));
    }
    c.mode = ControlMode::policy;
    c.policy_endpoint = "127.0.0.1:1";
    CHECK_THROWS(evaluate_controller(c));
}

TEST_CASE("mode names round-trip") {
    for (auto m : {ControlMode::none, ControlMode::alinea, ControlMode::av_feedback, ControlMode::policy,
                   ControlMode::scripted})
        CHECK(parse_mode(to_string(m)) == m);
    CHECK_THROWS(parse_mode("magic"));
}

TEST_CASE("tune: grid search picks the best row") {
    auto c = small_sweep();
    c.mode = ControlMode::alinea;
    c.inflows = {3000.0};
    c.runs = 2;
    FeedbackGrid grid{{6, 10}, {5, 50}, {1000}};
    const auto r = tune_feedback(c, grid);
    REQUIRE(r.rows.size() == 4);
    double best = -1.0;
    for (const auto& row : r.rows) best = std::max(best, row.mean);
    const auto it = std::find_if(r.rows.begin(), r.rows.end(), [&](const TuneRow& row) { return row.mean == best; });
    CHECK(it->params.n_crit == r.best.n_crit);
    CHECK(it->params.K == r.best.K);
    c.mode = ControlMode::none;
    CHECK_THROWS(tune_feedback(c, grid));
}

TEST_CASE("calibrate: infeasible target fails with a diagnostic") {
    CalibrationConfig cc;
    cc.sweep = small_sweep();
    cc.sweep.inflows = {400.0, 1200.0, 2000.0};
    cc.sweep.runs = 1;
    cc.target_lo = 10.0;
    cc.target_hi = 20.0;
    cc.edge_lengths.clear();
    cc.min_gaps = {2.5};
    const auto rep = calibrate_network(cc);
    CHECK_FALSE(rep.found);
    CHECK(rep.tried.size() == 2);
    CHECK(rep.diagnostic.find("[10, 20]") != std::string::npos);
}

TEST_CASE("calibrate: the default network is a fixed point") {
    CalibrationConfig cc;
    cc.sweep.inflows = {2100.0, 2200.0, 2300.0, 2400.0, 2500.0};
    cc.sweep.runs = 8;
    cc.edge_lengths = {{300, 100, 60, 120, 100}};
    cc.min_gaps = {2.5};
    const auto rep = calibrate_network(cc);
    REQUIRE(rep.found);
    CHECK(rep.tried.size() == 1);
    CHECK(rep.spec.krauss.min_gap == NetworkSpec::bay_bridge().krauss.min_gap);
    CHECK(rep.spec.edges[0].length == NetworkSpec::bay_bridge().edges[0].length);
}

TEST_CASE("ablation: variants") {
    auto c = small_sweep();
    c.mode = ControlMode::scripted;
    c.inflows = {2400.0};
    c.penetrations = {0.05};
    c.runs = 5;
    c.horizon = 1000.0;
    c.window = 500.0;
    const auto rows = ablation_run(c);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].variant == "baseline");
    // the scripted controller reads only its own speed, so the radar cap is irrelevant
    CHECK(rows[2].mean == rows[0].mean);
    CHECK(rows[3].mean == rows[0].mean);
    CHECK(rows[1].mean <= rows[0].mean);
    std::ostringstream os;
    write_ablation_csv(os, rows);
    CHECK(os.str().rfind("variant,penetration,mean_outflow_vph,std_outflow_vph\n", 0) == 0);
}

TEST_CASE("hysteresis: congestion persists after lowering the inflow") {
    const auto r = hysteresis_run(NetworkSpec::bay_bridge(), 1);
    CHECK(r.congested_at > 0.0);
    CHECK(r.free_flow == 2300.0);
    CHECK(r.outflow_after < 0.85 * r.free_flow);
}

TEST_CASE("config: file sections and validation") {
    const auto cfg = parse_config(nlohmann::json::parse(R"({
        "network": {"edge_lengths": [250, 100, 60, 120, 60], "krauss": {"sigma": 0.3}},
        "feedback": {"K": 20, "n_crit": 10, "q_init": 600},
        "sweep": {"inflow_range": [1000, 1500, 250], "runs": 4, "seed": 9},
        "episode": {"penetration": 0.2, "state_space": "minimal"}
    })"));
    CHECK(cfg.network.edges[0].length == 250.0);
    CHECK(cfg.network.krauss.sigma == 0.3);
    CHECK(cfg.network.krauss.min_gap == 1.0);
    CHECK(cfg.sweep.network.edges[0].length == 250.0);
    CHECK(cfg.sweep.feedback.K == 20.0);
    CHECK(cfg.episode.reference_feedback.n_crit == 10.0);
    CHECK(cfg.sweep.inflows == std::vector<double>{1000, 1250, 1500});
    CHECK(cfg.sweep.runs == 4);
    CHECK(cfg.episode.p_lo == 0.2);
    CHECK(cfg.episode.p_hi == 0.2);
    CHECK(cfg.episode.state_space == StateSpace::minimal);

    CHECK_THROWS(parse_config(nlohmann::json::parse(R"({"netwrk": {}})")));
    CHECK_THROWS(parse_config(nlohmann::json::parse(R"({"network": {"krauss": {"sigmaa": 1}}})")));
    CHECK_THROWS(parse_config(nlohmann::json::parse(R"({"network": {"edge_lengths": [1, 2]}})")));
    CHECK_THROWS(parse_config(nlohmann::json::parse(R"({"feedback": {"q_init": 50}})")));
    CHECK_THROWS(parse_config(nlohmann::json::parse(R"({"sweep": {"inflow_range": [10, 5, 1]}})")));
    CHECK_THROWS(load_config("/nonexistent/config.json"));

    // round trip
    const nlohmann::json j = cfg.sweep;
    SweepConfig back;
    from_json(j.at("network"), back.network);
    CHECK(nlohmann::json(back.network) == j.at("network"));
}
