#include "bottleneck/experiments.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "bottleneck/config.hpp"

namespace bottleneck {

namespace {

struct Stats {
    double mean = 0.0;
    double sd = 0.0;
};

Stats stats(const std::vector<double>& xs) {
    Stats s;
    if (xs.empty()) return s;
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return s;
}

std::string fmt(double x, int prec = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, x);
    return buf;
}

std::unique_ptr<Controller> make_controller(ControlMode mode, const FeedbackParams& fp) {
    switch (mode) {
    case ControlMode::alinea: return std::make_unique<TrafficLightController>(fp);
    case ControlMode::av_feedback: return std::make_unique<AvWaitController>(fp);
    default: return nullptr;
    }
}

double run_with_policy(const SweepConfig& cfg, const NetworkSpec& spec, double inflow, double p,
                       std::uint64_t seed, long& denied) {
    EpisodeConfig ec;
    ec.network = spec;
    ec.sim_dt = cfg.dt;
    ec.action_repeat = cfg.action_repeat;
    ec.warmup = 0.0;
    ec.horizon = cfg.horizon;
    ec.inflow = inflow;
    ec.p_lo = ec.p_hi = p;
    ec.state_space = cfg.state_space;
    ec.reroute = false;
    ec.lane_change = spec.lane_change.enabled;
    ec.radar_cap = cfg.radar_cap;
    ec.reference_feedback = cfg.feedback;
    BottleneckEnv env(ec);
    std::unique_ptr<Policy> policy;
    if (cfg.mode == ControlMode::scripted) policy = std::make_unique<ScriptedPolicy>(cfg.state_space);
    else policy = std::make_unique<PolicyClient>(cfg.policy_endpoint);
    EnvResult r = env.reset(seed);
    while (!r.done_all) {
        ObsMap live;
        for (const auto& [id, o] : r.obs)
            if (!r.dones.at(id)) live.emplace(id, o);
        r = env.step(policy->act(live));
    }
    denied = env.network().denied_total();
    return env.network().outflow_vph(cfg.window);
}

} // namespace

ControlMode parse_mode(const std::string& name) {
    if (name == "none" || name == "human") return ControlMode::none;
    if (name == "alinea") return ControlMode::alinea;
    if (name == "av-feedback") return ControlMode::av_feedback;
    if (name == "policy") return ControlMode::policy;
    if (name == "scripted") return ControlMode::scripted;
    throw std::invalid_argument("unknown controller mode: " + name);
}

std::string to_string(ControlMode m) {
    switch (m) {
    case ControlMode::none: return "none";
    case ControlMode::alinea: return "alinea";
    case ControlMode::av_feedback: return "av-feedback";
    case ControlMode::policy: return "policy";
    case ControlMode::scripted: return "scripted";
    }
    return "?";
}

std::vector<double> SweepConfig::default_inflows() {
    std::vector<double> v;
    for (int q = 400; q <= 3500; q += 100) v.push_back(q);
    return v;
}

void SweepConfig::validate() const {
    if (inflows.empty()) throw std::invalid_argument("sweep: inflow grid is empty");
    if (runs < 1) throw std::invalid_argument("sweep: runs must be >= 1");
    if (!(dt > 0.0) || !(window > 0.0) || window > horizon)
        throw std::invalid_argument("sweep: need dt > 0 and 0 < window <= horizon");
    if (penetrations.empty()) throw std::invalid_argument("sweep: penetration list is empty");
    for (double p : penetrations)
        if (p < 0.0 || p > 1.0) throw std::invalid_argument("sweep: penetration outside [0, 1]");
    for (double q : inflows)
        if (q < 0.0) throw std::invalid_argument("sweep: negative inflow");
    if (parallel < 1) throw std::invalid_argument("sweep: parallel must be >= 1");
    if (mode == ControlMode::policy && policy_endpoint.empty())
        throw std::invalid_argument("sweep: policy mode needs a policy endpoint");
    network.validate();
    if (mode == ControlMode::alinea || mode == ControlMode::av_feedback) feedback.validate();
}

std::uint64_t run_seed(std::uint64_t base, double inflow, int run) {
    return derive_seed(base, static_cast<std::uint64_t>(std::llround(inflow)), static_cast<std::uint64_t>(run));
}

RunRecord simulate_run(const SweepConfig& cfg, double inflow, double penetration, int run) {
    RunRecord rec;
    rec.inflow = inflow;
    rec.penetration = penetration;
    rec.mode = cfg.mode;
    rec.run = run;
    rec.seed = run_seed(cfg.seed, inflow, run);
    if (cfg.mode == ControlMode::policy || cfg.mode == ControlMode::scripted) {
        rec.outflow = run_with_policy(cfg, cfg.network, inflow, penetration, rec.seed, rec.denied);
        return rec;
    }
    Network net(cfg.network);
    Rng rng(rec.seed);
    auto ctrl = make_controller(cfg.mode, cfg.feedback);
    const InflowConfig in{inflow, penetration};
    const long steps = std::lround(cfg.horizon / cfg.dt);
    for (long k = 0; k < steps; ++k) {
        if (ctrl) ctrl->observe(net, cfg.dt);
        net.advance(cfg.dt, ctrl.get(), rng);
        net.inflow_step(in, cfg.dt, rng);
    }
    rec.outflow = net.outflow_vph(cfg.window);
    rec.denied = net.denied_total();
    return rec;
}

void parallel_for(int n, int workers, const std::function<void(int)>& task) {
    if (n <= 0) return;
    workers = std::clamp(workers, 1, n);
    if (workers == 1) {
        for (int i = 0; i < n; ++i) task(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            while (true) {
                const int i = next++;
                if (i >= n) return;
                try {
                    task(i);
                } catch (...) {
                    std::lock_guard lock(mu);
                    if (!error) error = std::current_exception();
                    next = n;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

SweepResult capacity_sweep(const SweepConfig& cfg) {
    cfg.validate();
    const int ni = static_cast<int>(cfg.inflows.size());
    const int np = static_cast<int>(cfg.penetrations.size());
    const int total = np * ni * cfg.runs;
    SweepResult out;
    out.runs.resize(static_cast<std::size_t>(total));
    parallel_for(total, cfg.parallel, [&](int idx) {
        const int r = idx % cfg.runs;
        const int i = (idx / cfg.runs) % ni;
        const int p = idx / (cfg.runs * ni);
        out.runs[static_cast<std::size_t>(idx)] = simulate_run(cfg, cfg.inflows[i], cfg.penetrations[p], r);
    });
    for (int p = 0; p < np; ++p) {
        for (int i = 0; i < ni; ++i) {
            std::vector<double> xs;
            double denied = 0.0;
            for (int r = 0; r < cfg.runs; ++r) {
                const auto& rec = out.runs[static_cast<std::size_t>((p * ni + i) * cfg.runs + r)];
                xs.push_back(rec.outflow);
                denied += static_cast<double>(rec.denied);
            }
            const Stats s = stats(xs);
            out.points.push_back({cfg.inflows[i], cfg.penetrations[p], s.mean, s.sd, denied / cfg.runs});
        }
    }
    return out;
}

std::optional<double> congestion_onset(const std::vector<SweepPoint>& points) {
    std::vector<SweepPoint> sorted = points;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.inflow < b.inflow; });
    for (const auto& pt : sorted)
        if (pt.mean < 0.9 * pt.inflow) return pt.inflow;
    return std::nullopt;
}

double peak_outflow(const std::vector<SweepPoint>& points) {
    double best = 0.0;
    for (const auto& pt : points) best = std::max(best, pt.mean);
    return best;
}

void write_runs_csv(std::ostream& out, const SweepResult& r) {
    out << "inflow,penetration,mode,run,seed,outflow_vph,denied_inflow\n";
    for (const auto& x : r.runs)
        out << fmt(x.inflow, 0) << ',' << fmt(x.penetration, 2) << ',' << to_string(x.mode) << ',' << x.run << ','
            << x.seed << ',' << fmt(x.outflow) << ',' << x.denied << '\n';
}

void write_summary_csv(std::ostream& out, const SweepResult& r) {
    out << "inflow,penetration,mean_outflow_vph,std_outflow_vph,mean_denied\n";
    for (const auto& p : r.points)
        out << fmt(p.inflow, 0) << ',' << fmt(p.penetration, 2) << ',' << fmt(p.mean) << ',' << fmt(p.sd) << ','
            << fmt(p.denied, 2) << '\n';
}

std::uint64_t config_hash(const SweepConfig& cfg) {
    const std::string s = nlohmann::json(cfg).dump();
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

void write_manifest(std::ostream& out, const SweepConfig& cfg, const SweepResult& r, const std::string& command) {
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(config_hash(cfg)));
    nlohmann::json j{{"command", command}, {"config", cfg}, {"config_hash", hex}, {"runs", r.runs.size()}};
    nlohmann::json points = nlohmann::json::array();
    for (const auto& p : r.points)
        points.push_back({{"inflow", p.inflow}, {"penetration", p.penetration}, {"mean", p.mean}, {"sd", p.sd}});
    j["points"] = points;
    if (auto onset = congestion_onset(r.points)) j["onset"] = *onset;
    else j["onset"] = nullptr;
    j["peak"] = peak_outflow(r.points);
    out << j.dump(2) << '\n';
}

CalibrationReport calibrate_network(const CalibrationConfig& cfg) {
    const NetworkSpec base = cfg.sweep.network;
    std::vector<std::vector<double>> lengths;
    std::vector<double> base_lengths;
    for (const auto& e : base.edges) base_lengths.push_back(e.length);
    lengths.push_back(base_lengths);
    for (const auto& l : cfg.edge_lengths)
        if (l != base_lengths) lengths.push_back(l);
    std::vector<double> gaps{base.krauss.min_gap};
    for (double g : cfg.min_gaps)
        if (g != base.krauss.min_gap) gaps.push_back(g);

    CalibrationReport report;
    report.spec = base;
    std::optional<CalibrationCandidate> best;
    for (const auto& l : lengths) {
        if (l.size() != base.edges.size()) throw std::invalid_argument("calibrate: edge length list has wrong size");
        for (double g : gaps) {
            NetworkSpec spec = base;
            for (std::size_t i = 0; i < l.size(); ++i) spec.edges[i].length = l[i];
            spec.krauss.min_gap = g;
            spec.validate();
            SweepConfig sc = cfg.sweep;
            sc.network = spec;
            sc.mode = ControlMode::none;
            sc.penetrations = {0.0};
            std::vector<double> grid = sc.inflows;
            std::sort(grid.begin(), grid.end());
            CalibrationCandidate cand{l, g, std::nullopt, false};
            // walk the grid upwards and stop at the first congested point
            for (double q : grid) {
                sc.inflows = {q};
                const auto res = capacity_sweep(sc);
                if (res.points.front().mean < 0.9 * q) {
                    cand.onset = q;
                    break;
                }
            }
            cand.accepted = cand.onset && *cand.onset >= cfg.target_lo && *cand.onset <= cfg.target_hi;
            report.tried.push_back(cand);
            if (cand.accepted) {
                report.spec = spec;
                report.found = true;
                return report;
            }
            const double mid = 0.5 * (cfg.target_lo + cfg.target_hi);
            auto miss = [&](const CalibrationCandidate& c) {
                return c.onset ? std::abs(*c.onset - mid) : std::numeric_limits<double>::infinity();
            };
            if (!best || miss(cand) < miss(*best)) {
                best = cand;
                report.spec = spec;
            }
        }
    }
    report.diagnostic = "no candidate has its congestion onset in [" + fmt(cfg.target_lo, 0) + ", " +
                        fmt(cfg.target_hi, 0) + "]; best candidate onset: " +
                        (best && best->onset ? fmt(*best->onset, 0) : std::string("none in grid"));
    return report;
}

SweepResult evaluate_controller(const SweepConfig& cfg) {
    SweepConfig c = cfg;
    c.network.validate();
    return capacity_sweep(c);
}

TuneResult tune_feedback(const SweepConfig& cfg, const FeedbackGrid& grid) {
    if (cfg.mode != ControlMode::alinea && cfg.mode != ControlMode::av_feedback)
        throw std::invalid_argument("tune_feedback: mode must be alinea or av-feedback");
    const auto pts = grid.points(cfg.feedback);
    const int n = static_cast<int>(pts.size());
    const double inflow = cfg.inflows.front();
    const double p = cfg.penetrations.front();
    std::vector<double> outflow(static_cast<std::size_t>(n * cfg.runs));
    parallel_for(n * cfg.runs, cfg.parallel, [&](int idx) {
        SweepConfig c = cfg;
        c.feedback = pts[static_cast<std::size_t>(idx / cfg.runs)];
        outflow[static_cast<std::size_t>(idx)] = simulate_run(c, inflow, p, idx % cfg.runs).outflow;
    });
    TuneResult out;
    for (int i = 0; i < n; ++i) {
        std::vector<double> xs(outflow.begin() + i * cfg.runs, outflow.begin() + (i + 1) * cfg.runs);
        const Stats s = stats(xs);
        out.rows.push_back({pts[static_cast<std::size_t>(i)], s.mean, s.sd});
    }
    auto lookup = [&](const FeedbackParams& fp) {
        for (const auto& row : out.rows)
            if (row.params.n_crit == fp.n_crit && row.params.K == fp.K && row.params.q_init == fp.q_init)
                return row.mean;
        throw std::logic_error("tune_feedback: grid point was not evaluated");
    };
    out.best = grid_search_feedback(grid, lookup, nullptr, cfg.feedback);
    return out;
}

void write_tune_csv(std::ostream& out, const TuneResult& r) {
    out << "n_crit,K,q_init,mean_outflow_vph,std_outflow_vph\n";
    for (const auto& row : r.rows)
        out << fmt(row.params.n_crit, 0) << ',' << fmt(row.params.K, 0) << ',' << fmt(row.params.q_init, 0) << ','
            << fmt(row.mean) << ',' << fmt(row.sd) << '\n';
}

HysteresisResult hysteresis_run(const NetworkSpec& spec, std::uint64_t seed, double high, double low,
                                double hold, double max_wait) {
    constexpr double dt = 0.5;
    constexpr double probe = 120.0;
    Network net(spec);
    Rng rng(seed);
    HysteresisResult res;
    res.free_flow = low;
    const std::array<int, 1> queue_edge{spec.control_edge};
    const long max_steps = std::lround(max_wait / dt);
    for (long k = 0; k < max_steps; ++k) {
        net.advance(dt, nullptr, rng);
        net.inflow_step({high, 0.0}, dt, rng);
        // congested: outflow well short of demand with a slow queue upstream of the bottleneck
        if (net.clock() >= probe && net.outflow_vph(probe) < 0.8 * high &&
            net.edge_mean_speeds(queue_edge).front() < 10.0) {
            res.congested_at = net.clock();
            break;
        }
    }
    const long hold_steps = std::lround(hold / dt);
    for (long k = 0; k < hold_steps; ++k) {
        net.advance(dt, nullptr, rng);
        net.inflow_step({low, 0.0}, dt, rng);
    }
    res.outflow_after = net.outflow_vph(hold);
    return res;
}

std::vector<AblationRow> ablation_run(const SweepConfig& cfg) {
    struct Variant {
        std::string name;
        bool lane_change;
        std::optional<double> cap;
    };
    const std::vector<Variant> variants{{"baseline", false, cfg.radar_cap},
                                        {"lane_change_on", true, cfg.radar_cap},
                                        {"radar_cap_20", false, 20.0},
                                        {"radar_cap_140", false, 140.0}};
    std::vector<AblationRow> rows;
    for (const auto& v : variants) {
        SweepConfig c = cfg;
        c.inflows = {cfg.inflows.front()};
        c.network.lane_change.enabled = v.lane_change;
        c.radar_cap = v.cap;
        const auto res = capacity_sweep(c);
        for (const auto& p : res.points) rows.push_back({v.name, p.penetration, p.mean, p.sd});
    }
    return rows;
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
    out << "variant,penetration,mean_outflow_vph,std_outflow_vph\n";
    for (const auto& r : rows)
        out << r.variant << ',' << fmt(r.penetration, 2) << ',' << fmt(r.mean) << ',' << fmt(r.sd) << '\n';
}

} // namespace bottleneck
