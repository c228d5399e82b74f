#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "bottleneck/control.hpp"
#include "bottleneck/env.hpp"
#include "bottleneck/network.hpp"
#include "bottleneck/policy.hpp"

namespace bottleneck {

enum class ControlMode { none, alinea, av_feedback, policy, scripted };

ControlMode parse_mode(const std::string& name);
std::string to_string(ControlMode m);

struct SweepConfig {
    std::vector<double> inflows = default_inflows();
    int runs = 20;
    double window = 500.0;
    double horizon = 1000.0;
    double dt = 0.5;
    ControlMode mode = ControlMode::none;
    std::vector<double> penetrations{0.0};
    std::uint64_t seed = 2024;
    int parallel = 1;
    NetworkSpec network = NetworkSpec::bay_bridge();
    FeedbackParams feedback;
    // policy / scripted modes
    StateSpace state_space = StateSpace::radar_aggregate;
    std::optional<double> radar_cap;
    int action_repeat = 5;
    std::string policy_endpoint;  // host:port of a policy server

    static std::vector<double> default_inflows();  // 400..3500 step 100
    void validate() const;
};

struct RunRecord {
    double inflow = 0.0;
    double penetration = 0.0;
    ControlMode mode = ControlMode::none;
    int run = 0;
    std::uint64_t seed = 0;
    double outflow = 0.0;
    long denied = 0;
};

struct SweepPoint {
    double inflow = 0.0;
    double penetration = 0.0;
    double mean = 0.0;
    double sd = 0.0;
    double denied = 0.0;  // mean per run
};

struct SweepResult {
    std::vector<RunRecord> runs;   // ordered by (penetration, inflow, run)
    std::vector<SweepPoint> points;
};

/// Seed of run `run` at `inflow`; independent of grid layout and scheduling.
std::uint64_t run_seed(std::uint64_t base, double inflow, int run);

/// One run from an empty network: `horizon` seconds at `inflow`, outflow over
/// the final `window`. Throws CollisionError on a collision.
RunRecord simulate_run(const SweepConfig& cfg, double inflow, double penetration, int run);

SweepResult capacity_sweep(const SweepConfig& cfg);

/// Smallest inflow whose mean outflow is below 90% of the inflow.
std::optional<double> congestion_onset(const std::vector<SweepPoint>& points);
double peak_outflow(const std::vector<SweepPoint>& points);

void write_runs_csv(std::ostream& out, const SweepResult& r);
void write_summary_csv(std::ostream& out, const SweepResult& r);
/// Config echo, FNV-1a hash of it, and headline numbers.
void write_manifest(std::ostream& out, const SweepConfig& cfg, const SweepResult& r,
                    const std::string& command);
std::uint64_t config_hash(const SweepConfig& cfg);

struct CalibrationConfig {
    SweepConfig sweep;  // runs, seed, parallel, horizon
    double target_lo = 2300.0;
    double target_hi = 2500.0;
    // candidates; the base spec is tried first
    std::vector<std::vector<double>> edge_lengths{{200, 100, 60, 160, 60}, {200, 100, 100, 120, 60},
                                                  {300, 100, 60, 120, 100}};
    std::vector<double> min_gaps{1.5, 2.0, 2.5, 0.5};
};

struct CalibrationCandidate {
    std::vector<double> lengths;
    double min_gap = 0.0;
    std::optional<double> onset;
    bool accepted = false;
};

struct CalibrationReport {
    NetworkSpec spec;
    bool found = false;
    std::vector<CalibrationCandidate> tried;
    std::string diagnostic;
};

CalibrationReport calibrate_network(const CalibrationConfig& cfg);

/// Reroute is always off here.
SweepResult evaluate_controller(const SweepConfig& cfg);

struct TuneRow {
    FeedbackParams params;
    double mean = 0.0;
    double sd = 0.0;
};

struct TuneResult {
    FeedbackParams best;
    std::vector<TuneRow> rows;
};

/// Grid search for the alinea or av_feedback mode at cfg.inflows.front(),
/// penetration cfg.penetrations.front().
TuneResult tune_feedback(const SweepConfig& cfg, const FeedbackGrid& grid);
void write_tune_csv(std::ostream& out, const TuneResult& r);

struct HysteresisResult {
    double congested_at = -1.0;  // s; negative if congestion never set in
    double outflow_after = 0.0;  // veh/h over the low-inflow hold
    double free_flow = 0.0;      // reference: the low inflow itself
};

/// Inflow `high` until congestion (or `max_wait`), then `low` for `hold` seconds.
HysteresisResult hysteresis_run(const NetworkSpec& spec, std::uint64_t seed, double high = 2500.0,
                                double low = 2300.0, double hold = 300.0, double max_wait = 3000.0);

struct AblationRow {
    std::string variant;
    double penetration = 0.0;
    double mean = 0.0;
    double sd = 0.0;
};

/// Baseline vs lane changing on vs radar capped at 20 m and 140 m.
std::vector<AblationRow> ablation_run(const SweepConfig& cfg);
void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows);

/// Runs `n` tasks on up to `workers` threads; task i writes only slot i.
void parallel_for(int n, int workers, const std::function<void(int)>& task);

} // namespace bottleneck
