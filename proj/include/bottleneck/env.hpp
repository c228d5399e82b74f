#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "bottleneck/control.hpp"
#include "bottleneck/network.hpp"

namespace bottleneck {

enum class StateSpace { minimal, minimal_aggregate, radar_aggregate, radar };

StateSpace parse_state_space(const std::string& name);
std::string to_string(StateSpace s);

struct EpisodeConfig {
    double sim_dt = 0.5;
    int action_repeat = 5;
    double warmup = 300.0;
    double horizon = 1000.0;
    double inflow = 2400.0;
    // Penetration is drawn uniformly from [p_lo, p_hi] once per reset.
    double p_lo = 0.1;
    double p_hi = 0.1;
    StateSpace state_space = StateSpace::radar_aggregate;
    bool reroute = true;
    bool lane_change = false;
    std::optional<double> radar_cap;
    double reward_norm = 50.0;
    NetworkSpec network = NetworkSpec::bay_bridge();
    // Feeds the wait-time entry of the minimal space.
    FeedbackParams reference_feedback;

    void validate() const;
};

/// Entries per observation vector.
///   minimal            7  [abs pos, count, stop timer, speed, leader speed, headway, c_k]
///   minimal+aggregate 12  minimal, then [v3, v4, v5, count, time]
///   radar+aggregate   35  ego, radar, [v3, v4, v5, count], time
///   radar             31  ego, radar, time
/// ego   = [speed, lane, edge, pos on edge, abs pos, stop timer]
/// radar = per lane 0..3, ahead then behind: [speed, headway, is_av]
/// Speeds are divided by v_max, distances by the network length, times by the
/// horizon and counts by 50.
std::size_t observation_size(StateSpace s, int max_lanes = 4);

/// Radar speed substituted for vehicles beyond the range cap (m/s).
inline constexpr double kRadarDefaultSpeed = 5.0;
inline constexpr double kCountScale = 50.0;

/// 8 * clip(raw, -4.5/8, 2.6/8).
double scale_action(double raw);

struct EnvInfo {
    double time = 0.0;
    int exited = 0;
    int bottleneck_count = 0;
    double outflow = 0.0;  // veh/h over the elapsed rollout
    int agents = 0;  // AVs on the road plus any waiting to re-enter
    double penetration = 0.0;
    int ignored_actions = 0;
};

struct EnvResult {
    std::map<int, std::vector<double>> obs;
    double reward = 0.0;
    std::map<int, bool> dones;
    bool done_all = false;
    EnvInfo info;
};

class TrajectoryLogger {
public:
    explicit TrajectoryLogger(std::ostream& out) : out_(out) {}
    void log(const Network& net, const EnvResult& r, const std::map<int, double>& actions);

private:
    std::ostream& out_;
};

class BottleneckEnv {
public:
    explicit BottleneckEnv(EpisodeConfig cfg);

    EnvResult reset(std::uint64_t seed);
    EnvResult step(const std::map<int, double>& actions);

    const EpisodeConfig& config() const { return cfg_; }
    const Network& network() const { return *net_; }
    double penetration() const { return p_; }
    bool finished() const;
    /// Agents currently on the road, ascending id.
    std::vector<int> agents() const;
    std::vector<double> observe(int id) const;
    /// Current minimal-space wait time c_k (s).
    double reference_wait() const;

    void set_logger(TrajectoryLogger* log) { log_ = log; }
    /// Places a vehicle directly (fixtures). Returns its id.
    int add_vehicle(const VehicleState& v) { return net_->add_vehicle(v); }

private:
    StepReport sim_step(const CommandSource* cmds);
    EnvResult collect(double reward, const std::vector<int>& exited_agents, int exited);

    EpisodeConfig cfg_;
    std::unique_ptr<Network> net_;
    Rng rng_{0};
    FeedbackState ref_;
    double p_ = 0.0;
    double t0_ = 0.0;
    long exited_since_reset_ = 0;
    int ignored_ = 0;
    std::map<int, std::vector<double>> last_obs_;
    TrajectoryLogger* log_ = nullptr;
};

} // namespace bottleneck
