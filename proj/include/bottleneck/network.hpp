#pragma once

#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bottleneck/random.hpp"
#include "bottleneck/sim_core.hpp"

namespace bottleneck {

struct EdgeSpec {
    int id = 1;
    double length = 100.0;
    int lanes = 1;
};

/// Road layout. `merge_maps[i]` maps each lane of edges[i] onto a lane of
/// edges[i + 1]; two upstream lanes sharing a downstream lane form a zipper.
struct NetworkSpec {
    std::vector<EdgeSpec> edges;
    std::vector<std::vector<int>> merge_maps;
    double merge_zone = 100.0;  // distance before a merge point where zipper ordering applies
    // The projected gap to the zipper predecessor is widened by this fraction of the
    // remaining distance to the merge point, so drivers close up gradually.
    double merge_relax = 0.8;
    double entry_speed = 25.0;
    double lookahead = 250.0;   // car-following leader search horizon
    int control_edge = 3;       // where AV commands and metering stop lines act
    int bottleneck_edge = 4;
    KraussParams krauss;
    LaneChangeParams lane_change;

    /// The 4 -> 2 -> 1 bottleneck with zipper pairs (0,1)->0 and (2,3)->1, calibrated
    /// (min_gap 1.0) so uncontrolled congestion sets in between 2300 and 2500 veh/h.
    static NetworkSpec bay_bridge();
    /// One straight edge, identity lanes.
    static NetworkSpec single_edge(double length, int lanes);

    void validate() const;
    double total_length() const;
    int max_lanes() const;
    const EdgeSpec& edge(int id) const;
};

struct InflowConfig {
    double rate_vph = 0.0;
    double penetration = 0.0;

    void validate() const;
};

struct InflowReport {
    std::vector<int> spawned_ids;
    int denied = 0;
};

/// Per-vehicle instruction from a controller for the coming step.
struct VehicleCommand {
    std::optional<Action> accel;   // honoured for AVs on the control edge only
    // Virtual stopped leader at the end of the control edge, seen from upstream
    // within the lookahead.
    bool stop_at_line = false;
    bool mandatory_stop = false;   // otherwise drivers who cannot stop comfortably proceed
};

class CommandSource {
public:
    virtual ~CommandSource() = default;
    virtual VehicleCommand command(const VehicleState& v) const = 0;
};

struct StepReport {
    int exited = 0;
    std::vector<int> exited_ids;
    std::vector<int> rerouted_ids;
    int lane_changes = 0;
};

class CollisionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Neighbor {
    int id = 0;
    double gap = 0.0;   // bumper-to-bumper, measured along the lane chain
    double speed = 0.0;
    bool is_av = false;
};

class Network {
public:
    explicit Network(NetworkSpec spec);

    const NetworkSpec& spec() const { return spec_; }
    double clock() const { return clock_; }
    const std::vector<VehicleState>& vehicles() const { return vehicles_; }
    const VehicleState* find(int id) const;

    /// Places a vehicle directly (fixtures, tests). Assigns a fresh id when v.id == 0.
    int add_vehicle(VehicleState v);

    void set_reroute(bool on) { reroute_ = on; }
    bool reroute() const { return reroute_; }
    /// When off, inflow only re-inserts rerouted vehicles.
    void set_fresh_spawns(bool on) { fresh_spawns_ = on; }

    InflowReport inflow_step(const InflowConfig& cfg, double dt, Rng& rng);
    StepReport advance(double dt, const CommandSource* commands, Rng& rng);

    int count_bottleneck() const;
    int count_on_edge(int edge) const;
    std::vector<double> edge_mean_speeds(std::span<const int> edge_ids) const;
    double outflow_vph(double window) const;

    /// Distance from a vehicle's front bumper to the end of the network.
    double distance_to_end(const VehicleState& v) const;
    double distance_to_end(int edge, double pos) const;
    /// Signed distance from the front bumper to the end of the control edge
    /// (negative once past it).
    double distance_to_line(const VehicleState& v) const;
    /// Lane the vehicle will occupy on `edge` if it keeps to its lane chain;
    /// -1 if `edge` lies behind it.
    int lane_on_edge(const VehicleState& v, int edge) const;

    /// Nearest vehicle ahead of / behind a point in the given lane, following
    /// the lane chain across edge boundaries, within `range` meters.
    std::optional<Neighbor> leader_in_lane(int edge, int lane, double pos, double range,
                                           int exclude_id = -1) const;
    std::optional<Neighbor> follower_in_lane(int edge, int lane, double pos, double length,
                                             double range, int exclude_id = -1) const;

    std::vector<std::pair<int, int>> collisions(double tolerance = 1e-6) const;

    const std::vector<double>& exit_times() const { return exit_times_; }
    const std::vector<double>& entry_times() const { return entry_times_; }
    long spawned_total() const { return spawned_; }
    long exited_total() const { return exited_; }
    long denied_total() const { return denied_; }
    /// Vehicles on the road plus rerouted vehicles waiting to re-enter.
    long present_total() const { return static_cast<long>(vehicles_.size() + recycle_.size()); }
    std::size_t recycle_queue() const { return recycle_.size(); }
    const std::deque<VehicleState>& recycled() const { return recycle_; }

private:
    struct MergeInfo {
        int boundary = -1;  // index of the upstream edge whose end is the merge point
        int lane_at_boundary = 0;
        int down_lane = 0;
    };

    int edge_index(int edge_id) const;
    void rebuild_lanes();
    std::optional<int> chain_leader(std::size_t idx) const;
    int merge_group(const MergeInfo& m) const { return m.boundary * spec_.max_lanes() + m.down_lane; }
    void apply_lane_changes(Rng& rng, StepReport& report);
    LaneNeighbors lane_neighbors(const VehicleState& v, int lane) const;

    NetworkSpec spec_;
    std::vector<double> tail_;  // distance from the end of each edge to the network end
    std::vector<std::vector<MergeInfo>> merge_info_;
    std::vector<VehicleState> vehicles_;
    std::vector<std::vector<std::vector<int>>> lanes_;  // [edge][lane] -> indices by ascending pos
    std::unordered_map<int, std::size_t> by_id_;
    std::deque<VehicleState> recycle_;
    std::vector<double> exit_times_;
    std::vector<double> entry_times_;
    double clock_ = 0.0;
    int next_id_ = 1;
    long spawned_ = 0;
    long exited_ = 0;
    long denied_ = 0;
    bool reroute_ = false;
    bool fresh_spawns_ = true;
};

/// Same as Network(spec); kept as a free function for symmetry with the other builders.
Network build_network(const NetworkSpec& spec);

} // namespace bottleneck
