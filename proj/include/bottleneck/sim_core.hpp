#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "bottleneck/random.hpp"

namespace bottleneck {

/// Speed below which a vehicle counts as stopped (m/s).
inline constexpr double kStopSpeed = 0.2;

struct KraussParams {
    double accel = 2.6;   // m/s^2
    double decel = 4.5;   // m/s^2
    double tau = 1.0;     // s
    double min_gap = 2.5; // m
    double sigma = 0.5;   // driver imperfection, humans only
    double v_max = 25.0;  // m/s
    double length = 5.0;  // m

    void validate() const;
};

struct VehicleState {
    int id = 0;
    int edge = 1;                  // 1-based edge id
    int lane = 0;                  // 0 = rightmost
    double pos = 0.0;              // front bumper, meters from edge start
    double speed = 0.0;
    double length = 5.0;
    bool is_av = false;
    double stop_timer = 0.0;       // seconds continuously below kStopSpeed
    double distance_traveled = 0.0;
    double entry_time = 0.0;
    bool controlled_this_step = false;
};

/// Longitudinal acceleration command (m/s^2).
struct Action {
    double accel = 0.0;
};

/// What a vehicle sees of the vehicle it follows: bumper-to-bumper gap and speed.
struct LeaderView {
    double speed = 0.0;
    double gap = 0.0;
};

struct LaneChangeParams {
    bool enabled = false;
    double hysteresis = 5.0;   // required gap advantage over the current lane (m)
    double lookahead = 100.0;  // gaps are capped here; an empty lane reads as this value
    double probability = 1.0;  // chance that a beneficial change is executed in a step
};

/// Largest speed from which the ego can still stop behind a leader braking at
/// `decel`, using the Krauss closed form with `ego_ref` as the ego's current
/// speed. `min_gap` is subtracted from `gap` first. Never negative.
/// Throws std::invalid_argument on a negative gap.
double krauss_safe_speed(double leader_speed, double gap, const KraussParams& params,
                         double ego_ref);

/// Krauss speed choice for one step. `safe_speed` is the minimum over all
/// leader constraints (pass +inf for none). Humans dawdle; AVs do not.
/// With an external acceleration the command replaces the free-road
/// acceleration but is still capped by `safe_speed`.
double choose_speed(const VehicleState& v, double safe_speed, const KraussParams& params,
                    double dt, Rng& rng, std::optional<Action> external_accel);

/// Updates the stop timer for a step that ends at `new_speed`.
double next_stop_timer(double stop_timer, double new_speed, double dt);

/// One isolated Krauss step (no edge crossing). External acceleration is only
/// honoured for AVs on `controlled_edge`.
VehicleState step_vehicle(const VehicleState& v, std::optional<LeaderView> leader,
                          const KraussParams& params, double dt, Rng& rng,
                          std::optional<Action> external_accel = std::nullopt,
                          int controlled_edge = 3);

/// Surroundings of a vehicle in one lane: nearest leader and follower.
struct LaneNeighbors {
    bool exists = false;
    std::optional<LeaderView> leader;   // gap from ego front to leader rear
    std::optional<LeaderView> follower; // gap from follower front to ego rear
};

struct LaneNeighborhood {
    LaneNeighbors right;   // lane - 1
    LaneNeighbors current;
    LaneNeighbors left;    // lane + 1
};

/// Gap-acceptance lane change. Returns the target lane, preferring the right
/// lane when both sides are equally attractive.
std::optional<int> maybe_lane_change(const VehicleState& v, const LaneNeighborhood& neighbors,
                                     const KraussParams& params, const LaneChangeParams& lc,
                                     Rng& rng);

/// Every adjacent pair (follower id, leader id) in a lane sorted by ascending
/// position whose bumper gap is below -tolerance.
std::vector<std::pair<int, int>> detect_collisions(std::span<const VehicleState> lane_sorted,
                                                   double tolerance = 0.0);

} // namespace bottleneck
