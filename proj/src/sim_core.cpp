#include "bottleneck/sim_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace bottleneck {

void KraussParams::validate() const {
    if (!(accel > 0.0) || !(decel > 0.0) || !(tau > 0.0))
        throw std::invalid_argument("krauss: accel, decel and tau must be positive");
    if (min_gap < 0.0) throw std::invalid_argument("krauss: min_gap must be non-negative");
    if (sigma < 0.0 || sigma > 1.0) throw std::invalid_argument("krauss: sigma must lie in [0, 1]");
    if (!(v_max > 0.0) || !(length > 0.0))
        throw std::invalid_argument("krauss: v_max and length must be positive");
}

double krauss_safe_speed(double leader_speed, double gap, const KraussParams& params,
                         double ego_ref) {
    if (gap < 0.0) throw std::invalid_argument("krauss_safe_speed: negative gap");
    const double g = gap - params.min_gap;
    const double denom = (leader_speed + ego_ref) / (2.0 * params.decel) + params.tau;
    const double v = leader_speed + (g - leader_speed * params.tau) / denom;
    return std::max(0.0, v);
}

double choose_speed(const VehicleState& v, double safe_speed, const KraussParams& params,
                    double dt, Rng& rng, std::optional<Action> external_accel) {
    if (external_accel) {
        const double commanded = std::clamp(v.speed + external_accel->accel * dt, 0.0, params.v_max);
        return std::min(commanded, safe_speed);
    }
    const double desired = std::min({v.speed + params.accel * dt, safe_speed, params.v_max});
    if (v.is_av) return std::max(0.0, desired);
    const double dawdle = params.sigma * params.accel * dt * rng.uniform();
    return std::max(0.0, desired - dawdle);
}

double next_stop_timer(double stop_timer, double new_speed, double dt) {
    return new_speed < kStopSpeed ? stop_timer + dt : 0.0;
}

VehicleState step_vehicle(const VehicleState& v, std::optional<LeaderView> leader,
                          const KraussParams& params, double dt, Rng& rng,
                          std::optional<Action> external_accel, int controlled_edge) {
    double safe = std::numeric_limits<double>::infinity();
    if (leader) safe = krauss_safe_speed(leader->speed, leader->gap, params, v.speed);

    const bool controlled = external_accel && v.is_av && v.edge == controlled_edge;
    const double speed = choose_speed(v, safe, params, dt, rng,
                                      controlled ? external_accel : std::nullopt);

    VehicleState out = v;
    out.speed = speed;
    out.pos = v.pos + speed * dt;
    out.distance_traveled += speed * dt;
    out.stop_timer = next_stop_timer(v.stop_timer, speed, dt);
    out.controlled_this_step = controlled;
    return out;
}

namespace {

double capped_gap(const std::optional<LeaderView>& leader, double lookahead) {
    return leader ? std::min(leader->gap, lookahead) : lookahead;
}

bool acceptable(const VehicleState& v, const LaneNeighbors& target, const KraussParams& params,
                const LaneChangeParams& lc, double current_gap) {
    if (!target.exists) return false;
    if (capped_gap(target.leader, lc.lookahead) < current_gap + lc.hysteresis) return false;
    if (target.leader) {
        if (target.leader->gap < 0.0) return false;
        if (v.speed > krauss_safe_speed(target.leader->speed, target.leader->gap, params, v.speed))
            return false;
    }
    if (target.follower) {
        if (target.follower->gap < 0.0) return false;
        // the new follower must be able to keep its current speed behind us
        if (target.follower->speed >
            krauss_safe_speed(v.speed, target.follower->gap, params, target.follower->speed))
            return false;
    }
    return true;
}

} // namespace

std::optional<int> maybe_lane_change(const VehicleState& v, const LaneNeighborhood& neighbors,
                                     const KraussParams& params, const LaneChangeParams& lc,
                                     Rng& rng) {
    if (!lc.enabled) return std::nullopt;
    const double current = capped_gap(neighbors.current.leader, lc.lookahead);
    const bool right_ok = acceptable(v, neighbors.right, params, lc, current);
    const bool left_ok = acceptable(v, neighbors.left, params, lc, current);
    if (!right_ok && !left_ok) return std::nullopt;
    if (lc.probability < 1.0 && !rng.bernoulli(lc.probability)) return std::nullopt;

    if (right_ok && left_ok) {
        const double gr = capped_gap(neighbors.right.leader, lc.lookahead);
        const double gl = capped_gap(neighbors.left.leader, lc.lookahead);
        return gl > gr ? v.lane + 1 : v.lane - 1;
    }
    return right_ok ? v.lane - 1 : v.lane + 1;
}

std::vector<std::pair<int, int>> detect_collisions(std::span<const VehicleState> lane_sorted,
                                                   double tolerance) {
    std::vector<std::pair<int, int>> out;
    for (std::size_t i = 1; i < lane_sorted.size(); ++i) {
        const auto& behind = lane_sorted[i - 1];
        const auto& ahead = lane_sorted[i];
        const double gap = ahead.pos - ahead.length - behind.pos;
        if (gap < -tolerance) out.emplace_back(behind.id, ahead.id);
    }
    return out;
}

} // namespace bottleneck
