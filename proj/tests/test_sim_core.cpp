#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "bottleneck/sim_core.hpp"

using namespace bottleneck;

namespace {

KraussParams deterministic() {
    KraussParams p;
    p.sigma = 0.0;
    return p;
}

// Leader brakes at b from leader_speed; ego holds its speed for tau, then
// brakes at b. Returns the smallest bumper gap seen (dt = 0.01 s).
double min_gap_under_braking(double leader_speed, double ego_speed, double gap, const KraussParams& p) {
    const double dt = 0.01;
    double xl = gap, vl = leader_speed, xe = 0.0, ve = ego_speed, t = 0.0, worst = gap;
    while (vl > 0.0 || ve > 0.0) {
        vl = std::max(0.0, vl - p.decel * dt);
        if (t >= p.tau - 1e-12) ve = std::max(0.0, ve - p.decel * dt);
        xl += vl * dt;
        xe += ve * dt;
        t += dt;
        worst = std::min(worst, xl - xe);
    }
    return worst;
}

} // namespace

TEST_CASE("safe speed: stopped leader at zero gap") {
    KraussParams p;
    p.min_gap = 0.0;
    CHECK(krauss_safe_speed(0.0, 0.0, p, 0.0) == 0.0);
    p.min_gap = 2.5;
    CHECK(krauss_safe_speed(0.0, 0.0, p, 10.0) == 0.0);
}

TEST_CASE("safe speed: unconstrained follower exceeds v_max") {
    KraussParams p;
    CHECK(krauss_safe_speed(10.0, 1e6, p, 25.0) >= p.v_max);
}

TEST_CASE("safe speed: negative gap throws") {
    CHECK_THROWS_AS(krauss_safe_speed(5.0, -0.1, KraussParams{}, 5.0), std::invalid_argument);
}

TEST_CASE("safe speed: closed form at leader 10, gap 30") {
    KraussParams p;
    const double v = krauss_safe_speed(10.0, 30.0, p, 10.0);
    const double expect = 10.0 + (27.5 - 10.0) / (20.0 / 9.0 + 1.0);
    CHECK(v == doctest::Approx(expect).epsilon(1e-12));
    CHECK(v > 10.0);
}

TEST_CASE("safe speed: braking oracle at the self-consistent reference speed") {
    // With ego_ref equal to the returned speed the closed form is the exact
    // stopping bound, so the gap bottoms out at min_gap.
    KraussParams p;
    double v = 10.0;
    for (int i = 0; i < 200; ++i) v = krauss_safe_speed(10.0, 30.0, p, v);
    CHECK(v == doctest::Approx(krauss_safe_speed(10.0, 30.0, p, v)).epsilon(1e-12));
    const double worst = min_gap_under_braking(10.0, v, 30.0, p);
    CHECK(worst >= 0.0);
    CHECK(worst == doctest::Approx(p.min_gap).epsilon(0.02));
    // slightly faster than the bound eats into the margin
    CHECK(min_gap_under_braking(10.0, v + 1.0, 30.0, p) < p.min_gap);
}

TEST_CASE("safe speed: braking oracle along the model's own trajectory") {
    // Ego starts at 10 m/s, 30 m behind a leader at 10 m/s that brakes hard.
    // Stepping the model at 0.01 s never produces a negative gap.
    const KraussParams p = deterministic();
    Rng rng(1);
    const double dt = 0.01;
    double xl = 30.0 + p.length, vl = 10.0;
    VehicleState ego;
    ego.speed = 10.0;
    for (int k = 0; k < 3000; ++k) {
        const double gap = xl - p.length - ego.pos;
        REQUIRE(gap >= 0.0);
        ego = step_vehicle(ego, LeaderView{vl, gap}, p, dt, rng);
        vl = std::max(0.0, vl - p.decel * dt);
        xl += vl * dt;
    }
    CHECK(xl - p.length - ego.pos >= 0.0);
    CHECK(ego.speed < 1e-9);
}

TEST_CASE("safe speed: monotone in gap over a grid") {
    KraussParams p;
    for (double vl = 0.0; vl <= 25.0; vl += 2.5)
        for (double ref = 0.0; ref <= 25.0; ref += 2.5) {
            double prev = -1.0;
            for (double g = 0.0; g <= 200.0; g += 0.5) {
                const double v = krauss_safe_speed(vl, g, p, ref);
                CHECK(v >= prev);
                prev = v;
            }
        }
}

TEST_CASE("safe speed: monotone in leader speed where the bound binds") {
    // The closed form is evaluated with a fixed reference speed, so the
    // property is checked where the result does not exceed that reference.
    KraussParams p;
    for (double g = 0.0; g <= 120.0; g += 2.0)
        for (double ref = 0.0; ref <= 25.0; ref += 2.5) {
            double prev = -1.0;
            for (double vl = 0.0; vl <= 25.0; vl += 0.25) {
                const double v = krauss_safe_speed(vl, g, p, ref);
                if (v > ref) break;
                CHECK(v >= prev - 1e-12);
                prev = v;
            }
        }
}

TEST_CASE("step: free flow at v_max") {
    const KraussParams p = deterministic();
    Rng rng(3);
    VehicleState v;
    v.speed = 25.0;
    v.pos = 10.0;
    const auto out = step_vehicle(v, std::nullopt, p, 0.5, rng);
    CHECK(out.speed == 25.0);
    CHECK(out.pos == doctest::Approx(22.5));
    CHECK(out.distance_traveled == doctest::Approx(12.5));
}

TEST_CASE("step: external braking clamps at zero") {
    KraussParams p;
    Rng rng(3);
    VehicleState v;
    v.is_av = true;
    v.edge = 3;
    v.speed = 2.0;
    const auto out = step_vehicle(v, std::nullopt, p, 0.5, rng, Action{-4.5});
    CHECK(out.speed == 0.0);
    CHECK(out.controlled_this_step);
    CHECK(out.stop_timer == 0.5);
}

TEST_CASE("step: external command ignored off the control edge and for humans") {
    const KraussParams p = deterministic();
    Rng rng(3);
    VehicleState v;
    v.is_av = true;
    v.edge = 2;
    v.speed = 10.0;
    auto out = step_vehicle(v, std::nullopt, p, 0.5, rng, Action{-4.5});
    CHECK_FALSE(out.controlled_this_step);
    CHECK(out.speed == doctest::Approx(11.3));

    v.edge = 3;
    v.is_av = false;
    out = step_vehicle(v, std::nullopt, p, 0.5, rng, Action{-4.5});
    CHECK_FALSE(out.controlled_this_step);
}

TEST_CASE("step: safe speed overrides an accelerating command") {
    KraussParams p;
    Rng rng(3);
    VehicleState v;
    v.is_av = true;
    v.edge = 3;
    v.speed = 5.0;
    const LeaderView stopped{0.0, 3.0};
    const auto out = step_vehicle(v, stopped, p, 0.5, rng, Action{2.6});
    CHECK(out.speed <= krauss_safe_speed(0.0, 3.0, p, 5.0));
}

TEST_CASE("step: dawdling only for humans and stays in range") {
    KraussParams p;
    p.sigma = 1.0;
    Rng rng(11);
    VehicleState av;
    av.is_av = true;
    av.speed = 10.0;
    for (int i = 0; i < 50; ++i) CHECK(step_vehicle(av, std::nullopt, p, 0.5, rng).speed == doctest::Approx(11.3));
    VehicleState human;
    human.speed = 0.5;
    for (int i = 0; i < 200; ++i) {
        const auto s = step_vehicle(human, std::nullopt, p, 0.5, rng).speed;
        CHECK(s >= 0.0);
        CHECK(s <= 1.8 + 1e-12);
    }
}

TEST_CASE("step: stop timer") {
    CHECK(next_stop_timer(1.0, 0.1, 0.5) == 1.5);
    CHECK(next_stop_timer(1.0, 0.2, 0.5) == 0.0);
    CHECK(next_stop_timer(0.0, 0.0, 0.5) == 0.5);
}

TEST_CASE("step: platoon behind a stopped leader stays collision free") {
    const KraussParams p = deterministic();
    Rng rng(5);
    const double leader_rear = 400.0;
    std::vector<VehicleState> cars(10);
    for (int i = 0; i < 10; ++i) {
        cars[i].id = i + 1;
        cars[i].pos = 300.0 - 20.0 * i;  // front car first
        cars[i].speed = 15.0;
    }
    for (int k = 0; k < 200; ++k) {
        std::vector<VehicleState> next = cars;
        for (int i = 0; i < 10; ++i) {
            const double ahead_rear = i == 0 ? leader_rear : cars[i - 1].pos - cars[i - 1].length;
            const double ahead_speed = i == 0 ? 0.0 : cars[i - 1].speed;
            const double gap = ahead_rear - cars[i].pos;
            REQUIRE(gap > 0.0);
            next[i] = step_vehicle(cars[i], LeaderView{ahead_speed, gap}, p, 0.5, rng);
        }
        cars = next;
        std::vector<VehicleState> sorted(cars.rbegin(), cars.rend());
        CHECK(detect_collisions(sorted).empty());
        CHECK(leader_rear - cars[0].pos > 0.0);
    }
    for (const auto& c : cars) CHECK(c.speed < 1e-9);
}

TEST_CASE("lane change: blocked lane with empty neighbours") {
    KraussParams p;
    LaneChangeParams lc;
    lc.enabled = true;
    Rng rng(1);
    VehicleState v;
    v.lane = 1;
    v.speed = 5.0;
    LaneNeighborhood n;
    n.current = {true, LeaderView{0.0, 8.0}, std::nullopt};
    n.left = {true, std::nullopt, std::nullopt};
    n.right = {true, std::nullopt, std::nullopt};
    const auto target = maybe_lane_change(v, n, p, lc, rng);
    REQUIRE(target.has_value());
    CHECK(*target == 0);  // symmetric: the right lane wins
}

TEST_CASE("lane change: disabled never changes") {
    KraussParams p;
    LaneChangeParams lc;
    Rng rng(1);
    VehicleState v;
    v.lane = 1;
    LaneNeighborhood n;
    n.current = {true, LeaderView{0.0, 1.0}, std::nullopt};
    n.left = n.right = {true, std::nullopt, std::nullopt};
    CHECK_FALSE(maybe_lane_change(v, n, p, lc, rng).has_value());
}

TEST_CASE("lane change: tie-break and rejections") {
    KraussParams p;
    LaneChangeParams lc;
    lc.enabled = true;
    Rng rng(42);
    VehicleState v;
    v.lane = 2;
    v.speed = 10.0;
    LaneNeighborhood n;
    n.current = {true, LeaderView{10.0, 10.0}, std::nullopt};
    n.right = {true, LeaderView{10.0, 60.0}, LeaderView{10.0, 40.0}};
    n.left = {true, LeaderView{10.0, 60.0}, LeaderView{10.0, 40.0}};
    CHECK(maybe_lane_change(v, n, p, lc, rng) == 1);

    n.left.leader = LeaderView{10.0, 80.0};
    CHECK(maybe_lane_change(v, n, p, lc, rng) == 3);

    // within the hysteresis margin: stay
    n.left = n.right = {true, LeaderView{10.0, 12.0}, std::nullopt};
    CHECK_FALSE(maybe_lane_change(v, n, p, lc, rng).has_value());

    // new follower would have to brake: reject
    n.right = {true, std::nullopt, LeaderView{25.0, 2.0}};
    n.left = {false, std::nullopt, std::nullopt};
    CHECK_FALSE(maybe_lane_change(v, n, p, lc, rng).has_value());
}

TEST_CASE("collisions: fixtures") {
    VehicleState a, b;
    a.id = 1;
    b.id = 2;
    CHECK(detect_collisions(std::vector<VehicleState>{a}).empty());

    a.pos = 10.0;
    b.pos = 15.1;  // rear at 10.1
    CHECK(detect_collisions(std::vector<VehicleState>{a, b}).empty());

    b.pos = 14.0;
    const auto bad = detect_collisions(std::vector<VehicleState>{a, b});
    REQUIRE(bad.size() == 1);
    CHECK(bad[0] == std::pair{1, 2});
}

TEST_CASE("params: validation") {
    KraussParams p;
    CHECK_NOTHROW(p.validate());
    p.sigma = 1.5;
    CHECK_THROWS(p.validate());
    p = {};
    p.tau = 0.0;
    CHECK_THROWS(p.validate());
    p = {};
    p.min_gap = -1.0;
    CHECK_THROWS(p.validate());
}
