#include "bottleneck/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace bottleneck {

namespace {

constexpr double kEps = 1e-9;
// keeps zipper order strict when a follower is held level with its predecessor
constexpr double kOrderEps = 1e-3;
constexpr double kInf = std::numeric_limits<double>::infinity();

} // namespace

NetworkSpec NetworkSpec::bay_bridge() {
    NetworkSpec s;
    s.edges = {{1, 200.0, 4}, {2, 100.0, 4}, {3, 60.0, 4}, {4, 120.0, 2}, {5, 60.0, 1}};
    s.merge_maps = {{0, 1, 2, 3}, {0, 1, 2, 3}, {0, 0, 1, 1}, {0, 0}};
    s.krauss.min_gap = 1.0;
    return s;
}

NetworkSpec NetworkSpec::single_edge(double length, int lanes) {
    NetworkSpec s;
    s.edges = {{1, length, lanes}};
    s.control_edge = 1;
    s.bottleneck_edge = 1;
    return s;
}

void NetworkSpec::validate() const {
    if (edges.empty()) throw std::invalid_argument("network: no edges");
    if (merge_maps.size() + 1 != edges.size())
        throw std::invalid_argument("network: need one merge map per edge boundary");
    std::set<int> ids;
    for (const auto& e : edges) {
        if (!(e.length > 0.0)) throw std::invalid_argument("network: edge length must be positive");
        if (e.lanes < 1) throw std::invalid_argument("network: edge needs at least one lane");
        if (!ids.insert(e.id).second) throw std::invalid_argument("network: duplicate edge id");
    }
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        const int up = edges[i].lanes;
        const int down = edges[i + 1].lanes;
        if (down > up) throw std::invalid_argument("network: lane counts must be non-increasing");
        const auto& m = merge_maps[i];
        if (static_cast<int>(m.size()) != up)
            throw std::invalid_argument("network: merge map must cover every upstream lane");
        std::vector<bool> hit(down, false);
        for (int d : m) {
            if (d < 0 || d >= down) throw std::invalid_argument("network: merge map target out of range");
            hit[d] = true;
        }
        if (std::find(hit.begin(), hit.end(), false) != hit.end())
            throw std::invalid_argument("network: merge map must reach every downstream lane");
    }
    if (merge_zone < 0.0) throw std::invalid_argument("network: merge_zone must be non-negative");
    if (merge_relax < 0.0) throw std::invalid_argument("network: merge_relax must be non-negative");
    if (!(entry_speed > 0.0)) throw std::invalid_argument("network: entry_speed must be positive");
    krauss.validate();
}

double NetworkSpec::total_length() const {
    double total = 0.0;
    for (const auto& e : edges) total += e.length;
    return total;
}

int NetworkSpec::max_lanes() const {
    int m = 0;
    for (const auto& e : edges) m = std::max(m, e.lanes);
    return m;
}

const EdgeSpec& NetworkSpec::edge(int id) const {
    for (const auto& e : edges)
        if (e.id == id) return e;
    throw std::out_of_range("network: unknown edge id " + std::to_string(id));
}

void InflowConfig::validate() const {
    if (rate_vph < 0.0) throw std::invalid_argument("inflow: rate must be non-negative");
    if (penetration < 0.0 || penetration > 1.0)
        throw std::invalid_argument("inflow: penetration must lie in [0, 1]");
}

Network build_network(const NetworkSpec& spec) { return Network(spec); }

Network::Network(NetworkSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    const std::size_t n = spec_.edges.size();
    tail_.assign(n, 0.0);
    for (std::size_t i = n - 1; i-- > 0;) tail_[i] = tail_[i + 1] + spec_.edges[i + 1].length;

    merge_info_.resize(n);
    lanes_.resize(n);
    for (std::size_t e = 0; e < n; ++e) {
        lanes_[e].resize(spec_.edges[e].lanes);
        merge_info_[e].resize(spec_.edges[e].lanes);
        for (int l = 0; l < spec_.edges[e].lanes; ++l) {
            int lane = l;
            for (std::size_t b = e; b + 1 < n; ++b) {
                const auto& m = spec_.merge_maps[b];
                const int d = m[lane];
                if (std::count(m.begin(), m.end(), d) >= 2) {
                    merge_info_[e][l] = MergeInfo{static_cast<int>(b), lane, d};
                    break;
                }
                lane = d;
            }
        }
    }
}

int Network::edge_index(int edge_id) const {
    for (std::size_t i = 0; i < spec_.edges.size(); ++i)
        if (spec_.edges[i].id == edge_id) return static_cast<int>(i);
    throw std::out_of_range("network: unknown edge id " + std::to_string(edge_id));
}

const VehicleState* Network::find(int id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &vehicles_[it->second];
}

double Network::distance_to_end(int edge, double pos) const {
    const int e = edge_index(edge);
    return tail_[e] + spec_.edges[e].length - pos;
}

double Network::distance_to_end(const VehicleState& v) const { return distance_to_end(v.edge, v.pos); }

double Network::distance_to_line(const VehicleState& v) const {
    return distance_to_end(v) - tail_[edge_index(spec_.control_edge)];
}

int Network::lane_on_edge(const VehicleState& v, int edge) const {
    int e = edge_index(v.edge);
    const int target = edge_index(edge);
    if (target < e) return -1;
    int l = v.lane;
    for (; e < target; ++e) l = spec_.merge_maps[e][l];
    return l;
}

void Network::rebuild_lanes() {
    for (auto& edge : lanes_)
        for (auto& lane : edge) lane.clear();
    by_id_.clear();
    for (std::size_t i = 0; i < vehicles_.size(); ++i) {
        const auto& v = vehicles_[i];
        lanes_[edge_index(v.edge)][v.lane].push_back(static_cast<int>(i));
        by_id_[v.id] = i;
    }
    for (auto& edge : lanes_)
        for (auto& lane : edge)
            std::sort(lane.begin(), lane.end(), [&](int a, int b) {
                if (vehicles_[a].pos != vehicles_[b].pos) return vehicles_[a].pos < vehicles_[b].pos;
                return vehicles_[a].id < vehicles_[b].id;
            });
}

int Network::add_vehicle(VehicleState v) {
    const auto& e = spec_.edges[edge_index(v.edge)];
    if (v.lane < 0 || v.lane >= e.lanes) throw std::invalid_argument("add_vehicle: lane out of range");
    if (v.pos < 0.0 || v.pos > e.length) throw std::invalid_argument("add_vehicle: position off edge");
    if (v.speed < 0.0 || v.speed > spec_.krauss.v_max)
        throw std::invalid_argument("add_vehicle: speed out of range");
    if (v.id == 0) v.id = next_id_;
    if (by_id_.count(v.id)) throw std::invalid_argument("add_vehicle: duplicate id");
    next_id_ = std::max(next_id_, v.id + 1);
    vehicles_.push_back(v);
    ++spawned_;
    entry_times_.push_back(clock_);
    rebuild_lanes();
    return v.id;
}

std::optional<Neighbor> Network::leader_in_lane(int edge, int lane, double pos, double range,
                                                int exclude_id) const {
    int e = edge_index(edge);
    int l = lane;
    const double ref = tail_[e] + spec_.edges[e].length - pos;
    bool first = true;
    while (true) {
        for (int idx : lanes_[e][l]) {
            const auto& c = vehicles_[idx];
            if (c.id == exclude_id) continue;
            if (first && c.pos <= pos) continue;
            const double d = tail_[e] + spec_.edges[e].length - c.pos;
            const double gap = ref - d - c.length;
            if (ref - d > range) return std::nullopt;
            return Neighbor{c.id, gap, c.speed, c.is_av};
        }
        if (e + 1 >= static_cast<int>(spec_.edges.size())) return std::nullopt;
        if (ref - tail_[e] > range) return std::nullopt;
        l = spec_.merge_maps[e][l];
        ++e;
        first = false;
    }
}

std::optional<Neighbor> Network::follower_in_lane(int edge, int lane, double pos, double length,
                                                  double range, int exclude_id) const {
    int e = edge_index(edge);
    const double ref = tail_[e] + spec_.edges[e].length - pos;
    std::vector<int> frontier{lane};
    bool first = true;
    while (!frontier.empty()) {
        const VehicleState* best = nullptr;
        double best_d = kInf;
        for (int l : frontier) {
            const auto& list = lanes_[e][l];
            for (auto it = list.rbegin(); it != list.rend(); ++it) {
                const auto& c = vehicles_[*it];
                if (c.id == exclude_id) continue;
                if (first && c.pos > pos) continue;
                const double d = tail_[e] + spec_.edges[e].length - c.pos;
                if (d < best_d) {
                    best_d = d;
                    best = &c;
                }
                break;
            }
        }
        if (best) {
            if (best_d - ref > range) return std::nullopt;
            return Neighbor{best->id, best_d - ref - length, best->speed, best->is_av};
        }
        if (e == 0) return std::nullopt;
        if (tail_[e] + spec_.edges[e].length - ref > range) return std::nullopt;
        std::vector<int> next;
        for (int u = 0; u < spec_.edges[e - 1].lanes; ++u)
            if (std::find(frontier.begin(), frontier.end(), spec_.merge_maps[e - 1][u]) != frontier.end())
                next.push_back(u);
        frontier = std::move(next);
        --e;
        first = false;
    }
    return std::nullopt;
}

std::optional<int> Network::chain_leader(std::size_t idx) const {
    const auto& v = vehicles_[idx];
    auto n = leader_in_lane(v.edge, v.lane, v.pos, spec_.lookahead, v.id);
    if (!n) return std::nullopt;
    return static_cast<int>(by_id_.at(n->id));
}

LaneNeighbors Network::lane_neighbors(const VehicleState& v, int lane) const {
    LaneNeighbors out;
    const auto& e = spec_.edge(v.edge);
    if (lane < 0 || lane >= e.lanes) return out;
    out.exists = true;
    const double range = spec_.lane_change.lookahead;
    if (auto l = leader_in_lane(v.edge, lane, v.pos, range, v.id)) out.leader = LeaderView{l->speed, l->gap};
    if (auto f = follower_in_lane(v.edge, lane, v.pos, v.length, range, v.id))
        out.follower = LeaderView{f->speed, f->gap};
    return out;
}

void Network::apply_lane_changes(Rng& rng, StepReport& report) {
    std::vector<int> order(vehicles_.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> dist(vehicles_.size());
    for (std::size_t i = 0; i < vehicles_.size(); ++i) dist[i] = distance_to_end(vehicles_[i]);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (dist[a] != dist[b]) return dist[a] < dist[b];
        return vehicles_[a].id < vehicles_[b].id;
    });
    for (int i : order) {
        auto& v = vehicles_[i];
        if (v.is_av) continue;
        LaneNeighborhood nb;
        nb.current = lane_neighbors(v, v.lane);
        nb.current.leader.reset();
        if (auto l = leader_in_lane(v.edge, v.lane, v.pos, spec_.lane_change.lookahead, v.id))
            nb.current.leader = LeaderView{l->speed, l->gap};
        nb.right = lane_neighbors(v, v.lane - 1);
        nb.left = lane_neighbors(v, v.lane + 1);
        if (auto target = maybe_lane_change(v, nb, spec_.krauss, spec_.lane_change, rng)) {
            v.lane = *target;
            ++report.lane_changes;
            rebuild_lanes();
        }
    }
}

StepReport Network::advance(double dt, const CommandSource* commands, Rng& rng) {
    if (!(dt > 0.0)) throw std::invalid_argument("advance: dt must be positive");
    StepReport report;
    if (spec_.lane_change.enabled) apply_lane_changes(rng, report);

    const std::size_t n = vehicles_.size();
    const auto& kp = spec_.krauss;
    std::vector<double> dist(n);
    std::vector<int> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        dist[i] = distance_to_end(vehicles_[i]);
        order[i] = static_cast<int>(i);
    }
    auto merge_of = [&](std::size_t i) -> const MergeInfo& {
        const auto& v = vehicles_[i];
        return merge_info_[edge_index(v.edge)][v.lane];
    };
    auto lane_key = [&](std::size_t i) {
        const auto& m = merge_of(i);
        return m.boundary >= 0 ? m.lane_at_boundary : vehicles_[i].lane;
    };
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (dist[a] != dist[b]) return dist[a] < dist[b];
        if (lane_key(a) != lane_key(b)) return lane_key(a) < lane_key(b);
        return vehicles_[a].id < vehicles_[b].id;
    });

    std::vector<double> new_dist(n), new_speed(n);
    std::vector<char> controlled(n, 0);
    std::vector<int> last_in_group(spec_.edges.size() * spec_.max_lanes(), -1);
    const double line = tail_[edge_index(spec_.control_edge)];

    for (int i : order) {
        const auto& v = vehicles_[i];
        const VehicleCommand cmd = commands ? commands->command(v) : VehicleCommand{};
        double safe = kInf;
        double max_d = kInf;

        if (auto s = chain_leader(i)) {
            const auto& lv = vehicles_[*s];
            const double gap = dist[i] - dist[*s] - lv.length;
            safe = std::min(safe, krauss_safe_speed(lv.speed, std::max(0.0, gap), kp, v.speed));
            max_d = std::min(max_d, dist[i] - new_dist[*s] - lv.length);
        }

        const auto& m = merge_of(i);
        const bool in_zone = m.boundary >= 0 && dist[i] - tail_[m.boundary] <= spec_.merge_zone;
        if (in_zone) {
            const int p = last_in_group[merge_group(m)];
            if (p >= 0 && merge_of(p).lane_at_boundary != m.lane_at_boundary) {
                const auto& pv = vehicles_[p];
                const double gap = dist[i] - dist[p] - pv.length + spec_.merge_relax * (dist[i] - tail_[m.boundary]);
                safe = std::min(safe, krauss_safe_speed(pv.speed, std::max(0.0, gap), kp, v.speed));
                // free up to the merge point; past it only with a real gap
                const double gap_new = dist[i] - new_dist[p] - pv.length;
                const double hold = std::min(dist[i] - tail_[m.boundary], dist[i] - new_dist[p] - kOrderEps);
                max_d = std::min(max_d, std::max(gap_new, hold));
            }
        }

        bool held = false;
        if (cmd.stop_at_line) {
            const double to_line = dist[i] - line;
            if (to_line >= 0.0 && to_line <= spec_.lookahead) {
                const double vs = krauss_safe_speed(0.0, to_line, kp, v.speed);
                if (cmd.mandatory_stop || vs >= v.speed - kp.decel * dt) {
                    safe = std::min(safe, vs);
                    max_d = std::min(max_d, to_line);
                    held = true;
                }
            }
        }

        std::optional<Action> ext;
        if (cmd.accel && v.is_av && v.edge == spec_.control_edge) ext = cmd.accel;
        const double speed = choose_speed(v, safe, kp, dt, rng, ext);
        const double d = std::clamp(speed * dt, 0.0, std::max(0.0, max_d));
        new_dist[i] = dist[i] - d;
        new_speed[i] = d / dt;
        controlled[i] = ext.has_value();
        if (in_zone && !held) last_in_group[merge_group(m)] = i;
    }

    const double t_end = clock_ + dt;
    std::vector<VehicleState> kept;
    kept.reserve(n);
    const int last_edge = static_cast<int>(spec_.edges.size()) - 1;
    for (std::size_t i = 0; i < n; ++i) {
        VehicleState v = vehicles_[i];
        const double d = dist[i] - new_dist[i];
        int e = edge_index(v.edge);
        bool exited = false;
        while (new_dist[i] - tail_[e] < -kEps) {
            if (e == last_edge) {
                exited = true;
                break;
            }
            v.lane = spec_.merge_maps[e][v.lane];
            ++e;
        }
        if (e == last_edge && new_dist[i] <= kEps) exited = true;
        v.speed = new_speed[i];
        v.stop_timer = next_stop_timer(v.stop_timer, v.speed, dt);
        v.distance_traveled += d;
        v.controlled_this_step = controlled[i] != 0;
        if (exited) {
            ++exited_;
            ++report.exited;
            report.exited_ids.push_back(v.id);
            exit_times_.push_back(t_end);
            if (reroute_) {
                recycle_.push_back(v);
                report.rerouted_ids.push_back(v.id);
            }
            continue;
        }
        v.edge = spec_.edges[e].id;
        const double remaining = std::max(0.0, new_dist[i] - tail_[e]);
        v.pos = std::clamp(spec_.edges[e].length - remaining, 0.0, spec_.edges[e].length);
        kept.push_back(v);
    }
    vehicles_ = std::move(kept);
    clock_ = t_end;
    rebuild_lanes();

    if (auto bad = collisions(); !bad.empty()) {
        std::ostringstream os;
        os << "collision at t=" << clock_ << ":";
        for (auto [a, b] : bad) {
            const auto* f = find(a);
            const auto* l = find(b);
            os << " [" << a << " e" << f->edge << " l" << f->lane << " x=" << f->pos << " v=" << f->speed
               << " behind " << b << " e" << l->edge << " l" << l->lane << " x=" << l->pos << " v=" << l->speed
               << "]";
        }
        throw CollisionError(os.str());
    }
    return report;
}

InflowReport Network::inflow_step(const InflowConfig& cfg, double dt, Rng& rng) {
    cfg.validate();
    if (!(dt > 0.0)) throw std::invalid_argument("inflow_step: dt must be positive");
    InflowReport report;
    const auto& entry = spec_.edges.front();
    const double p = cfg.rate_vph * dt / (3600.0 * entry.lanes);
    bool changed = false;
    for (int l = 0; l < entry.lanes; ++l) {
        if (!rng.bernoulli(p)) continue;
        const bool recycled = !recycle_.empty();
        if (!recycled && !fresh_spawns_) continue;
        double speed = spec_.entry_speed;
        if (auto lead = leader_in_lane(entry.id, l, -kEps, spec_.lookahead)) {
            if (lead->gap < spec_.krauss.min_gap) {
                ++denied_;
                ++report.denied;
                continue;
            }
            speed = std::min(speed, krauss_safe_speed(lead->speed, lead->gap, spec_.krauss, speed));
        }
        VehicleState v;
        if (recycled) {
            v = recycle_.front();
            recycle_.pop_front();
        } else {
            v.id = next_id_++;
            v.is_av = rng.bernoulli(cfg.penetration);
            v.length = spec_.krauss.length;
            ++spawned_;
        }
        v.edge = entry.id;
        v.lane = l;
        v.pos = 0.0;
        v.speed = std::min(speed, spec_.krauss.v_max);
        v.stop_timer = 0.0;
        v.distance_traveled = 0.0;
        v.entry_time = clock_;
        v.controlled_this_step = false;
        vehicles_.push_back(v);
        entry_times_.push_back(clock_);
        report.spawned_ids.push_back(v.id);
        changed = true;
    }
    if (changed) rebuild_lanes();
    return report;
}

int Network::count_on_edge(int edge) const {
    return static_cast<int>(std::count_if(vehicles_.begin(), vehicles_.end(),
                                          [&](const VehicleState& v) { return v.edge == edge; }));
}

int Network::count_bottleneck() const { return count_on_edge(spec_.bottleneck_edge); }

std::vector<double> Network::edge_mean_speeds(std::span<const int> edge_ids) const {
    std::vector<double> out;
    out.reserve(edge_ids.size());
    for (int id : edge_ids) {
        double sum = 0.0;
        int count = 0;
        for (const auto& v : vehicles_)
            if (v.edge == id) {
                sum += v.speed;
                ++count;
            }
        out.push_back(count == 0 ? spec_.krauss.v_max : sum / count);
    }
    return out;
}

double Network::outflow_vph(double window) const {
    if (!(window > 0.0)) throw std::invalid_argument("outflow_vph: window must be positive");
    if (clock_ + kEps < window) throw std::logic_error("outflow_vph: window longer than elapsed time");
    const double from = clock_ - window + kEps;
    const auto first = std::upper_bound(exit_times_.begin(), exit_times_.end(), from);
    const auto count = std::distance(first, exit_times_.end());
    return 3600.0 * static_cast<double>(count) / window;
}

std::vector<std::pair<int, int>> Network::collisions(double tolerance) const {
    std::vector<std::pair<int, int>> out;
    const std::size_t n = spec_.edges.size();
    for (std::size_t e = 0; e < n; ++e) {
        for (int l = 0; l < spec_.edges[e].lanes; ++l) {
            std::vector<VehicleState> lane;
            for (int idx : lanes_[e][l]) lane.push_back(vehicles_[idx]);
            auto bad = detect_collisions(lane, tolerance);
            out.insert(out.end(), bad.begin(), bad.end());
            // rear of the first vehicle downstream may still reach back onto this edge;
            // at a zipper it hangs into its own feeder lane, which the merge guard covers
            const bool merge = e + 1 < n &&
                std::count(spec_.merge_maps[e].begin(), spec_.merge_maps[e].end(), spec_.merge_maps[e][l]) > 1;
            if (!lane.empty() && e + 1 < n && !merge) {
                const auto& front = lane.back();
                if (auto lead = leader_in_lane(front.edge, front.lane, front.pos, spec_.lookahead, front.id);
                    lead && lead->gap < -tolerance && find(lead->id)->edge != front.edge)
                    out.emplace_back(front.id, lead->id);
            }
        }
    }
    return out;
}

} // namespace bottleneck
