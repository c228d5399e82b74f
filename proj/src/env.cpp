#include "bottleneck/env.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace bottleneck {

namespace {

constexpr double kTimeEps = 1e-9;

bool multiple_of(double x, double dt) {
    const double k = std::round(x / dt);
    return std::abs(k * dt - x) < 1e-6;
}

class ActionSource : public CommandSource {
public:
    std::map<int, double> accel;

    VehicleCommand command(const VehicleState& v) const override {
        VehicleCommand cmd;
        if (auto it = accel.find(v.id); it != accel.end()) cmd.accel = Action{it->second};
        return cmd;
    }
};

} // namespace

StateSpace parse_state_space(const std::string& name) {
    if (name == "minimal") return StateSpace::minimal;
    if (name == "minimal+aggregate") return StateSpace::minimal_aggregate;
    if (name == "radar+aggregate") return StateSpace::radar_aggregate;
    if (name == "radar") return StateSpace::radar;
    throw std::invalid_argument("unknown state space: " + name);
}

std::string to_string(StateSpace s) {
    switch (s) {
    case StateSpace::minimal: return "minimal";
    case StateSpace::minimal_aggregate: return "minimal+aggregate";
    case StateSpace::radar_aggregate: return "radar+aggregate";
    case StateSpace::radar: return "radar";
    }
    return "?";
}

void EpisodeConfig::validate() const {
    if (!(sim_dt > 0.0)) throw std::invalid_argument("episode: sim_dt must be positive");
    if (action_repeat < 1) throw std::invalid_argument("episode: action_repeat must be >= 1");
    if (warmup < 0.0 || !multiple_of(warmup, sim_dt))
        throw std::invalid_argument("episode: warmup must be a non-negative multiple of sim_dt");
    if (!(horizon > 0.0) || !multiple_of(horizon, sim_dt))
        throw std::invalid_argument("episode: horizon must be a positive multiple of sim_dt");
    if (inflow < 0.0) throw std::invalid_argument("episode: inflow must be non-negative");
    if (p_lo < 0.0 || p_hi > 1.0 || p_lo > p_hi)
        throw std::invalid_argument("episode: need 0 <= p_lo <= p_hi <= 1");
    if (radar_cap && !(*radar_cap > 0.0)) throw std::invalid_argument("episode: radar cap must be positive");
    if (!(reward_norm > 0.0)) throw std::invalid_argument("episode: reward_norm must be positive");
    network.validate();
    reference_feedback.validate();
}

std::size_t observation_size(StateSpace s, int max_lanes) {
    const std::size_t ego = 6, radar = 6 * static_cast<std::size_t>(max_lanes), agg = 4, minimal = 7;
    switch (s) {
    case StateSpace::minimal: return minimal;
    case StateSpace::minimal_aggregate: return minimal + agg + 1;
    case StateSpace::radar_aggregate: return ego + radar + agg + 1;
    case StateSpace::radar: return ego + radar + 1;
    }
    return 0;
}

double scale_action(double raw) {
    if (std::isnan(raw)) return 0.0;
    return 8.0 * std::clamp(raw, -4.5 / 8.0, 2.6 / 8.0);
}

BottleneckEnv::BottleneckEnv(EpisodeConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    net_ = std::make_unique<Network>(cfg_.network);
}

bool BottleneckEnv::finished() const { return net_->clock() >= t0_ + cfg_.horizon - kTimeEps; }

std::vector<int> BottleneckEnv::agents() const {
    std::vector<int> ids;
    for (const auto& v : net_->vehicles())
        if (v.is_av) ids.push_back(v.id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

double BottleneckEnv::reference_wait() const {
    return cycle_time(ref_.q(), cfg_.reference_feedback).c;
}

StepReport BottleneckEnv::sim_step(const CommandSource* cmds) {
    const int n = net_->count_bottleneck();
    ref_.sample(net_->clock(), n, cfg_.reference_feedback);
    ref_.maybe_update(net_->clock(), n, cfg_.reference_feedback);
    StepReport rep = net_->advance(cfg_.sim_dt, cmds, rng_);
    net_->inflow_step(InflowConfig{cfg_.inflow, p_}, cfg_.sim_dt, rng_);
    return rep;
}

EnvResult BottleneckEnv::reset(std::uint64_t seed) {
    NetworkSpec spec = cfg_.network;
    spec.lane_change.enabled = cfg_.lane_change;
    net_ = std::make_unique<Network>(spec);
    net_->set_reroute(cfg_.reroute);
    Rng draw(derive_seed(seed, 1, 0));
    p_ = cfg_.p_lo == cfg_.p_hi ? cfg_.p_lo : draw.uniform(cfg_.p_lo, cfg_.p_hi);
    rng_ = Rng(derive_seed(seed, 0, 0));
    ref_ = FeedbackState(cfg_.reference_feedback, 0.0);
    t0_ = 0.0;
    const long warm_steps = std::lround(cfg_.warmup / cfg_.sim_dt);
    for (long k = 0; k < warm_steps; ++k) sim_step(nullptr);
    // closed population from here on: exits re-enter, nothing new is spawned
    if (cfg_.reroute) net_->set_fresh_spawns(false);
    t0_ = net_->clock();
    exited_since_reset_ = 0;
    ignored_ = 0;
    last_obs_.clear();
    EnvResult r = collect(0.0, {}, 0);
    if (log_) log_->log(*net_, r, {});
    return r;
}

EnvResult BottleneckEnv::step(const std::map<int, double>& actions) {
    if (finished()) throw std::logic_error("step: episode is over; call reset");
    ActionSource src;
    ignored_ = 0;
    for (const auto& [id, raw] : actions) {
        const VehicleState* v = net_->find(id);
        if (!v || !v->is_av) {
            ++ignored_;
            continue;
        }
        // commands only bind on the control edge; elsewhere they are dropped
        if (v->edge == net_->spec().control_edge) src.accel[id] = scale_action(raw);
    }

    int exits = 0;
    std::vector<int> exited_agents;
    for (int k = 0; k < cfg_.action_repeat && !finished(); ++k) {
        std::set<int> avs;
        for (const auto& v : net_->vehicles())
            if (v.is_av) avs.insert(v.id);
        const StepReport rep = sim_step(&src);
        exits += rep.exited;
        // a rerouted agent is back at the entrance: car-follow until a fresh action
        for (int id : rep.rerouted_ids) src.accel.erase(id);
        if (!cfg_.reroute)
            for (int id : rep.exited_ids)
                if (avs.contains(id)) exited_agents.push_back(id);
    }
    exited_since_reset_ += exits;
    EnvResult r = collect(exits / cfg_.reward_norm, exited_agents, exits);
    if (log_) log_->log(*net_, r, actions);
    return r;
}

EnvResult BottleneckEnv::collect(double reward, const std::vector<int>& exited_agents, int exited) {
    EnvResult r;
    r.reward = reward;
    r.done_all = finished();
    for (int id : agents()) {
        r.obs[id] = observe(id);
        r.dones[id] = r.done_all;
    }
    for (int id : exited_agents) {
        if (auto it = last_obs_.find(id); it != last_obs_.end()) r.obs[id] = it->second;
        else r.obs[id] = std::vector<double>(observation_size(cfg_.state_space, net_->spec().max_lanes()), 0.0);
        r.dones[id] = true;
    }
    last_obs_ = r.obs;
    const double elapsed = net_->clock() - t0_;
    r.info.time = net_->clock();
    r.info.exited = exited;
    r.info.bottleneck_count = net_->count_bottleneck();
    r.info.outflow = elapsed > 0.0 ? 3600.0 * static_cast<double>(exited_since_reset_) / elapsed : 0.0;
    r.info.agents = static_cast<int>(agents().size()) +
                    static_cast<int>(std::count_if(net_->recycled().begin(), net_->recycled().end(),
                                                   [](const VehicleState& v) { return v.is_av; }));
    r.info.penetration = p_;
    r.info.ignored_actions = ignored_;
    return r;
}

std::vector<double> BottleneckEnv::observe(int id) const {
    const VehicleState* vp = net_->find(id);
    if (!vp) throw std::out_of_range("observe: no such vehicle");
    const VehicleState& v = *vp;
    const NetworkSpec& spec = net_->spec();
    const double len = spec.total_length();
    const double vmax = spec.krauss.v_max;
    const double H = cfg_.horizon;
    const double abs_pos = (len - net_->distance_to_end(v)) / len;
    const double time = std::clamp((net_->clock() - t0_) / H, 0.0, 1.0);
    const int count = net_->count_bottleneck();

    std::vector<double> out;
    out.reserve(observation_size(cfg_.state_space, spec.max_lanes()));

    auto aggregate = [&] {
        const std::array<int, 3> ids{spec.control_edge, spec.bottleneck_edge, spec.edges.back().id};
        for (double s : net_->edge_mean_speeds(ids)) out.push_back(s / vmax);
        out.push_back(count / kCountScale);
    };
    auto ego = [&] {
        out.push_back(v.speed / vmax);
        out.push_back(v.lane);
        out.push_back(static_cast<double>(v.edge) / static_cast<double>(spec.edges.size()));
        out.push_back(v.pos / len);
        out.push_back(abs_pos);
        out.push_back(v.stop_timer / H);
    };
    auto radar = [&] {
        const int lanes = spec.edge(v.edge).lanes;
        const double range = cfg_.radar_cap.value_or(len);
        auto push = [&](const std::optional<Neighbor>& n, bool exists) {
            if (n) {
                out.push_back(n->speed / vmax);
                out.push_back(std::max(0.0, n->gap) / len);
                out.push_back(n->is_av ? 1.0 : 0.0);
            } else if (exists && cfg_.radar_cap) {
                out.push_back(kRadarDefaultSpeed / vmax);
                out.push_back(*cfg_.radar_cap / len);
                out.push_back(0.0);
            } else {
                out.insert(out.end(), 3, 0.0);
            }
        };
        for (int l = 0; l < spec.max_lanes(); ++l) {
            const bool exists = l < lanes;
            std::optional<Neighbor> ahead, behind;
            if (exists) {
                ahead = net_->leader_in_lane(v.edge, l, v.pos, range, v.id);
                behind = net_->follower_in_lane(v.edge, l, v.pos, v.length, range, v.id);
            }
            push(ahead, exists);
            push(behind, exists);
        }
    };
    auto minimal = [&] {
        const auto lead = net_->leader_in_lane(v.edge, v.lane, v.pos, len, v.id);
        out.push_back(abs_pos);
        out.push_back(count / kCountScale);
        out.push_back(v.stop_timer / H);
        out.push_back(v.speed / vmax);
        out.push_back(lead ? lead->speed / vmax : 0.0);
        out.push_back(lead ? std::max(0.0, lead->gap) / len : 0.0);
        out.push_back(reference_wait() / H);
    };

    switch (cfg_.state_space) {
    case StateSpace::minimal:
        minimal();
        break;
    case StateSpace::minimal_aggregate:
        minimal();
        aggregate();
        out.push_back(time);
        break;
    case StateSpace::radar_aggregate:
        ego();
        radar();
        aggregate();
        out.push_back(time);
        break;
    case StateSpace::radar:
        ego();
        radar();
        out.push_back(time);
        break;
    }
    return out;
}

void TrajectoryLogger::log(const Network& net, const EnvResult& r, const std::map<int, double>& actions) {
    nlohmann::json j;
    j["t"] = net.clock();
    j["reward"] = r.reward;
    j["exited"] = r.info.exited;
    j["bottleneck"] = r.info.bottleneck_count;
    j["done"] = r.done_all;
    nlohmann::json agents = nlohmann::json::array();
    for (const auto& v : net.vehicles()) {
        if (!v.is_av) continue;
        nlohmann::json a{{"id", v.id}, {"edge", v.edge}, {"lane", v.lane}, {"pos", v.pos}, {"speed", v.speed}};
        if (auto it = actions.find(v.id); it != actions.end()) a["action"] = it->second;
        agents.push_back(std::move(a));
    }
    j["agents"] = std::move(agents);
    out_ << j.dump() << '\n';
}

} // namespace bottleneck
