#include "bottleneck/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace bottleneck {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const char* what) {
    if (!j.is_object()) throw std::invalid_argument(std::string(what) + ": expected an object");
    for (const auto& [k, v] : j.items())
        if (!allowed.contains(k)) throw std::invalid_argument(std::string(what) + ": unknown key '" + k + "'");
}

template <typename T>
void get(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace

void to_json(json& j, const KraussParams& p) {
    j = {{"accel", p.accel}, {"decel", p.decel}, {"tau", p.tau}, {"min_gap", p.min_gap},
         {"sigma", p.sigma}, {"v_max", p.v_max}, {"length", p.length}};
}

void from_json(const json& j, KraussParams& p) {
    check_keys(j, {"accel", "decel", "tau", "min_gap", "sigma", "v_max", "length"}, "krauss");
    get(j, "accel", p.accel);
    get(j, "decel", p.decel);
    get(j, "tau", p.tau);
    get(j, "min_gap", p.min_gap);
    get(j, "sigma", p.sigma);
    get(j, "v_max", p.v_max);
    get(j, "length", p.length);
}

void to_json(json& j, const LaneChangeParams& p) {
    j = {{"enabled", p.enabled}, {"hysteresis", p.hysteresis}, {"lookahead", p.lookahead},
         {"probability", p.probability}};
}

void from_json(const json& j, LaneChangeParams& p) {
    check_keys(j, {"enabled", "hysteresis", "lookahead", "probability"}, "lane_change");
    get(j, "enabled", p.enabled);
    get(j, "hysteresis", p.hysteresis);
    get(j, "lookahead", p.lookahead);
    get(j, "probability", p.probability);
}

void to_json(json& j, const NetworkSpec& s) {
    json edges = json::array();
    for (const auto& e : s.edges) edges.push_back({{"id", e.id}, {"length", e.length}, {"lanes", e.lanes}});
    j = {{"edges", edges},
         {"merge_maps", s.merge_maps},
         {"merge_zone", s.merge_zone},
         {"merge_relax", s.merge_relax},
         {"entry_speed", s.entry_speed},
         {"lookahead", s.lookahead},
         {"control_edge", s.control_edge},
         {"bottleneck_edge", s.bottleneck_edge},
         {"krauss", s.krauss},
         {"lane_change", s.lane_change}};
}

void from_json(const json& j, NetworkSpec& s) {
    check_keys(j,
               {"edges", "edge_lengths", "merge_maps", "merge_zone", "merge_relax", "entry_speed", "lookahead",
                "control_edge", "bottleneck_edge", "krauss", "lane_change"},
               "network");
    if (j.contains("edges")) {
        s.edges.clear();
        for (const auto& e : j.at("edges")) {
            check_keys(e, {"id", "length", "lanes"}, "edge");
            s.edges.push_back({e.at("id").get<int>(), e.at("length").get<double>(), e.at("lanes").get<int>()});
        }
    }
    if (j.contains("edge_lengths")) {
        const auto lengths = j.at("edge_lengths").get<std::vector<double>>();
        if (lengths.size() != s.edges.size())
            throw std::invalid_argument("network: edge_lengths must list one length per edge");
        for (std::size_t i = 0; i < lengths.size(); ++i) s.edges[i].length = lengths[i];
    }
    get(j, "merge_maps", s.merge_maps);
    get(j, "merge_zone", s.merge_zone);
    get(j, "merge_relax", s.merge_relax);
    get(j, "entry_speed", s.entry_speed);
    get(j, "lookahead", s.lookahead);
    get(j, "control_edge", s.control_edge);
    get(j, "bottleneck_edge", s.bottleneck_edge);
    if (j.contains("krauss")) from_json(j.at("krauss"), s.krauss);
    if (j.contains("lane_change")) from_json(j.at("lane_change"), s.lane_change);
    s.validate();
}

void to_json(json& j, const FeedbackParams& p) {
    j = {{"K", p.K}, {"n_crit", p.n_crit}, {"q_min", p.q_min}, {"q_max", p.q_max}, {"T", p.T},
         {"update_period", p.update_period}, {"g", p.g}, {"L", p.L}, {"q_init", p.q_init}};
}

void from_json(const json& j, FeedbackParams& p) {
    check_keys(j, {"K", "n_crit", "q_min", "q_max", "T", "update_period", "g", "L", "q_init"}, "feedback");
    get(j, "K", p.K);
    get(j, "n_crit", p.n_crit);
    get(j, "q_min", p.q_min);
    get(j, "q_max", p.q_max);
    get(j, "T", p.T);
    get(j, "update_period", p.update_period);
    get(j, "g", p.g);
    get(j, "L", p.L);
    get(j, "q_init", p.q_init);
    p.validate();
}

void to_json(json& j, const EpisodeConfig& c) {
    j = {{"sim_dt", c.sim_dt},
         {"action_repeat", c.action_repeat},
         {"warmup", c.warmup},
         {"horizon", c.horizon},
         {"inflow", c.inflow},
         {"p_lo", c.p_lo},
         {"p_hi", c.p_hi},
         {"state_space", to_string(c.state_space)},
         {"reroute", c.reroute},
         {"lane_change", c.lane_change},
         {"radar_cap", c.radar_cap ? json(*c.radar_cap) : json(nullptr)},
         {"reward_norm", c.reward_norm}};
}

void from_json(const json& j, EpisodeConfig& c) {
    check_keys(j,
               {"sim_dt", "action_repeat", "warmup", "horizon", "inflow", "penetration", "p_lo", "p_hi",
                "state_space", "reroute", "lane_change", "radar_cap", "reward_norm"},
               "episode");
    get(j, "sim_dt", c.sim_dt);
    get(j, "action_repeat", c.action_repeat);
    get(j, "warmup", c.warmup);
    get(j, "horizon", c.horizon);
    get(j, "inflow", c.inflow);
    if (j.contains("penetration")) c.p_lo = c.p_hi = j.at("penetration").get<double>();
    get(j, "p_lo", c.p_lo);
    get(j, "p_hi", c.p_hi);
    if (j.contains("state_space")) c.state_space = parse_state_space(j.at("state_space").get<std::string>());
    get(j, "reroute", c.reroute);
    get(j, "lane_change", c.lane_change);
    if (j.contains("radar_cap"))
        c.radar_cap = j.at("radar_cap").is_null() ? std::nullopt : std::optional<double>(j.at("radar_cap").get<double>());
    get(j, "reward_norm", c.reward_norm);
}

void to_json(json& j, const SweepConfig& c) {
    j = {{"inflows", c.inflows},
         {"runs", c.runs},
         {"window", c.window},
         {"horizon", c.horizon},
         {"dt", c.dt},
         {"mode", to_string(c.mode)},
         {"penetrations", c.penetrations},
         {"seed", c.seed},
         {"network", c.network},
         {"feedback", c.feedback},
         {"state_space", to_string(c.state_space)},
         {"radar_cap", c.radar_cap ? json(*c.radar_cap) : json(nullptr)},
         {"action_repeat", c.action_repeat}};
    // `parallel` and the policy endpoint are deliberately left out: they do not change results
}

void from_json(const json& j, SweepConfig& c) {
    check_keys(j,
               {"inflows", "inflow_range", "runs", "window", "horizon", "dt", "mode", "penetrations", "seed",
                "parallel", "state_space", "radar_cap", "action_repeat", "policy_endpoint"},
               "sweep");
    get(j, "inflows", c.inflows);
    if (j.contains("inflow_range")) {
        const auto r = j.at("inflow_range").get<std::vector<double>>();
        if (r.size() != 3 || !(r[2] > 0.0) || r[1] < r[0])
            throw std::invalid_argument("sweep: inflow_range is [lo, hi, step]");
        c.inflows.clear();
        for (double q = r[0]; q <= r[1] + 1e-9; q += r[2]) c.inflows.push_back(q);
    }
    get(j, "runs", c.runs);
    get(j, "window", c.window);
    get(j, "horizon", c.horizon);
    get(j, "dt", c.dt);
    if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
    get(j, "penetrations", c.penetrations);
    get(j, "seed", c.seed);
    get(j, "parallel", c.parallel);
    if (j.contains("state_space")) c.state_space = parse_state_space(j.at("state_space").get<std::string>());
    if (j.contains("radar_cap"))
        c.radar_cap = j.at("radar_cap").is_null() ? std::nullopt : std::optional<double>(j.at("radar_cap").get<double>());
    get(j, "action_repeat", c.action_repeat);
    get(j, "policy_endpoint", c.policy_endpoint);
}

ConfigFile parse_config(const json& j) {
    check_keys(j, {"network", "feedback", "sweep", "episode"}, "config");
    ConfigFile cfg;
    if (j.contains("network")) from_json(j.at("network"), cfg.network);
    if (j.contains("feedback")) from_json(j.at("feedback"), cfg.feedback);
    if (j.contains("sweep")) from_json(j.at("sweep"), cfg.sweep);
    if (j.contains("episode")) from_json(j.at("episode"), cfg.episode);
    cfg.sweep.network = cfg.network;
    cfg.sweep.feedback = cfg.feedback;
    cfg.episode.network = cfg.network;
    cfg.episode.reference_feedback = cfg.feedback;
    cfg.sweep.validate();
    cfg.episode.validate();
    return cfg;
}

ConfigFile load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    return parse_config(j);
}

} // namespace bottleneck
