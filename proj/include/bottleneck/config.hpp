#pragma once

#include <string>

#include <json.hpp>

#include "bottleneck/control.hpp"
#include "bottleneck/env.hpp"
#include "bottleneck/experiments.hpp"
#include "bottleneck/network.hpp"
#include "bottleneck/sim_core.hpp"

// JSON mapping for every config type. Missing keys keep their defaults;
// unknown keys are rejected so typos do not pass silently.
namespace bottleneck {

void to_json(nlohmann::json& j, const KraussParams& p);
void from_json(const nlohmann::json& j, KraussParams& p);
void to_json(nlohmann::json& j, const LaneChangeParams& p);
void from_json(const nlohmann::json& j, LaneChangeParams& p);
void to_json(nlohmann::json& j, const NetworkSpec& s);
void from_json(const nlohmann::json& j, NetworkSpec& s);
void to_json(nlohmann::json& j, const FeedbackParams& p);
void from_json(const nlohmann::json& j, FeedbackParams& p);
void to_json(nlohmann::json& j, const EpisodeConfig& c);
void from_json(const nlohmann::json& j, EpisodeConfig& c);
void to_json(nlohmann::json& j, const SweepConfig& c);
void from_json(const nlohmann::json& j, SweepConfig& c);

/// Top-level config file: {"network": ..., "sweep": ..., "episode": ..., "feedback": ...}.
/// The network and feedback sections are shared by sweep and episode.
struct ConfigFile {
    NetworkSpec network = NetworkSpec::bay_bridge();
    FeedbackParams feedback;
    SweepConfig sweep;
    EpisodeConfig episode;
};

ConfigFile load_config(const std::string& path);
ConfigFile parse_config(const nlohmann::json& j);

} // namespace bottleneck
