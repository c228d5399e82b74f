#include "bottleneck/policy.hpp"

#include <algorithm>
#include <stdexcept>

#include <json.hpp>
#include <unistd.h>

#include "bottleneck/server.hpp"

namespace bottleneck {

std::size_t ego_speed_index(StateSpace s) {
    switch (s) {
    case StateSpace::minimal:
    case StateSpace::minimal_aggregate: return 3;
    case StateSpace::radar_aggregate:
    case StateSpace::radar: return 0;
    }
    return 0;
}

ActionMap ScriptedPolicy::act(const ObsMap& obs) {
    ActionMap out;
    for (const auto& [id, o] : obs) out[id] = std::clamp(gain_ * (target_ - o.at(index_)), -1.0, 1.0);
    return out;
}

PolicyClient::PolicyClient(const std::string& endpoint) : fd_(wire::connect_to(endpoint)) {}

PolicyClient::~PolicyClient() {
    if (fd_ >= 0) ::close(fd_);
}

ActionMap PolicyClient::act(const ObsMap& obs) {
    nlohmann::json req{{"cmd", "act"}, {"obs", nlohmann::json::object()}};
    for (const auto& [id, o] : obs) req["obs"][std::to_string(id)] = o;
    if (!wire::write_line(fd_, req.dump())) throw std::runtime_error("policy client: send failed");
    std::string line;
    if (!wire::read_line(fd_, buffer_, line)) throw std::runtime_error("policy client: connection closed");
    const auto reply = nlohmann::json::parse(line);
    if (reply.contains("error")) throw std::runtime_error("policy server: " + reply["error"].get<std::string>());
    ActionMap out;
    for (const auto& [k, v] : reply.at("actions").items()) out[std::stoi(k)] = v.get<double>();
    return out;
}

} // namespace bottleneck
