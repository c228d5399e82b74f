#pragma once

#include <map>
#include <string>
#include <vector>

#include "bottleneck/env.hpp"

namespace bottleneck {

using ObsMap = std::map<int, std::vector<double>>;
using ActionMap = std::map<int, double>;

class Policy {
public:
    virtual ~Policy() = default;
    virtual ActionMap act(const ObsMap& obs) = 0;
};

/// Index of the ego speed entry in an observation vector.
std::size_t ego_speed_index(StateSpace s);

/// Deterministic stand-in for a trained controller: steers the ego speed
/// towards `target` (fraction of v_max) with a proportional raw action.
class ScriptedPolicy : public Policy {
public:
    explicit ScriptedPolicy(StateSpace s, double target = 0.2, double gain = 2.0)
        : index_(ego_speed_index(s)), target_(target), gain_(gain) {}
    ActionMap act(const ObsMap& obs) override;

private:
    std::size_t index_;
    double target_;
    double gain_;
};

/// Asks a remote policy over TCP. One request per env step:
///   -> {"cmd":"act","obs":{"<id>":[...]}}
///   <- {"actions":{"<id>":x}}
class PolicyClient : public Policy {
public:
    /// `endpoint` is host:port. Connects immediately; throws on failure.
    explicit PolicyClient(const std::string& endpoint);
    ~PolicyClient() override;
    PolicyClient(const PolicyClient&) = delete;
    PolicyClient& operator=(const PolicyClient&) = delete;

    ActionMap act(const ObsMap& obs) override;

private:
    int fd_ = -1;
    std::string buffer_;
};

} // namespace bottleneck
