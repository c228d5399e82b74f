#pragma once

#include <deque>
#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bottleneck/network.hpp"

namespace bottleneck {

struct FeedbackParams {
    double K = 5.0;         // veh/h per vehicle of error
    double n_crit = 8.0;    // target bottleneck count
    double q_min = 200.0;
    double q_max = 14400.0;
    double T = 25.0;        // averaging window (s)
    double update_period = 30.0;
    double g = 4.0;         // green time (s)
    int L = 4;              // lanes at the light
    double q_init = 1000.0;

    void validate() const;
};

/// Rolling bottleneck-count window plus the current desired inflow.
class FeedbackState {
public:
    FeedbackState() = default;
    FeedbackState(const FeedbackParams& fp, double t0);

    double q() const { return q_; }
    double last_update() const { return last_update_; }
    std::size_t samples() const { return samples_.size(); }

    /// Adds a count taken at time t and drops samples older than T.
    void sample(double t, int count, const FeedbackParams& fp);
    /// Mean of the window; `fallback` when the window is empty.
    double mean_count(double fallback) const;
    /// Applies the feedback law if update_period has elapsed since the last
    /// update. Returns true if an update was applied.
    bool maybe_update(double t, int instantaneous, const FeedbackParams& fp);
    void set_q(double q) { q_ = q; }

private:
    double q_ = 1000.0;
    double last_update_ = 0.0;
    std::deque<std::pair<double, int>> samples_;
};

/// q' = clamp(q + K (n_crit - n_hat), q_min, q_max).
double feedback_update(double q, double n_hat, const FeedbackParams& fp);
/// Uses the window mean, or `instantaneous` if the window is empty.
double feedback_update(const FeedbackState& fs, const FeedbackParams& fp, int instantaneous);

struct Cycle {
    double c = 0.0;  // cycle length (s)
    double r = 0.0;  // red time (s)
};

/// c = 7200 L / q, r = max(0, c - g). Throws on q <= 0.
Cycle cycle_time(double q, const FeedbackParams& fp);

enum class Phase { red, green };

/// Lane i is green while (t + 2 i) mod c < g.
Phase light_phase(int lane, double t, double c, double g);

/// Something that watches the network before each step and steers it.
class Controller : public CommandSource {
public:
    /// Called once per step before Network::advance.
    virtual void observe(const Network& net, double dt) = 0;
};

/// One metering light per lane at the end of the control edge.
class TrafficLightController : public Controller {
public:
    explicit TrafficLightController(FeedbackParams fp, bool adaptive = true);

    void observe(const Network& net, double dt) override;
    VehicleCommand command(const VehicleState& v) const override;

    const FeedbackState& state() const { return fs_; }
    Cycle cycle() const { return cycle_time(fs_.q(), fp_); }
    Phase phase(int lane) const;

private:
    FeedbackParams fp_;
    FeedbackState fs_;
    bool adaptive_;
    const Network* net_ = nullptr;
    double t_ = 0.0;
};

/// Each AV keeps its own feedback state from the moment it is first seen,
/// stops at the end of the control edge, waits c_k there and is then released.
class AvWaitController : public Controller {
public:
    struct AvState {
        FeedbackState fs;
        double waited = 0.0;
        bool released = false;
    };

    explicit AvWaitController(FeedbackParams fp);

    void observe(const Network& net, double dt) override;
    VehicleCommand command(const VehicleState& v) const override;

    const AvState* av_state(int id) const;
    /// Releases counted so far, i.e. AVs that finished their wait.
    long releases() const { return releases_; }

private:
    FeedbackParams fp_;
    std::unordered_map<int, AvState> avs_;
    const Network* net_ = nullptr;
    long releases_ = 0;
};

struct FeedbackGrid {
    std::vector<double> n_crit{6, 8, 10};
    std::vector<double> K{1, 5, 10, 20, 50};
    std::vector<double> q_init{200, 600, 1000, 5000, 10000};

    /// All points in lexicographic (n_crit, K, q_init) order.
    std::vector<FeedbackParams> points(const FeedbackParams& base = {}) const;
};

struct GridResult {
    FeedbackParams params;
    double score = 0.0;
};

/// Exhaustive search; the first point in lexicographic order wins ties.
/// `all` (optional) receives every evaluated point.
FeedbackParams grid_search_feedback(const FeedbackGrid& grid,
                                    const std::function<double(const FeedbackParams&)>& eval_fn,
                                    std::vector<GridResult>* all = nullptr,
                                    const FeedbackParams& base = {});

} // namespace bottleneck
