#include "bottleneck/control.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace bottleneck {

namespace {
constexpr double kTimeEps = 1e-9;
}

void FeedbackParams::validate() const {
    if (!(K > 0.0)) throw std::invalid_argument("feedback: K must be positive");
    if (!(q_min > 0.0) || q_min > q_max) throw std::invalid_argument("feedback: need 0 < q_min <= q_max");
    if (q_init < q_min || q_init > q_max) throw std::invalid_argument("feedback: q_init outside [q_min, q_max]");
    if (!(g > 0.0)) throw std::invalid_argument("feedback: g must be positive");
    if (!(update_period > 0.0)) throw std::invalid_argument("feedback: update_period must be positive");
    if (!(T > 0.0)) throw std::invalid_argument("feedback: T must be positive");
    if (L < 1) throw std::invalid_argument("feedback: L must be at least 1");
}

FeedbackState::FeedbackState(const FeedbackParams& fp, double t0) : q_(fp.q_init), last_update_(t0) {}

void FeedbackState::sample(double t, int count, const FeedbackParams& fp) {
    samples_.emplace_back(t, count);
    while (!samples_.empty() && samples_.front().first <= t - fp.T + kTimeEps) samples_.pop_front();
}

double FeedbackState::mean_count(double fallback) const {
    if (samples_.empty()) return fallback;
    double sum = 0.0;
    for (const auto& s : samples_) sum += s.second;
    return sum / static_cast<double>(samples_.size());
}

bool FeedbackState::maybe_update(double t, int instantaneous, const FeedbackParams& fp) {
    if (t - last_update_ < fp.update_period - kTimeEps) return false;
    q_ = feedback_update(*this, fp, instantaneous);
    last_update_ = t;
    return true;
}

double feedback_update(double q, double n_hat, const FeedbackParams& fp) {
    const double q_tilde = q + fp.K * (fp.n_crit - n_hat);
    return std::max(fp.q_min, std::min(q_tilde, fp.q_max));
}

double feedback_update(const FeedbackState& fs, const FeedbackParams& fp, int instantaneous) {
    return feedback_update(fs.q(), fs.mean_count(instantaneous), fp);
}

Cycle cycle_time(double q, const FeedbackParams& fp) {
    if (!(q > 0.0)) throw std::invalid_argument("cycle_time: q must be positive");
    const double c = 7200.0 * fp.L / q;
    return {c, std::max(0.0, c - fp.g)};
}

Phase light_phase(int lane, double t, double c, double g) {
    if (c <= g) return Phase::green;
    const double phase = std::fmod(t + 2.0 * lane, c);
    return phase < g ? Phase::green : Phase::red;
}

TrafficLightController::TrafficLightController(FeedbackParams fp, bool adaptive)
    : fp_(fp), fs_(fp, 0.0), adaptive_(adaptive) {
    fp_.validate();
}

void TrafficLightController::observe(const Network& net, double) {
    net_ = &net;
    t_ = net.clock();
    const int n = net.count_bottleneck();
    fs_.sample(t_, n, fp_);
    if (adaptive_) fs_.maybe_update(t_, n, fp_);
}

Phase TrafficLightController::phase(int lane) const {
    const Cycle c = cycle();
    return light_phase(lane, t_, c.c, fp_.g);
}

VehicleCommand TrafficLightController::command(const VehicleState& v) const {
    VehicleCommand cmd;
    if (!net_) return cmd;
    const int lane = net_->lane_on_edge(v, net_->spec().control_edge);
    if (lane < 0 || net_->distance_to_line(v) < 0.0) return cmd;
    cmd.stop_at_line = phase(lane) == Phase::red;
    return cmd;
}

AvWaitController::AvWaitController(FeedbackParams fp) : fp_(fp) { fp_.validate(); }

void AvWaitController::observe(const Network& net, double dt) {
    net_ = &net;
    const double t = net.clock();
    const int n = net.count_bottleneck();
    const double near = net.spec().krauss.min_gap + 1.0;
    std::unordered_set<int> seen;
    for (const auto& v : net.vehicles()) {
        if (!v.is_av) continue;
        const double to_line = net.distance_to_line(v);
        if (to_line < 0.0) {
            avs_.erase(v.id);
            continue;
        }
        seen.insert(v.id);
        auto [it, fresh] = avs_.try_emplace(v.id);
        AvState& s = it->second;
        if (fresh) s.fs = FeedbackState(fp_, t);
        s.fs.sample(t, n, fp_);
        s.fs.maybe_update(t, n, fp_);
        if (!s.released && to_line <= near && v.speed < kStopSpeed) {
            s.waited += dt;
            if (s.waited >= cycle_time(s.fs.q(), fp_).c - kTimeEps) {
                s.released = true;
                ++releases_;
            }
        }
    }
    std::erase_if(avs_, [&](const auto& kv) { return !seen.contains(kv.first); });
}

VehicleCommand AvWaitController::command(const VehicleState& v) const {
    VehicleCommand cmd;
    if (!v.is_av) return cmd;
    const auto it = avs_.find(v.id);
    if (it == avs_.end() || it->second.released) return cmd;
    cmd.stop_at_line = true;
    cmd.mandatory_stop = true;
    return cmd;
}

const AvWaitController::AvState* AvWaitController::av_state(int id) const {
    const auto it = avs_.find(id);
    return it == avs_.end() ? nullptr : &it->second;
}

std::vector<FeedbackParams> FeedbackGrid::points(const FeedbackParams& base) const {
    std::vector<FeedbackParams> out;
    for (double n : n_crit)
        for (double k : K)
            for (double q : q_init) {
                FeedbackParams p = base;
                p.n_crit = n;
                p.K = k;
                p.q_init = q;
                out.push_back(p);
            }
    return out;
}

FeedbackParams grid_search_feedback(const FeedbackGrid& grid,
                                    const std::function<double(const FeedbackParams&)>& eval_fn,
                                    std::vector<GridResult>* all, const FeedbackParams& base) {
    const auto pts = grid.points(base);
    if (pts.empty()) throw std::invalid_argument("grid_search_feedback: empty grid");
    std::size_t best = 0;
    double best_score = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double s = eval_fn(pts[i]);
        if (all) all->push_back({pts[i], s});
        if (i == 0 || s > best_score) {
            best = i;
            best_score = s;
        }
    }
    return pts[best];
}

} // namespace bottleneck
