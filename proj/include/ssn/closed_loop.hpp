// Closed-loop rollout and scoring: a policy replans every frame from its own
// executed poses, logged agents replay, contacts are detected with an exact
// separating-axis test and classified Front/Side/Rear from the contact
// bearing, and event counts are normalized to 10,000 frames.
#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "ssn/common.hpp"
#include "ssn/model.hpp"
#include "ssn/tensor.hpp"
#include "ssn/world.hpp"

namespace ssn {

struct OrientedBox {
    Vec2 center{};
    double yaw = 0.0;
    double half_length = 1.0;
    double half_width = 1.0;
};

inline OrientedBox agent_box(const AgentState& a) {
    if (a.length <= 0.0 || a.width <= 0.0)
        throw std::invalid_argument("agent_box: nonpositive extents");
    return {a.centroid, a.yaw, a.length / 2.0, a.width / 2.0};
}

/// Exact separating-axis test over the four candidate axes; touching counts
/// as intersecting.
inline bool obb_intersect(const OrientedBox& a, const OrientedBox& b) {
    const Vec2 d = b.center - a.center;
    const Vec2 axes[4] = {rotate({1.0, 0.0}, a.yaw), rotate({0.0, 1.0}, a.yaw),
                          rotate({1.0, 0.0}, b.yaw), rotate({0.0, 1.0}, b.yaw)};
    const Vec2 a_f = axes[0], a_l = axes[1], b_f = axes[2], b_l = axes[3];
    for (const Vec2& axis : axes) {
        const double center_dist = std::abs(axis.x * d.x + axis.y * d.y);
        const double ra = a.half_length * std::abs(axis.x * a_f.x + axis.y * a_f.y) +
                          a.half_width * std::abs(axis.x * a_l.x + axis.y * a_l.y);
        const double rb = b.half_length * std::abs(axis.x * b_f.x + axis.y * b_f.y) +
                          b.half_width * std::abs(axis.x * b_l.x + axis.y * b_l.y);
        if (center_dist > ra + rb) return false;
    }
    return true;
}

enum class CollisionClass { front, side, rear };

inline const char* to_string(CollisionClass c) {
    switch (c) {
        case CollisionClass::front: return "front";
        case CollisionClass::side: return "side";
        default: return "rear";
    }
}

/// Partition of (-pi, pi] by contact bearing: |b| <= pi/4 front,
/// |b| >= 3pi/4 rear, side between. Boundaries resolve to front/rear.
inline CollisionClass classify_collision(double bearing) {
    const double abs_b = std::abs(bearing);
    if (abs_b <= kPi / 4.0) return CollisionClass::front;
    if (abs_b >= 3.0 * kPi / 4.0) return CollisionClass::rear;
    return CollisionClass::side;
}

struct CollisionEvent {
    int scene_id = 0;
    int frame_index = 0;
    int other_track_id = 0;
    double contact_bearing = 0.0;  // other agent's center in the ego body frame
    CollisionClass cls = CollisionClass::front;
};

struct MetricsReport {
    std::int64_t frames_simulated = 0;
    int front_count = 0, side_count = 0, rear_count = 0;
    double front_rate = 0.0, side_rate = 0.0, rear_rate = 0.0, total_rate = 0.0;
};

inline MetricsReport aggregate_metrics(std::span<const CollisionEvent> events,
                                       std::int64_t frames_simulated) {
    if (frames_simulated <= 0)
        throw std::invalid_argument("aggregate_metrics: frames_simulated must be positive");
    MetricsReport r;
    r.frames_simulated = frames_simulated;
    for (const CollisionEvent& e : events) {
        switch (e.cls) {
            case CollisionClass::front: ++r.front_count; break;
            case CollisionClass::side: ++r.side_count; break;
            case CollisionClass::rear: ++r.rear_count; break;
        }
    }
    const double scale = 10000.0 / static_cast<double>(frames_simulated);
    r.front_rate = r.front_count * scale;
    r.side_rate = r.side_count * scale;
    r.rear_rate = r.rear_count * scale;
    r.total_rate = r.front_rate + r.side_rate + r.rear_rate;
    return r;
}

inline constexpr const char* kMetricsCsvHeader = "method,front,side,rear,total,frames";

inline std::string metrics_csv_row(const std::string& method, const MetricsReport& r) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s,%.1f,%.1f,%.1f,%.1f,%lld", method.c_str(), r.front_rate,
                  r.side_rate, r.rear_rate, r.total_rate,
                  static_cast<long long>(r.frames_simulated));
    return buf;
}

inline void write_metrics_csv(const std::string& path,
                              const std::vector<std::pair<std::string, MetricsReport>>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_metrics_csv: cannot open '" + path + "'");
    out << kMetricsCsvHeader << '\n';
    for (const auto& [method, report] : rows) out << metrics_csv_row(method, report) << '\n';
}

// ---------------------------------------------------------------------------
// Policies
// ---------------------------------------------------------------------------

struct RolloutContext {
    const Scene& scene;
    int frame_index;
    const AgentState& ego;
    const AgentState& ego_prev;
};

/// Emits a horizon x (x, y, yaw) plan in the current ego frame; only the first
/// waypoint is executed before replanning.
class Policy {
public:
    virtual ~Policy() = default;
    virtual Tensor plan(const RolloutContext& ctx) = 0;
};

class ModelPolicy : public Policy {
public:
    ModelPolicy(const Model& model, RasterConfig cfg) : model_(model), cfg_(cfg) {}

    Tensor plan(const RolloutContext& ctx) override {
        const Frame& now = ctx.scene.frames[static_cast<std::size_t>(ctx.frame_index)];
        const int prev_index = std::max(0, ctx.frame_index - cfg_.history_steps);
        const Frame& prev = ctx.scene.frames[static_cast<std::size_t>(prev_index)];
        NoGradGuard no_grad;
        Tensor raster = rasterize_frame(ctx.ego, ctx.ego_prev, now.agents, prev.agents,
                                        ctx.scene.map, cfg_);
        return model_.forward(raster);
    }

private:
    const Model& model_;
    RasterConfig cfg_;
};

/// Replays the logged ego trajectory (transformed into the current ego frame).
class ReplayPolicy : public Policy {
public:
    explicit ReplayPolicy(int horizon = 12) : horizon_(horizon) {}

    Tensor plan(const RolloutContext& ctx) override {
        Tensor out(Shape{horizon_, 3});
        const auto& frames = ctx.scene.frames;
        const double c = std::cos(ctx.ego.yaw), s = std::sin(ctx.ego.yaw);
        for (int k = 0; k < horizon_; ++k) {
            const std::size_t idx =
                std::min(frames.size() - 1, static_cast<std::size_t>(ctx.frame_index + 1 + k));
            const AgentState& target = frames[idx].ego;
            const Vec2 d = target.centroid - ctx.ego.centroid;
            out.data()[k * 3 + 0] = c * d.x + s * d.y;
            out.data()[k * 3 + 1] = -s * d.x + c * d.y;
            out.data()[k * 3 + 2] = ssn::wrap_angle(target.yaw - ctx.ego.yaw);
        }
        return out;
    }

private:
    int horizon_;
};

/// Continues the current velocity vector; never brakes or steers.
class ConstantVelocityPolicy : public Policy {
public:
    explicit ConstantVelocityPolicy(int horizon = 12) : horizon_(horizon) {}

    Tensor plan(const RolloutContext& ctx) override {
        Tensor out(Shape{horizon_, 3});
        const double c = std::cos(ctx.ego.yaw), s = std::sin(ctx.ego.yaw);
        const double vf = c * ctx.ego.velocity.x + s * ctx.ego.velocity.y;
        const double vl = -s * ctx.ego.velocity.x + c * ctx.ego.velocity.y;
        for (int k = 0; k < horizon_; ++k) {
            out.data()[k * 3 + 0] = vf * kFrameDt * (k + 1);
            out.data()[k * 3 + 1] = vl * kFrameDt * (k + 1);
            out.data()[k * 3 + 2] = 0.0;
        }
        return out;
    }

private:
    int horizon_;
};

/// Zero displacement: the ego parks in place.
class StationaryPolicy : public Policy {
public:
    explicit StationaryPolicy(int horizon = 12) : horizon_(horizon) {}
    Tensor plan(const RolloutContext&) override { return Tensor::zeros({horizon_, 3}); }

private:
    int horizon_;
};

// ---------------------------------------------------------------------------
// Rollout
// ---------------------------------------------------------------------------

struct RolloutState {
    AgentState ego;
    AgentState ego_prev;
    int frame_index = 0;
    std::set<int> in_contact;  // track ids currently overlapping (hysteresis)
};

inline RolloutState init_rollout(const Scene& scene, int history_steps = 1) {
    if (static_cast<int>(scene.frames.size()) <= history_steps)
        throw std::invalid_argument("init_rollout: scene shorter than history");
    RolloutState state;
    state.frame_index = history_steps;
    state.ego = scene.frames[static_cast<std::size_t>(history_steps)].ego;
    state.ego_prev = scene.frames[static_cast<std::size_t>(history_steps - 1)].ego;
    return state;
}

/// One closed-loop step: replan, execute the first waypoint, advance the
/// logged world, and report any new contacts (one event per contact episode).
inline std::vector<CollisionEvent> step_closed_loop(Policy& policy, const Scene& scene,
                                                    RolloutState& state,
                                                    const RasterConfig& cfg) {
    RolloutContext ctx{scene, state.frame_index, state.ego, state.ego_prev};
    Tensor plan = policy.plan(ctx);
    if (plan.dim() != 2 || plan.extent(1) != 3 || plan.extent(0) < 1)
        throw std::invalid_argument("step_closed_loop: policy must emit [horizon x 3], got " +
                                    shape_str(plan.shape()));
    const Vec2 step_ego{plan(0, 0), plan(0, 1)};
    const double dyaw = plan(0, 2);

    AgentState next = state.ego;
    const Vec2 disp = rotate(step_ego, state.ego.yaw);
    next.centroid = state.ego.centroid + disp;
    next.yaw = ssn::wrap_angle(state.ego.yaw + dyaw);
    next.velocity = disp * (1.0 / kFrameDt);
    state.ego_prev = state.ego;
    state.ego = next;
    ++state.frame_index;

    std::vector<CollisionEvent> events;
    const Frame& frame = scene.frames[static_cast<std::size_t>(state.frame_index)];
    const OrientedBox ego_box = agent_box(state.ego);
    for (const AgentState& agent : frame.agents) {
        const bool overlap = obb_intersect(ego_box, agent_box(agent));
        if (!overlap) {
            state.in_contact.erase(agent.track_id);
            continue;
        }
        if (state.in_contact.count(agent.track_id)) continue;
        state.in_contact.insert(agent.track_id);
        const Vec2 d = agent.centroid - state.ego.centroid;
        const double c = std::cos(state.ego.yaw), s = std::sin(state.ego.yaw);
        CollisionEvent e;
        e.scene_id = scene.scene_id;
        e.frame_index = state.frame_index;
        e.other_track_id = agent.track_id;
        e.contact_bearing = ssn::wrap_angle(std::atan2(-s * d.x + c * d.y, c * d.x + s * d.y));
        e.cls = classify_collision(e.contact_bearing);
        events.push_back(e);
    }
    return events;
}

struct RolloutResult {
    std::vector<CollisionEvent> events;
    std::int64_t frames_simulated = 0;
};

inline RolloutResult rollout_scene(Policy& policy, const Scene& scene, const RasterConfig& cfg) {
    RolloutResult result;
    RolloutState state = init_rollout(scene, cfg.history_steps);
    while (state.frame_index + 1 < static_cast<int>(scene.frames.size())) {
        auto events = step_closed_loop(policy, scene, state, cfg);
        result.events.insert(result.events.end(), events.begin(), events.end());
    }
    result.frames_simulated = static_cast<std::int64_t>(scene.frames.size());
    return result;
}

/// Rollout over many scenes. `make_policy` builds one policy per worker so
/// scene-parallel evaluation stays safe; results merge in scene order
/// regardless of the job count.
inline RolloutResult rollout_scenes(
    const std::function<std::unique_ptr<Policy>()>& make_policy, std::span<const Scene> scenes,
    const RasterConfig& cfg, int jobs = 1) {
    std::vector<RolloutResult> per_scene(scenes.size());
    if (jobs <= 1) {
        auto policy = make_policy();
        for (std::size_t i = 0; i < scenes.size(); ++i)
            per_scene[i] = rollout_scene(*policy, scenes[i], cfg);
    } else {
        std::vector<std::thread> workers;
        std::size_t next = 0;
        std::mutex mutex;
        for (int w = 0; w < jobs; ++w) {
            workers.emplace_back([&] {
                auto policy = make_policy();
                for (;;) {
                    std::size_t index;
                    {
                        std::lock_guard<std::mutex> lock(mutex);
                        if (next >= scenes.size()) return;
                        index = next++;
                    }
                    per_scene[index] = rollout_scene(*policy, scenes[index], cfg);
                }
            });
        }
        for (auto& t : workers) t.join();
    }
    RolloutResult merged;
    for (const RolloutResult& r : per_scene) {
        merged.events.insert(merged.events.end(), r.events.begin(), r.events.end());
        merged.frames_simulated += r.frames_simulated;
    }
    return merged;
}

}  // namespace ssn
