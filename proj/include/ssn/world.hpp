// Synthetic driving world: the Scene/Frame/Agent data model, scripted
// scenario generation, the ego-centric 5-channel rasterizer, and JSON-lines
// dataset persistence.
//
// Every float stored in a Scene is quantized to 9 significant decimal digits
// at generation time, which makes the 9-digit dataset serialization an exact
// round trip.
#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ssn/common.hpp"
#include "ssn/tensor.hpp"

namespace ssn {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
};

inline Vec2 rotate(Vec2 v, double yaw) {
    const double c = std::cos(yaw), s = std::sin(yaw);
    return {c * v.x - s * v.y, s * v.x + c * v.y};
}

enum class AgentLabel { vehicle, cyclist, pedestrian };

inline const char* to_string(AgentLabel label) {
    switch (label) {
        case AgentLabel::vehicle: return "vehicle";
        case AgentLabel::cyclist: return "cyclist";
        default: return "pedestrian";
    }
}

inline AgentLabel agent_label_from_string(const std::string& s) {
    if (s == "vehicle") return AgentLabel::vehicle;
    if (s == "cyclist") return AgentLabel::cyclist;
    if (s == "pedestrian") return AgentLabel::pedestrian;
    throw ParseError("unknown agent label '" + s + "'");
}

struct AgentState {
    int track_id = 0;
    Vec2 centroid{};
    double yaw = 0.0;      // (-pi, pi]
    double length = 4.5;   // extent along heading, > 0
    double width = 2.0;    // extent across heading, > 0
    Vec2 velocity{};
    AgentLabel label = AgentLabel::vehicle;
};

struct Frame {
    double timestamp = 0.0;  // seconds on the 10 Hz grid
    AgentState ego;
    std::vector<AgentState> agents;
};

struct SemanticMap {
    std::vector<std::vector<Vec2>> drivable;  // simple polygons
    std::vector<std::vector<Vec2>> lanes;     // centerline polylines
};

struct Scene {
    int scene_id = 0;
    std::string host = "synth-000";
    std::vector<Frame> frames;
    SemanticMap map;
};

struct RasterConfig {
    int height = 64;
    int width = 64;
    double resolution = 0.25;  // meters per pixel
    int history_steps = 1;
};

// ---------------------------------------------------------------------------
// Scenario generation
// ---------------------------------------------------------------------------

enum class ScenarioKind { straight, lead_brake, cut_in, crossing, free_drive };

inline const char* to_string(ScenarioKind kind) {
    switch (kind) {
        case ScenarioKind::straight: return "straight";
        case ScenarioKind::lead_brake: return "lead-brake";
        case ScenarioKind::cut_in: return "cut-in";
        case ScenarioKind::crossing: return "crossing";
        default: return "free";
    }
}

inline ScenarioKind scenario_kind_from_string(const std::string& s) {
    if (s == "straight") return ScenarioKind::straight;
    if (s == "lead-brake") return ScenarioKind::lead_brake;
    if (s == "cut-in") return ScenarioKind::cut_in;
    if (s == "crossing") return ScenarioKind::crossing;
    if (s == "free") return ScenarioKind::free_drive;
    throw ParseError("unknown scenario kind '" + s + "'");
}

struct ScenarioParams {
    int frame_count = 250;  // 25 s at 10 Hz
};

inline constexpr double kFrameDt = 0.1;
inline constexpr double kLaneWidth = 3.5;

namespace detail {

// longitudinal profile: constant speed v0 until t_b, then uniform decel a
// down to v_min (default full stop); returns {distance traveled, speed}
inline std::pair<double, double> brake_profile(double v0, double t_b, double a, double t,
                                               double v_min = 0.0) {
    if (t <= t_b) return {v0 * t, v0};
    const double dv = v0 - v_min;
    const double t_stop = dv / a;
    const double tau = std::min(t - t_b, t_stop);
    double dist = v0 * t_b + v0 * tau - 0.5 * a * tau * tau;
    double speed = v0 - a * tau;
    if (t - t_b > t_stop) dist += v_min * (t - t_b - t_stop);
    return {dist, speed};
}

struct Script {
    int track_id = 0;
    double length = 4.5, width = 2.0;
    AgentLabel label = AgentLabel::vehicle;
    // fills position, yaw, velocity at time t
    std::function<void(double, Vec2&, double&, Vec2&)> at;
};

inline AgentState rounded_state(const Script& s, double t) {
    Vec2 pos, vel;
    double yaw = 0.0;
    s.at(t, pos, yaw, vel);
    AgentState a;
    a.track_id = s.track_id;
    a.centroid = {round_sig(pos.x), round_sig(pos.y)};
    a.yaw = round_sig(wrap_angle(yaw));
    a.length = round_sig(s.length);
    a.width = round_sig(s.width);
    a.velocity = {round_sig(vel.x), round_sig(vel.y)};
    a.label = s.label;
    return a;
}

inline Script const_velocity_script(int id, Vec2 start, double yaw, double speed,
                                    double length = 4.5, double width = 2.0,
                                    AgentLabel label = AgentLabel::vehicle) {
    Script s;
    s.track_id = id;
    s.length = length;
    s.width = width;
    s.label = label;
    const Vec2 dir = rotate({1.0, 0.0}, yaw);
    s.at = [=](double t, Vec2& pos, double& y, Vec2& vel) {
        pos = start + dir * (speed * t);
        y = yaw;
        vel = dir * speed;
    };
    return s;
}

inline std::vector<Vec2> rect_polygon(double x0, double x1, double y0, double y1) {
    return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
}

}  // namespace detail

/// Deterministic scripted scene for the given kind and seed.
///   straight    ego cruises; a follower trails in-lane plus parallel traffic
///   lead-brake  the lead vehicle brakes to a stop; the logged ego brakes
///               safely, but a constant-velocity ego is guaranteed to make
///               front contact
///   cut-in      a neighbor merges closely in front and slows (shallow-angle
///               contact geometry for a non-yielding ego)
///   crossing    a crossing vehicle drives through the ego's starting spot: a
///               stationary ego is guaranteed side contact
///   free        no interaction with the ego lane; replaying the log is
///               collision-free
inline Scene generate_scenario(ScenarioKind kind, std::uint64_t seed,
                               const ScenarioParams& params = {}) {
    Rng rng = Rng(seed).fork(static_cast<std::uint64_t>(kind) + 101);
    Scene scene;
    scene.scene_id = static_cast<int>(seed & 0x7fffffff);
    scene.host = "synth-000";

    detail::Script ego;
    std::vector<detail::Script> agents;
    const double horizon_s = params.frame_count * kFrameDt;
    double road_len = 40.0;

    switch (kind) {
        case ScenarioKind::straight: {
            const double v_e = rng.uniform(8.0, 12.0);
            ego = detail::const_velocity_script(0, {0.0, 0.0}, 0.0, v_e);
            const double gap_back = rng.uniform(10.0, 14.0);
            agents.push_back(
                detail::const_velocity_script(1, {-gap_back, 0.0}, 0.0, v_e));
            agents.push_back(detail::const_velocity_script(
                2, {rng.uniform(12.0, 20.0), kLaneWidth}, 0.0, v_e + rng.uniform(-2.0, 2.0)));
            agents.push_back(detail::const_velocity_script(
                3, {rng.uniform(60.0, 90.0), -kLaneWidth}, kPi, rng.uniform(8.0, 12.0)));
            agents.push_back(detail::const_velocity_script(
                4, {rng.uniform(5.0, 12.0), -2.8}, 0.0, rng.uniform(3.5, 5.0), 1.8, 0.6,
                AgentLabel::cyclist));
            road_len = v_e * horizon_s + 40.0;
            break;
        }
        case ScenarioKind::lead_brake: {
            const double v_e = rng.uniform(8.0, 12.0);
            const double headway = rng.uniform(1.6, 2.2);
            const double t_b = rng.uniform(2.0, 3.5);
            const double a_lead = rng.uniform(3.5, 5.0);
            const double lead_x0 = v_e * headway;
            detail::Script lead;
            lead.track_id = 1;
            lead.at = [=](double t, Vec2& pos, double& y, Vec2& vel) {
                auto [dist, speed] = detail::brake_profile(v_e, t_b, a_lead, t);
                pos = {lead_x0 + dist, 0.0};
                y = 0.0;
                vel = {speed, 0.0};
            };
            agents.push_back(lead);
            // logged ego: brake after a 0.4 s reaction so it stops >= 2 m short
            const double lead_stop = lead_x0 + v_e * t_b + v_e * v_e / (2.0 * a_lead);
            const double t_react = t_b + 0.4;
            const double margin = 4.5 + 2.0;
            const double avail = lead_stop - margin - v_e * t_react;
            const double a_ego = v_e * v_e / (2.0 * avail);
            ego.track_id = 0;
            ego.at = [=](double t, Vec2& pos, double& y, Vec2& vel) {
                auto [dist, speed] = detail::brake_profile(v_e, t_react, a_ego, t);
                pos = {dist, 0.0};
                y = 0.0;
                vel = {speed, 0.0};
            };
            agents.push_back(detail::const_velocity_script(
                2, {rng.uniform(8.0, 16.0), kLaneWidth}, 0.0, rng.uniform(8.0, 11.0)));
            road_len = lead_stop + 40.0;
            break;
        }
        case ScenarioKind::cut_in: {
            const double v_e = rng.uniform(8.0, 12.0);
            const double v_a = 0.9 * v_e;
            const double t1 = 1.0, t2 = 3.0;        // lateral merge window
            const double t3 = 3.5;                  // agent starts slowing
            const double a_agent = 2.0;
            const double v_a_min = 0.6 * v_a;
            const double x_a0 = 1.5 * v_e;
            detail::Script merger;
            merger.track_id = 1;
            merger.at = [=](double t, Vec2& pos, double& y, Vec2& vel) {
                auto [dist, speed] = detail::brake_profile(v_a, t3, a_agent, t, v_a_min);
                double lat = kLaneWidth, lat_v = 0.0;
                if (t >= t2) {
                    lat = 0.0;
                } else if (t > t1) {
                    const double u = (t - t1) / (t2 - t1);
                    const double blend = 3.0 * u * u - 2.0 * u * u * u;
                    lat = kLaneWidth * (1.0 - blend);
                    lat_v = -kLaneWidth * (6.0 * u - 6.0 * u * u) / (t2 - t1);
                }
                pos = {x_a0 + dist, lat};
                y = std::atan2(lat_v, speed);
                vel = {speed, lat_v};
            };
            agents.push_back(merger);
            // logged ego: ease off once the merge completes
            const double t_dec = t2 + 0.8;
            const double v_e_min = 0.5 * v_e;
            ego.track_id = 0;
            ego.at = [=](double t, Vec2& pos, double& y, Vec2& vel) {
                auto [dist, speed] = detail::brake_profile(v_e, t_dec, 2.5, t, v_e_min);
                pos = {dist, 0.0};
                y = 0.0;
                vel = {speed, 0.0};
            };
            road_len = v_e * horizon_s + 40.0;
            break;
        }
        case ScenarioKind::crossing: {
            const double v_e = rng.uniform(6.0, 9.0);
            ego = detail::const_velocity_script(0, {0.0, 0.0}, 0.0, v_e);
            const double x_c = rng.uniform(0.4, 1.2);
            const double y0 = -rng.uniform(15.0, 20.0);
            const double v_c = rng.uniform(5.0, 7.0);
            agents.push_back(
                detail::const_velocity_script(1, {x_c, y0}, kPi / 2.0, v_c));
            agents.push_back(detail::const_velocity_script(
                2, {rng.uniform(25.0, 40.0), kLaneWidth}, 0.0, rng.uniform(7.0, 10.0)));
            road_len = v_e * horizon_s + 40.0;
            scene.map.drivable.push_back(
                detail::rect_polygon(x_c - 1.5 * kLaneWidth, x_c + 1.5 * kLaneWidth, -35.0,
                                     35.0));
            scene.map.lanes.push_back({{x_c, -35.0}, {x_c, 35.0}});
            break;
        }
        case ScenarioKind::free_drive: {
            const double v_e = rng.uniform(8.0, 12.0);
            ego = detail::const_velocity_script(0, {0.0, 0.0}, 0.0, v_e);
            agents.push_back(detail::const_velocity_script(
                1, {rng.uniform(10.0, 25.0), kLaneWidth}, 0.0, v_e + rng.uniform(-1.0, 1.0)));
            agents.push_back(detail::const_velocity_script(
                2, {rng.uniform(70.0, 110.0), -kLaneWidth}, kPi, rng.uniform(8.0, 12.0)));
            road_len = v_e * horizon_s + 40.0;
            break;
        }
    }

    scene.map.drivable.insert(scene.map.drivable.begin(),
                              detail::rect_polygon(-30.0, road_len, -1.5 * kLaneWidth,
                                                   1.5 * kLaneWidth));
    scene.map.lanes.push_back({{-30.0, 0.0}, {road_len, 0.0}});
    scene.map.lanes.push_back({{-30.0, kLaneWidth}, {road_len, kLaneWidth}});
    scene.map.lanes.push_back({{-30.0, -kLaneWidth}, {road_len, -kLaneWidth}});
    for (auto& poly : scene.map.drivable)
        for (Vec2& p : poly) p = {round_sig(p.x), round_sig(p.y)};
    for (auto& lane : scene.map.lanes)
        for (Vec2& p : lane) p = {round_sig(p.x), round_sig(p.y)};

    scene.frames.reserve(static_cast<std::size_t>(params.frame_count));
    for (int k = 0; k < params.frame_count; ++k) {
        const double t = k * kFrameDt;
        Frame frame;
        frame.timestamp = round_sig(t);
        frame.ego = detail::rounded_state(ego, t);
        for (const auto& script : agents) frame.agents.push_back(detail::rounded_state(script, t));
        scene.frames.push_back(std::move(frame));
    }
    return scene;
}

/// Ordered scenario mix; per-scene seeds derived from `seed` and the index.
inline std::vector<Scene> generate_mix(
    const std::vector<std::pair<ScenarioKind, int>>& mix, std::uint64_t seed,
    const ScenarioParams& params = {}) {
    std::vector<Scene> scenes;
    Rng base(seed);
    int index = 0;
    for (const auto& [kind, count] : mix) {
        for (int i = 0; i < count; ++i, ++index) {
            Scene s = generate_scenario(kind, base.fork(static_cast<std::uint64_t>(index)).next_u64(),
                                        params);
            s.scene_id = index;
            scenes.push_back(std::move(s));
        }
    }
    return scenes;
}

// ---------------------------------------------------------------------------
// Rasterization
// ---------------------------------------------------------------------------

/// Float pixel coordinates (row, col) of world point `p` in the ego-centric
/// raster: ego centroid at (H/2, W/2), heading toward decreasing row.
inline std::pair<double, double> world_to_raster_f(const AgentState& ego,
                                                   const RasterConfig& cfg, Vec2 p) {
    const Vec2 d = p - ego.centroid;
    const double c = std::cos(ego.yaw), s = std::sin(ego.yaw);
    const double forward = c * d.x + s * d.y;
    const double left = -s * d.x + c * d.y;
    return {cfg.height / 2.0 - forward / cfg.resolution,
            cfg.width / 2.0 - left / cfg.resolution};
}

/// Integer pixel (row, col); may land outside bounds, callers clip.
inline std::pair<int, int> world_to_raster(const AgentState& ego, const RasterConfig& cfg,
                                           Vec2 p) {
    auto [row, col] = world_to_raster_f(ego, cfg, p);
    return {static_cast<int>(std::floor(row)), static_cast<int>(std::floor(col))};
}

namespace detail {

inline Vec2 raster_center_to_world(const AgentState& ego, const RasterConfig& cfg, int row,
                                   int col) {
    const double forward = (cfg.height / 2.0 - (row + 0.5)) * cfg.resolution;
    const double left = (cfg.width / 2.0 - (col + 0.5)) * cfg.resolution;
    return ego.centroid + rotate({forward, left}, ego.yaw);
}

inline void fill_agent_box(double* channel, const AgentState& ego, const RasterConfig& cfg,
                           const AgentState& agent) {
    const double hl = agent.length / 2.0, hw = agent.width / 2.0;
    double min_r = 1e30, max_r = -1e30, min_c = 1e30, max_c = -1e30;
    for (int cx = -1; cx <= 1; cx += 2) {
        for (int cy = -1; cy <= 1; cy += 2) {
            const Vec2 corner = agent.centroid + rotate({cx * hl, cy * hw}, agent.yaw);
            auto [r, c] = world_to_raster_f(ego, cfg, corner);
            min_r = std::min(min_r, r);
            max_r = std::max(max_r, r);
            min_c = std::min(min_c, c);
            max_c = std::max(max_c, c);
        }
    }
    const int r0 = std::max(0, static_cast<int>(std::floor(min_r)) - 1);
    const int r1 = std::min(cfg.height - 1, static_cast<int>(std::ceil(max_r)) + 1);
    const int c0 = std::max(0, static_cast<int>(std::floor(min_c)) - 1);
    const int c1 = std::min(cfg.width - 1, static_cast<int>(std::ceil(max_c)) + 1);
    const double cos_a = std::cos(agent.yaw), sin_a = std::sin(agent.yaw);
    for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
            const Vec2 p = raster_center_to_world(ego, cfg, r, c);
            const Vec2 d = p - agent.centroid;
            const double bf = cos_a * d.x + sin_a * d.y;
            const double bl = -sin_a * d.x + cos_a * d.y;
            if (std::abs(bf) <= hl && std::abs(bl) <= hw)
                channel[static_cast<std::int64_t>(r) * cfg.width + c] = 1.0;
        }
    }
}

inline bool point_in_polygon(const std::vector<Vec2>& poly, Vec2 p) {
    bool inside = false;
    const std::size_t n = poly.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        if ((poly[i].y > p.y) != (poly[j].y > p.y) &&
            p.x < (poly[j].x - poly[i].x) * (p.y - poly[i].y) / (poly[j].y - poly[i].y) +
                      poly[i].x)
            inside = !inside;
    }
    return inside;
}

}  // namespace detail

/// Binary 5-channel raster around `ego_t`: {ego t, ego t-1, agents t,
/// agents t-1, drivable area}.
inline Tensor rasterize_frame(const AgentState& ego_t, const AgentState& ego_prev,
                              std::span<const AgentState> agents_t,
                              std::span<const AgentState> agents_prev, const SemanticMap& map,
                              const RasterConfig& cfg) {
    Tensor out(Shape{5, cfg.height, cfg.width});
    const std::int64_t plane = static_cast<std::int64_t>(cfg.height) * cfg.width;
    double* data = out.data();
    detail::fill_agent_box(data, ego_t, cfg, ego_t);
    detail::fill_agent_box(data + plane, ego_t, cfg, ego_prev);
    for (const AgentState& a : agents_t) detail::fill_agent_box(data + 2 * plane, ego_t, cfg, a);
    for (const AgentState& a : agents_prev)
        detail::fill_agent_box(data + 3 * plane, ego_t, cfg, a);
    double* drivable = data + 4 * plane;
    for (int r = 0; r < cfg.height; ++r) {
        for (int c = 0; c < cfg.width; ++c) {
            const Vec2 p = detail::raster_center_to_world(ego_t, cfg, r, c);
            for (const auto& poly : map.drivable) {
                if (detail::point_in_polygon(poly, p)) {
                    drivable[static_cast<std::int64_t>(r) * cfg.width + c] = 1.0;
                    break;
                }
            }
        }
    }
    return out;
}

/// Raster for a logged frame of a scene.
inline Tensor rasterize(const Scene& scene, int frame_index, const RasterConfig& cfg) {
    if (frame_index < cfg.history_steps ||
        frame_index >= static_cast<int>(scene.frames.size()))
        throw std::out_of_range("rasterize: frame " + std::to_string(frame_index) +
                                " out of range [" + std::to_string(cfg.history_steps) + ", " +
                                std::to_string(scene.frames.size()) + ")");
    const Frame& now = scene.frames[static_cast<std::size_t>(frame_index)];
    const Frame& prev = scene.frames[static_cast<std::size_t>(frame_index - cfg.history_steps)];
    return rasterize_frame(now.ego, prev.ego, now.agents, prev.agents, scene.map, cfg);
}

// ---------------------------------------------------------------------------
// Dataset persistence: JSON lines, one scene per line, floats at 9 significant
// digits, unknown keys ignored on read.
// ---------------------------------------------------------------------------

namespace detail {

inline void append_num(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    out += buf;
}

inline void append_agent(std::string& out, const AgentState& a, bool with_identity) {
    out += '{';
    if (with_identity) {
        out += "\"id\":" + std::to_string(a.track_id) + ",\"label\":\"";
        out += to_string(a.label);
        out += "\",";
    }
    out += "\"cx\":";
    append_num(out, a.centroid.x);
    out += ",\"cy\":";
    append_num(out, a.centroid.y);
    out += ",\"yaw\":";
    append_num(out, a.yaw);
    out += ",\"len\":";
    append_num(out, a.length);
    out += ",\"wid\":";
    append_num(out, a.width);
    out += ",\"vx\":";
    append_num(out, a.velocity.x);
    out += ",\"vy\":";
    append_num(out, a.velocity.y);
    out += '}';
}

inline void append_polyline_list(std::string& out, const std::vector<std::vector<Vec2>>& lists) {
    out += '[';
    for (std::size_t i = 0; i < lists.size(); ++i) {
        if (i) out += ',';
        out += '[';
        for (std::size_t j = 0; j < lists[i].size(); ++j) {
            if (j) out += ',';
            out += '[';
            append_num(out, lists[i][j].x);
            out += ',';
            append_num(out, lists[i][j].y);
            out += ']';
        }
        out += ']';
    }
    out += ']';
}

inline AgentState agent_from_json(const nlohmann::json& j, bool with_identity) {
    AgentState a;
    if (with_identity) {
        a.track_id = j.at("id").get<int>();
        a.label = agent_label_from_string(j.at("label").get<std::string>());
    }
    a.centroid = {j.at("cx").get<double>(), j.at("cy").get<double>()};
    a.yaw = j.at("yaw").get<double>();
    a.length = j.at("len").get<double>();
    a.width = j.at("wid").get<double>();
    a.velocity = {j.at("vx").get<double>(), j.at("vy").get<double>()};
    return a;
}

}  // namespace detail

inline std::string scene_to_jsonl(const Scene& scene) {
    std::string out;
    out.reserve(scene.frames.size() * 256);
    out += "{\"scene_id\":" + std::to_string(scene.scene_id) + ",\"host\":\"" + scene.host +
           "\",\"frames\":[";
    for (std::size_t i = 0; i < scene.frames.size(); ++i) {
        const Frame& f = scene.frames[i];
        if (i) out += ',';
        out += "{\"t\":";
        detail::append_num(out, f.timestamp);
        out += ",\"ego\":";
        detail::append_agent(out, f.ego, false);
        out += ",\"agents\":[";
        for (std::size_t a = 0; a < f.agents.size(); ++a) {
            if (a) out += ',';
            detail::append_agent(out, f.agents[a], true);
        }
        out += "]}";
    }
    out += "],\"map\":{\"polygons\":";
    detail::append_polyline_list(out, scene.map.drivable);
    out += ",\"lanes\":";
    detail::append_polyline_list(out, scene.map.lanes);
    out += "}}";
    return out;
}

inline Scene scene_from_json(const nlohmann::json& j) {
    Scene scene;
    scene.scene_id = j.at("scene_id").get<int>();
    scene.host = j.value("host", std::string("synth-000"));
    for (const auto& fj : j.at("frames")) {
        Frame f;
        f.timestamp = fj.at("t").get<double>();
        f.ego = detail::agent_from_json(fj.at("ego"), false);
        if (fj.contains("agents"))
            for (const auto& aj : fj["agents"])
                f.agents.push_back(detail::agent_from_json(aj, true));
        scene.frames.push_back(std::move(f));
    }
    if (j.contains("map")) {
        auto read_lists = [](const nlohmann::json& lists) {
            std::vector<std::vector<Vec2>> out;
            for (const auto& lj : lists) {
                std::vector<Vec2> pts;
                for (const auto& pj : lj)
                    pts.push_back({pj.at(0).get<double>(), pj.at(1).get<double>()});
                out.push_back(std::move(pts));
            }
            return out;
        };
        if (j["map"].contains("polygons")) scene.map.drivable = read_lists(j["map"]["polygons"]);
        if (j["map"].contains("lanes")) scene.map.lanes = read_lists(j["map"]["lanes"]);
    }
    return scene;
}

inline void save_dataset(std::span<const Scene> scenes, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_dataset: cannot open '" + path + "' for writing");
    for (const Scene& s : scenes) out << scene_to_jsonl(s) << '\n';
    if (!out) throw std::runtime_error("save_dataset: write to '" + path + "' failed");
}

inline std::vector<Scene> load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_dataset: cannot open '" + path + "'");
    std::vector<Scene> scenes;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(line_no, std::string("malformed scene JSON: ") + e.what());
        }
        try {
            scenes.push_back(scene_from_json(j));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(line_no, std::string("bad scene structure: ") + e.what());
        } catch (const ParseError& e) {
            throw ParseError(line_no, e.what());
        }
    }
    return scenes;
}

}  // namespace ssn
