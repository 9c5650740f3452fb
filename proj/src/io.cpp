/*
 * Copyright 2026 The semland Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "semland/io.hpp"

#include <fstream>
#include <sstream>

namespace semland::io {

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    const auto it = j.find(key);
    return it == j.end() ? fallback : it->template get<T>();
}

// Wraps nlohmann type/key errors so callers see one exception family.
template <typename F>
auto guarded(const char* what, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw SchemaError(std::string(what) + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw SchemaError(std::string(what) + ": " + e.what());
    }
}

json state_json(const State& s) { return json{{"p", to_json(s.p)}, {"v", to_json(s.v)}, {"att", to_json(s.att)}}; }

State state_from(const json& j) {
    State s;
    s.p = vec3_from(j.at("p"));
    if (j.contains("v")) s.v = vec3_from(j.at("v"));
    if (j.contains("att")) s.att = vec3_from(j.at("att"));
    return s;
}

}  // namespace

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return json::parse(ss.str());
    } catch (const json::parse_error& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

json to_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d vec3_from(const json& j) {
    if (!j.is_array() || j.size() != 3) throw SchemaError("expected a 3-vector, got " + j.dump());
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json to_json(const AxisBox& box) { return json{{"lo", to_json(box.lo)}, {"hi", to_json(box.hi)}}; }

AxisBox box_from(const json& j) {
    AxisBox b{vec3_from(j.at("lo")), vec3_from(j.at("hi"))};
    if (!b.valid()) throw SchemaError("box with lo > hi: " + j.dump());
    return b;
}

json to_json(const Polytope& poly) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < poly.rows(); ++i) {
        rows.push_back(json{{"a", json::array({poly.A(i, 0), poly.A(i, 1), poly.A(i, 2)})}, {"b", poly.b(i)}});
    }
    return rows;
}

json to_json(const UnsafeRegion& r) {
    return json{{"box", to_json(r.box)},
                {"class", r.semantic_class},
                {"buffer", r.buffer},
                {"dynamic", r.is_dynamic},
                {"created_at", r.created_at}};
}

UnsafeRegion unsafe_from(const json& j) {
    return guarded("unsafe region", [&] {
        UnsafeRegion r;
        r.box = box_from(j.at("box"));
        r.semantic_class = get_or<std::string>(j, "class", "");
        r.buffer = get_or(j, "buffer", 0.0);
        r.is_dynamic = get_or(j, "dynamic", false);
        r.created_at = get_or(j, "created_at", 0.0);
        if (r.buffer < 0.0) throw SchemaError("negative buffer");
        return r;
    });
}

json to_json(const Corridor& c) {
    json boxes = json::array();
    for (const auto& b : c.boxes) boxes.push_back(to_json(b));
    return boxes;
}

Corridor corridor_from(const json& j) {
    return guarded("corridor", [&] {
        if (!j.is_array() || j.empty()) throw SchemaError("corridor must be a non-empty array of boxes");
        Corridor c;
        for (const auto& b : j) c.boxes.push_back(box_from(b));
        return c;
    });
}

json to_json(const ReferenceTrajectory& traj) {
    json samples = json::array();
    for (const auto& s : traj.samples) {
        samples.push_back(json{{"t", s.t}, {"p", to_json(s.p)}, {"yaw", s.yaw}});
    }
    json boxes = json::array();
    for (const auto& b : traj.boxes) boxes.push_back(to_json(b));
    return json{{"cost", traj.cost}, {"samples", samples}, {"boxes", boxes}};
}

ReferenceTrajectory trajectory_from(const json& j) {
    return guarded("trajectory", [&] {
        ReferenceTrajectory t;
        t.cost = get_or(j, "cost", 0.0);
        for (const auto& s : j.at("samples")) {
            t.samples.push_back(RefSample{s.at("t").get<double>(), vec3_from(s.at("p")), get_or(s, "yaw", 0.0)});
        }
        if (j.contains("boxes")) {
            for (const auto& b : j.at("boxes")) t.boxes.push_back(box_from(b));
        }
        return t;
    });
}

json to_json(const SafetySpec& spec) {
    return json{{"is_dynamic", spec.is_dynamic},     {"z_min", spec.z_min},
                {"buffer_radius", spec.buffer_radius}, {"matched_class", spec.matched_class},
                {"source", to_string(spec.source)},  {"issued_at", spec.issued_at}};
}

json to_json(const KnowledgeEntry& e) {
    return json{{"class_name", e.class_name},
                {"keywords", e.keywords},
                {"is_dynamic", e.is_dynamic},
                {"min_safe_altitude", e.min_safe_altitude},
                {"buffer_radius", e.buffer_radius},
                {"text", e.text}};
}

KnowledgeEntry knowledge_entry_from(const json& j) {
    return guarded("knowledge entry", [&] {
        KnowledgeEntry e;
        e.class_name = j.at("class_name").get<std::string>();
        e.keywords = get_or(j, "keywords", std::vector<std::string>{});
        e.is_dynamic = j.at("is_dynamic").get<bool>();
        e.min_safe_altitude = get_or(j, "min_safe_altitude", 0.0);
        e.buffer_radius = get_or(j, "buffer_radius", 0.0);
        e.text = get_or<std::string>(j, "text", "");
        if (e.min_safe_altitude < 0.0 || e.buffer_radius < 0.0) {
            throw SchemaError("negative altitude or buffer in entry '" + e.class_name + "'");
        }
        return e;
    });
}

std::vector<KnowledgeEntry> load_kb(const std::filesystem::path& path) {
    const json j = read_json(path);
    if (!j.is_array()) throw SchemaError(path.string() + ": knowledge base must be a JSON array");
    std::vector<KnowledgeEntry> out;
    for (const auto& e : j) out.push_back(knowledge_entry_from(e));
    return out;
}

json to_json(const DynamicsParams& p) {
    return json{{"g", p.g},   {"thrust_min", p.thrust_min}, {"thrust_max", p.thrust_max}, {"rate_max", p.rate_max},
                {"dt", p.dt}, {"att_limit", p.att_limit},   {"tau_act", p.tau_act}};
}

DynamicsParams dynamics_from(const json& j) {
    return guarded("dynamics", [&] {
        DynamicsParams p;
        p.g = get_or(j, "g", p.g);
        p.thrust_min = get_or(j, "thrust_min", p.thrust_min);
        p.thrust_max = get_or(j, "thrust_max", p.thrust_max);
        p.rate_max = get_or(j, "rate_max", p.rate_max);
        p.dt = get_or(j, "dt", p.dt);
        p.att_limit = get_or(j, "att_limit", p.att_limit);
        p.tau_act = get_or(j, "tau_act", p.tau_act);
        if (!p.valid()) throw SchemaError("invalid dynamics parameters");
        return p;
    });
}

namespace {

json agent_json(const DynamicAgent& a) {
    json motion;
    if (a.motion.kind == AgentMotion::Kind::Waypoints) {
        json wps = json::array();
        for (const auto& w : a.motion.waypoints) wps.push_back(to_json(w));
        motion = json{{"kind", "waypoints"}, {"waypoints", wps}, {"loop", a.motion.loop}};
    } else {
        motion = json{{"kind", "random_walk"}, {"sigma", a.motion.sigma}, {"bounds", to_json(a.motion.bounds)}};
    }
    return json{{"class", a.class_name},
                {"p", to_json(a.p)},
                {"speed", a.speed},
                {"heading", a.heading},
                {"half_extent", to_json(a.half_extent)},
                {"motion", motion}};
}

DynamicAgent agent_from(const json& j) {
    DynamicAgent a;
    a.class_name = get_or<std::string>(j, "class", a.class_name);
    a.p = vec3_from(j.at("p"));
    a.speed = get_or(j, "speed", 0.0);
    a.heading = get_or(j, "heading", 0.0);
    if (j.contains("half_extent")) a.half_extent = vec3_from(j.at("half_extent"));
    if (a.speed < 0.0 || (a.half_extent.array() < 0.0).any()) throw SchemaError("bad agent speed or extent");
    if (j.contains("motion")) {
        const json& m = j.at("motion");
        const std::string kind = get_or<std::string>(m, "kind", "waypoints");
        if (kind == "waypoints") {
            a.motion.kind = AgentMotion::Kind::Waypoints;
            for (const auto& w : get_or(m, "waypoints", json::array())) a.motion.waypoints.push_back(vec3_from(w));
            a.motion.loop = get_or(m, "loop", false);
        } else if (kind == "random_walk") {
            a.motion.kind = AgentMotion::Kind::RandomWalk;
            a.motion.sigma = get_or(m, "sigma", a.motion.sigma);
            if (m.contains("bounds")) a.motion.bounds = box_from(m.at("bounds"));
        } else {
            throw SchemaError("unknown motion kind '" + kind + "'");
        }
    }
    return a;
}

json intercept_json(const Intercept& i) {
    return json{{"cross", {i.cross_lo, i.cross_hi}}, {"arrival", {i.arrival_lo, i.arrival_hi}},
                {"speed", {i.speed_lo, i.speed_hi}}, {"angle", {i.angle_lo, i.angle_hi}},
                {"overshoot", i.overshoot}};
}

Intercept intercept_from(const json& j) {
    Intercept i;
    auto range = [&](const char* key, double& lo, double& hi) {
        if (!j.contains(key)) return;
        const json& r = j.at(key);
        if (!r.is_array() || r.size() != 2) throw SchemaError(std::string("intercept.") + key + " must be [lo, hi]");
        lo = r[0].get<double>();
        hi = r[1].get<double>();
        if (lo > hi) throw SchemaError(std::string("intercept.") + key + " has lo > hi");
    };
    range("cross", i.cross_lo, i.cross_hi);
    range("arrival", i.arrival_lo, i.arrival_hi);
    range("speed", i.speed_lo, i.speed_hi);
    range("angle", i.angle_lo, i.angle_hi);
    i.overshoot = get_or(j, "overshoot", i.overshoot);
    return i;
}

}  // namespace

json to_json(const Scenario& s) {
    json statics = json::array();
    for (const auto& o : s.static_obstacles) statics.push_back(json{{"class", o.class_name}, {"box", to_json(o.box)}});
    json agents = json::array();
    for (const auto& a : s.agents) agents.push_back(agent_json(a));
    json j{{"schema_version", s.schema_version},
           {"name", s.name},
           {"world_bounds", to_json(s.world_bounds)},
           {"target", to_json(s.target)},
           {"start", state_json(s.start)},
           {"static_obstacles", statics},
           {"agents", agents},
           {"corridor", to_json(s.corridor)},
           {"perception_period", s.perception_period},
           {"perception_latency", s.perception_latency},
           {"camera", {{"fov_deg", s.camera.fov_deg}, {"range_m", s.camera.range_m}, {"tilt_deg", s.camera.tilt_deg}}},
           {"trial_timeout", s.trial_timeout},
           {"dt", s.dt},
           {"seed", s.seed},
           {"kb_buffer_overrides", s.kb_buffer_overrides},
           {"dynamics", to_json(s.dynamics)}};
    if (s.intercept) j["intercept"] = intercept_json(*s.intercept);
    return j;
}

Scenario scenario_from(const json& j) {
    return guarded("scenario", [&] {
        Scenario s;
        s.schema_version = j.at("schema_version").get<int>();
        if (s.schema_version != kScenarioSchemaVersion) {
            throw SchemaError("unsupported schema_version " + std::to_string(s.schema_version));
        }
        s.name = get_or<std::string>(j, "name", s.name);
        s.world_bounds = box_from(j.at("world_bounds"));
        s.target = vec3_from(j.at("target"));
        s.start = state_from(j.at("start"));
        for (const auto& o : get_or(j, "static_obstacles", json::array())) {
            s.static_obstacles.push_back(StaticObstacle{box_from(o.at("box")), get_or<std::string>(o, "class", "")});
        }
        for (const auto& a : get_or(j, "agents", json::array())) s.agents.push_back(agent_from(a));
        s.corridor = corridor_from(j.at("corridor"));
        s.perception_period = get_or(j, "perception_period", s.perception_period);
        s.perception_latency = get_or(j, "perception_latency", s.perception_latency);
        if (j.contains("camera")) {
            const json& c = j.at("camera");
            s.camera.fov_deg = get_or(c, "fov_deg", s.camera.fov_deg);
            s.camera.range_m = get_or(c, "range_m", s.camera.range_m);
            s.camera.tilt_deg = get_or(c, "tilt_deg", s.camera.tilt_deg);
        }
        s.trial_timeout = get_or(j, "trial_timeout", s.trial_timeout);
        s.dt = get_or(j, "dt", s.dt);
        s.seed = get_or<std::uint64_t>(j, "seed", 0);
        s.kb_buffer_overrides = get_or(j, "kb_buffer_overrides", std::map<std::string, double>{});
        if (j.contains("intercept")) s.intercept = intercept_from(j.at("intercept"));
        if (j.contains("dynamics")) s.dynamics = dynamics_from(j.at("dynamics"));
        if (s.perception_period <= 0.0 || s.perception_latency < 0.0 || s.dt <= 0.0 || s.trial_timeout <= 0.0) {
            throw SchemaError("timing fields must be positive");
        }
        if (s.dynamics.dt != s.dt) throw SchemaError("dynamics.dt must equal dt");
        return s;
    });
}

Scenario load_scenario(const std::filesystem::path& path) {
    const json j = read_json(path);
    try {
        return scenario_from(j);
    } catch (const SchemaError& e) {
        throw SchemaError(path.string() + ": " + e.what());
    }
}

void save_scenario(const Scenario& s, const std::filesystem::path& path) {
    write_text(path, to_json(s).dump(2) + "\n");
}

json to_json(const TrialResult& r) {
    json specs = json::array();
    for (const auto& s : r.spec_log) specs.push_back(to_json(s));
    return json{{"seed", r.seed},
                {"variant", to_string(r.variant)},
                {"success", r.success},
                {"close_call", r.close_call},
                {"collision", r.collision},
                {"touchdown", r.touchdown},
                {"touchdown_error", r.touchdown_error},
                {"duration", r.duration},
                {"min_agent_distance", r.min_agent_distance},
                {"replan_count", r.replan_count},
                {"specs", specs},
                {"trace", r.trace_path}};
}

}  // namespace semland::io
