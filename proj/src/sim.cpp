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

#include "semland/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

#include "json.hpp"

namespace semland {

namespace {

using Eigen::Vector3d;
using nlohmann::json;

constexpr double kTouchdownHeight = 0.02;
constexpr double kTouchdownSpeed = 0.2;
constexpr double kEscapeMargin = 0.15;
constexpr std::uint64_t kNoiseSeedOffset = 0x5eedULL;
constexpr std::uint64_t kWalkSeedOffset = 0x3a1cULL;

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

std::uint64_t mix(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

json vec_json(const Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }
json box_json(const AxisBox& b) { return json{{"lo", vec_json(b.lo)}, {"hi", vec_json(b.hi)}}; }

const char* verb_for(const std::string& cls) {
    if (cls == "person" || cls == "pedestrian") return " walking";
    if (cls == "car" || cls == "vehicle" || cls == "truck") return " driving";
    if (cls == "dog" || cls == "animal") return " running";
    if (cls == "bicycle" || cls == "cyclist") return " riding";
    return "";
}

std::string with_article(const std::string& noun) {
    const bool vowel = !noun.empty() && std::string("aeiou").find(noun.front()) != std::string::npos;
    return (vowel ? "an " : "a ") + noun;
}

// Nearest point of `box` to p, pulled inside by up to `margin` per axis.
Vector3d inner_closest(const AxisBox& box, const Vector3d& p, double margin) {
    Vector3d q;
    for (int d = 0; d < 3; ++d) {
        const double m = std::min(margin, 0.5 * (box.hi(d) - box.lo(d)));
        q(d) = std::clamp(p(d), box.lo(d) + m, box.hi(d) - m);
    }
    return q;
}

enum class Mode { Track, Hover, Escape };
const char* mode_name(Mode m) {
    switch (m) {
        case Mode::Track: return "track";
        case Mode::Hover: return "hover";
        case Mode::Escape: return "escape";
    }
    return "?";
}

// A detected agent: last observation plus the boxes currently applied.
struct ActiveRegion {
    int agent{-1};
    std::string semantic_class;
    AxisBox observed;                ///< footprint at confirmation
    Vector3d velocity{Vector3d::Zero()};
    double buffer{0.0};
    double z_min{0.0};
    double confirmed_at{0.0};

    UnsafeRegion region;
    std::optional<UnsafeRegion> floor;
};

constexpr double kReprojectStep = 0.25;  // m of drift before the applied boxes move

struct Pending {
    double capture_time{0.0};
    double available_at{0.0};
    std::optional<SafetySpec> spec;  ///< empty for geometric detections
    int agent{-1};
    bool geometric{false};
};

}  // namespace

const char* to_string(Variant v) {
    switch (v) {
        case Variant::Baseline: return "Baseline";
        case Variant::NoisyReasoner: return "NoisyReasoner";
        case Variant::Full: return "Full";
    }
    return "?";
}

Variant variant_from_string(const std::string& s) {
    if (s == "Baseline" || s == "baseline") return Variant::Baseline;
    if (s == "NoisyReasoner" || s == "noisy" || s == "noisyreasoner") return Variant::NoisyReasoner;
    if (s == "Full" || s == "full") return Variant::Full;
    throw std::invalid_argument("unknown variant '" + s + "'");
}

PipelineConfig PipelineConfig::defaults() {
    PipelineConfig c;
    c.planner.heuristic_weight = 2.0;
    c.mpc.qp_eps_abs = 1e-4;
    c.mpc.qp_eps_rel = 1e-4;
    c.mpc.sqp_max_iters = 3;
    c.mpc.sqp_tol = 1e-3;
    c.mpc.qp_max_iters = 1000;
    return c;
}

Vector3d camera_axis(const State& uav, const Camera& camera) {
    const double tilt = camera.tilt_deg * M_PI / 180.0;
    const double yaw = uav.att.z();
    return Vector3d(std::cos(yaw) * std::cos(tilt), std::sin(yaw) * std::cos(tilt), -std::sin(tilt));
}

bool in_view(const State& uav, const Camera& camera, const Vector3d& point) {
    const Vector3d d = point - uav.p;
    const double dist = d.norm();
    if (dist > camera.range_m) return false;
    if (dist < 1e-9) return true;
    const double c = std::clamp(d.dot(camera_axis(uav, camera)) / dist, -1.0, 1.0);
    return std::acos(c) <= 0.5 * camera.fov_deg * M_PI / 180.0;
}

Caption generate_caption(const World& world) {
    struct Seen {
        double dist;
        int order;
        std::string phrase;
    };
    std::vector<Seen> seen;
    const Scenario& sc = world.scenario;
    auto location = [&](const Vector3d& c) {
        return (c - sc.target).head<2>().norm() <= 5.0 ? " near the landing site" : " in the distance";
    };
    int order = 0;
    for (const auto& a : sc.agents) {
        if (in_view(world.uav, sc.camera, a.p)) {
            seen.push_back({(a.p - world.uav.p).norm(), order, with_article(a.class_name) + verb_for(a.class_name) + location(a.p)});
        }
        ++order;
    }
    for (const auto& o : sc.static_obstacles) {
        const Vector3d c = o.box.center();
        if (in_view(world.uav, sc.camera, c)) {
            seen.push_back({(c - world.uav.p).norm(), order, with_article(o.class_name) + location(c)});
        }
        ++order;
    }
    std::stable_sort(seen.begin(), seen.end(), [](const Seen& a, const Seen& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        return a.order < b.order;
    });
    Caption cap;
    cap.capture_time = world.time;
    if (seen.empty()) {
        cap.text = "an open area with no obstacles";
        return cap;
    }
    for (std::size_t i = 0; i < seen.size(); ++i) {
        if (i > 0) cap.text += " and ";
        cap.text += seen[i].phrase;
    }
    return cap;
}

void step_world(World& world, double dt, const DynamicsParams& params) {
    for (auto& a : world.scenario.agents) {
        const Vector3d before = a.p;
        if (a.motion.kind == AgentMotion::Kind::Waypoints) {
            double budget = a.speed * dt;
            while (budget > 0.0 && a.next_waypoint < a.motion.waypoints.size()) {
                const Vector3d goal = a.motion.waypoints[a.next_waypoint];
                const Vector3d d = goal - a.p;
                const double len = d.norm();
                if (len <= budget) {
                    a.p = goal;
                    budget -= len;
                    ++a.next_waypoint;
                    if (a.next_waypoint == a.motion.waypoints.size() && a.motion.loop) a.next_waypoint = 0;
                    if (len == 0.0 && a.motion.waypoints.size() == 1) break;
                } else {
                    a.p += d * (budget / len);
                    budget = 0.0;
                }
            }
        } else {
            std::normal_distribution<double> n01;
            a.heading += a.motion.sigma * n01(world.rng);
            a.p.x() += a.speed * dt * std::cos(a.heading);
            a.p.y() += a.speed * dt * std::sin(a.heading);
            // reflect at the bounds
            for (int d = 0; d < 2; ++d) {
                const double lo = a.motion.bounds.lo(d), hi = a.motion.bounds.hi(d);
                if (a.p(d) < lo) {
                    a.p(d) = 2 * lo - a.p(d);
                    a.heading = d == 0 ? M_PI - a.heading : -a.heading;
                } else if (a.p(d) > hi) {
                    a.p(d) = 2 * hi - a.p(d);
                    a.heading = d == 0 ? M_PI - a.heading : -a.heading;
                }
            }
        }
        a.velocity = (a.p - before) / dt;
    }
    world.uav = step(world.uav, clamp(world.u_last, params), params, dt);
    if (world.uav.p.z() < 0.0) {
        world.uav.p.z() = 0.0;
        world.uav.v.z() = std::max(0.0, world.uav.v.z());
    }
    world.time += dt;
}

Scenario randomize(const Scenario& base, std::uint64_t seed) {
    Scenario sc = base;
    sc.seed = seed;
    if (!sc.intercept || sc.agents.empty()) return sc;
    const Intercept& ic = *sc.intercept;
    std::mt19937_64 rng(mix(seed));
    const double frac = uniform(rng, ic.cross_lo, ic.cross_hi);
    const double arrival = uniform(rng, ic.arrival_lo, ic.arrival_hi);
    const double speed = uniform(rng, ic.speed_lo, ic.speed_hi);
    const double angle = uniform(rng, ic.angle_lo, ic.angle_hi);
    const double side = uniform01(rng) < 0.5 ? -1.0 : 1.0;

    DynamicAgent& agent = sc.agents.front();
    Eigen::Vector2d path = (sc.target - sc.start.p).head<2>();
    if (path.norm() < 1e-9) path = Eigen::Vector2d::UnitX();
    path.normalize();
    const Eigen::Vector2d normal(-path.y(), path.x());
    const Eigen::Vector2d dir = Eigen::Rotation2Dd(angle) * (-side * normal);
    const Eigen::Vector2d cross = sc.start.p.head<2>() + frac * (sc.target - sc.start.p).head<2>();
    const double z = agent.half_extent.z();
    const Eigen::Vector2d from = cross - dir * speed * arrival;
    const Eigen::Vector2d to = cross + dir * ic.overshoot;
    agent.p = Vector3d(from.x(), from.y(), z);
    agent.speed = speed;
    agent.motion.kind = AgentMotion::Kind::Waypoints;
    agent.motion.loop = false;
    agent.motion.waypoints = {Vector3d(to.x(), to.y(), z)};
    agent.next_waypoint = 0;
    return sc;
}

KnowledgeBase make_kb(const std::vector<KnowledgeEntry>& entries, const Scenario& scenario) {
    std::vector<KnowledgeEntry> copy = entries;
    for (auto& e : copy) {
        const auto it = scenario.kb_buffer_overrides.find(e.class_name);
        if (it != scenario.kb_buffer_overrides.end()) e.buffer_radius = it->second;
    }
    return index(std::move(copy));
}

Outcome classify_outcome(const std::vector<TraceTick>& trace, const Scenario& scenario) {
    Outcome out;
    out.min_agent_distance = std::numeric_limits<double>::infinity();
    for (const auto& tick : trace) {
        for (std::size_t i = 0; i < tick.agents.size(); ++i) {
            const double d = (tick.p - tick.agents[i]).norm();
            out.min_agent_distance = std::min(out.min_agent_distance, d);
            const Vector3d half = i < tick.agent_half_extents.size() ? tick.agent_half_extents[i] : Vector3d::Zero();
            if (AxisBox::centered(tick.agents[i], half).contains(tick.p)) out.collision = true;
        }
        for (const auto& o : scenario.static_obstacles) {
            if (o.box.contains(tick.p)) out.collision = true;
        }
        if (!out.touchdown && tick.p.z() <= kTouchdownHeight && tick.v.norm() <= kTouchdownSpeed) {
            out.touchdown = true;
            out.touchdown_error = (tick.p - scenario.target).head<2>().norm();
        }
    }
    out.close_call = out.min_agent_distance < kCloseCallRadius;
    out.success = out.touchdown && out.touchdown_error <= kSuccessRadius && !out.collision && !out.close_call;
    return out;
}

TrialResult run_trial(const Scenario& base, std::uint64_t seed, const PipelineConfig& config, const KnowledgeBase& kb) {
    const Scenario scenario = randomize(base, seed);
    const DynamicsParams& params = scenario.dynamics;
    const double dt = scenario.dt;
    const Vector3d target = scenario.target;
    const double yaw_ref = scenario.start.att.z();
    const bool semantic = config.variant != Variant::Baseline;
    const double latency = semantic ? config.latency.value_or(scenario.perception_latency) : config.baseline_latency;

    World world{scenario, scenario.start, ControlInput::hover(params), 0.0, std::mt19937_64(mix(seed + kWalkSeedOffset))};

    std::unique_ptr<ReasonerBackend> backend;
    if (config.variant == Variant::NoisyReasoner) {
        backend = std::make_unique<NoisyBackend>(mix(seed + kNoiseSeedOffset), config.noise_probability, config.z_max);
    } else if (config.backend == BackendKind::Remote) {
        backend = std::make_unique<RemoteBackend>(config.remote);
    } else if (config.backend == BackendKind::Malformed) {
        backend = std::make_unique<MalformedBackend>();
    } else {
        backend = std::make_unique<DeterministicBackend>();
    }
    InferOptions infer;
    infer.limits.z_max = config.z_max;
    infer.fallback = config.variant != Variant::NoisyReasoner;

    std::ofstream trace;
    if (!config.trace_path.empty()) {
        trace.open(config.trace_path, std::ios::binary | std::ios::trunc);
        if (!trace) throw std::runtime_error("cannot write trace " + config.trace_path);
    }

    TrialResult result;
    result.seed = seed;
    result.variant = config.variant;
    result.trace_path = config.trace_path;

    std::vector<ActiveRegion> regions;
    std::vector<Pending> pending;
    std::vector<UnsafeRegion> statics;
    for (const auto& o : scenario.static_obstacles) {
        statics.push_back(UnsafeRegion{o.box, o.class_name, config.baseline_inflation, false, 0.0});
    }

    // Applies the observation re-projected to time t.
    auto apply = [&](ActiveRegion& r, double t) {
        const Vector3d shift = r.velocity * (t - r.confirmed_at);
        const AxisBox fp{r.observed.lo + shift, r.observed.hi + shift};
        r.region = UnsafeRegion{fp, r.semantic_class, r.buffer, true, t};
        r.floor.reset();
        if (r.z_min > 0.0) {
            AxisBox floor = fp;
            const double grow = r.buffer + config.floor_margin;
            floor.lo.head<2>().array() -= grow;
            floor.hi.head<2>().array() += grow;
            floor.lo.z() = scenario.world_bounds.lo.z() - 1.0;
            floor.hi.z() = r.z_min;
            r.floor = UnsafeRegion{floor, "altitude-floor", 0.0, true, t};
        }
    };

    auto unsafe_set = [&]() {
        std::vector<UnsafeRegion> u = statics;
        for (const auto& r : regions) {
            u.push_back(r.region);
            if (r.floor) u.push_back(*r.floor);
        }
        return u;
    };

    Mode mode = Mode::Hover;
    ReferenceTrajectory traj;
    double t_plan = 0.0;
    Vector3d hold = scenario.start.p;
    AxisBox hold_box;
    std::vector<AxisBox> free_boxes;
    std::vector<UnsafeRegion> unsafe;
    std::vector<AxisBox> inflated;
    std::vector<bool> is_floor;
    MpcSolution prev;
    bool have_prev = false;
    bool first_plan = true;

    auto box_containing = [&](const Vector3d& p) -> const AxisBox* {
        for (const auto& b : free_boxes) {
            if (b.contains(p, 1e-9)) return &b;
        }
        return nullptr;
    };
    auto inside_inflated = [&](const Vector3d& p) {
        return std::any_of(inflated.begin(), inflated.end(), [&](const AxisBox& b) { return b.contains(p); });
    };
    auto enter_hover = [&]() {
        if (mode != Mode::Hover) hold = world.uav.p;
        const AxisBox* b = box_containing(hold);
        if (b == nullptr) {
            hold = world.uav.p;
            b = box_containing(hold);
        }
        if (b == nullptr) {
            mode = Mode::Escape;
            return;
        }
        hold_box = *b;
        mode = Mode::Hover;
    };

    // Decides the mode for the current unsafe set; replans when needed.
    auto update_plan = [&](bool force) {
        unsafe = unsafe_set();
        inflated.clear();
        is_floor.clear();
        for (const auto& r : unsafe) {
            inflated.push_back(inflate(r));
            is_floor.push_back(r.semantic_class == "altitude-floor");
        }
        free_boxes = carve_all(scenario.corridor.boxes, inflated, true);
        if (inside_inflated(world.uav.p)) {
            mode = Mode::Escape;
            return;
        }
        if (inside_inflated(target)) {
            enter_hover();
            return;
        }
        if (mode == Mode::Track && !force) {
            const double tau = world.time - t_plan;
            const auto first = static_cast<std::size_t>(std::clamp(
                std::floor(tau / config.planner.sample_dt), 0.0, static_cast<double>(traj.samples.size() - 1)));
            ReferenceTrajectory rest;
            rest.samples.assign(traj.samples.begin() + static_cast<long>(first), traj.samples.end());
            if (!trajectory_hits_unsafe(rest, unsafe) && assign_boxes(traj, free_boxes, first)) return;
        }
        StartState start{world.uav.p, world.uav.v, yaw_ref};
        if (start.v.norm() > config.planner.v_max) start.v *= config.planner.v_max / start.v.norm();
        try {
            ReferenceTrajectory planned = plan(start, target, scenario.corridor, unsafe, config.planner);
            RefSample last = planned.samples.back();
            last.t += config.planner.sample_dt;
            last.p = target;
            planned.samples.push_back(last);
            if (!assign_boxes(planned, free_boxes)) throw NoPath();
            traj = std::move(planned);
            t_plan = world.time;
            mode = Mode::Track;
            if (!first_plan) ++result.replan_count;
        } catch (const PlanningError&) {
            if (first_plan) throw ScenarioInfeasible("no initial plan from the start state");
            enter_hover();
        } catch (const std::invalid_argument& e) {
            // drifted outside the corridor
            if (first_plan) throw ScenarioInfeasible(e.what());
            enter_hover();
        }
        first_plan = false;
    };

    update_plan(true);

    std::vector<TraceTick> ticks;
    double next_capture = 0.0;
    const int max_ticks = static_cast<int>(std::ceil(scenario.trial_timeout / dt));
    bool need_replan = false;
    Outcome outcome;

    for (int tick = 0; tick <= max_ticks; ++tick) {
        world.time = tick * dt;
        const double t = world.time;
        bool changed = false;
        std::vector<SafetySpec> became_available;

        // (a) capture
        if (t + 1e-9 >= next_capture) {
            next_capture += scenario.perception_period;
            if (semantic) {
                const Caption cap = generate_caption(world);
                Pending p;
                p.capture_time = t;
                p.available_at = t + latency;
                p.spec = infer_safety(kb, cap.text, *backend, infer, t + latency);
                // bind to the visible agent nearest the camera axis
                double best = std::numeric_limits<double>::infinity();
                const Vector3d axis = camera_axis(world.uav, scenario.camera);
                for (std::size_t i = 0; i < world.scenario.agents.size(); ++i) {
                    const Vector3d& ap = world.scenario.agents[i].p;
                    if (!in_view(world.uav, scenario.camera, ap)) continue;
                    const Vector3d d = (ap - world.uav.p).normalized();
                    const double off = std::acos(std::clamp(d.dot(axis), -1.0, 1.0));
                    if (off < best) {
                        best = off;
                        p.agent = static_cast<int>(i);
                    }
                }
                pending.push_back(p);
            } else {
                for (std::size_t i = 0; i < world.scenario.agents.size(); ++i) {
                    if (!in_view(world.uav, scenario.camera, world.scenario.agents[i].p)) continue;
                    Pending p;
                    p.capture_time = t;
                    p.available_at = t + latency;
                    p.agent = static_cast<int>(i);
                    p.geometric = true;
                    pending.push_back(p);
                }
            }
        }

        // (b) specs that became available
        for (auto it = pending.begin(); it != pending.end();) {
            if (it->available_at > t + 1e-9) {
                ++it;
                continue;
            }
            const Pending p = *it;
            it = pending.erase(it);
            if (p.spec) {
                result.spec_log.push_back(*p.spec);
                became_available.push_back(*p.spec);
            }
            if (p.agent < 0) continue;
            double buffer = config.baseline_inflation;
            double z_min = 0.0;
            std::string cls = "obstacle";
            if (!p.geometric) {
                // Without a fallback an unusable answer leaves the default spec,
                // which reads as "static". Either way the agent's region is dropped.
                if (!p.spec || !p.spec->is_dynamic) {
                    const auto n = regions.size();
                    regions.erase(std::remove_if(regions.begin(), regions.end(),
                                                 [&](const ActiveRegion& a) { return a.agent == p.agent; }),
                                  regions.end());
                    changed = changed || regions.size() != n;
                    continue;
                }
                buffer = p.spec->buffer_radius;
                z_min = p.spec->z_min;
                cls = p.spec->matched_class;
            }
            const DynamicAgent& agent = world.scenario.agents[p.agent];
            ActiveRegion r;
            r.agent = p.agent;
            r.semantic_class = cls;
            r.observed = agent.footprint();
            r.velocity = agent.velocity;
            r.buffer = buffer;
            r.z_min = z_min;
            r.confirmed_at = t;
            apply(r, t);
            auto same = std::find_if(regions.begin(), regions.end(), [&](const ActiveRegion& a) { return a.agent == p.agent; });
            if (same != regions.end()) *same = r;
            else regions.push_back(r);
            changed = true;
        }

        // stale regions expire
        const double ttl = 2.0 * scenario.perception_period;
        const auto before = regions.size();
        regions.erase(std::remove_if(regions.begin(), regions.end(),
                                     [&](const ActiveRegion& r) { return t - r.confirmed_at > ttl + 1e-9; }),
                      regions.end());
        changed = changed || regions.size() != before;
        for (auto& r : regions) {
            const Vector3d projected = r.observed.center() + r.velocity * (t - r.confirmed_at);
            if ((projected - r.region.box.center()).norm() > kReprojectStep) {
                apply(r, t);
                changed = true;
            }
        }

        const bool retry = (mode == Mode::Hover && std::fmod(t + 1e-9, scenario.perception_period) < dt);
        if (changed || need_replan || retry || mode == Mode::Escape) {
            update_plan(need_replan);
            need_replan = false;
        }
        if (mode == Mode::Escape && !inside_inflated(world.uav.p)) update_plan(true);

        // (c) MPC
        MpcConfig mcfg = config.mpc;
        mcfg.dynamics = params;
        MpcProblem pr;
        pr.x0 = world.uav;
        pr.bounds = MpcBounds::from(params);
        pr.u_prev = world.u_last;
        const MpcSolution* seed_sol = have_prev ? &prev : nullptr;
        if (mode == Mode::Track) {
            fill_window(traj, t - t_plan, mcfg, pr, &free_boxes, seed_sol);
        } else {
            Vector3d goal = hold;
            AxisBox box = hold_box;
            if (mode == Mode::Escape) {
                // only altitude floors violated: climb straight up
                bool in_buffer = false;
                double ceiling = -std::numeric_limits<double>::infinity();
                for (std::size_t i = 0; i < inflated.size(); ++i) {
                    if (!inflated[i].contains(world.uav.p)) continue;
                    if (is_floor[i]) ceiling = std::max(ceiling, inflated[i].hi.z());
                    else in_buffer = true;
                }
                const AxisBox* above = nullptr;
                if (!in_buffer && std::isfinite(ceiling)) {
                    goal = Vector3d(world.uav.p.x(), world.uav.p.y(), ceiling + kEscapeMargin);
                    above = box_containing(goal);
                }
                double best = std::numeric_limits<double>::infinity();
                if (above != nullptr) {
                    box = *above;
                    best = 0.0;
                }
                for (const auto& b : free_boxes) {
                    if (above != nullptr) break;
                    const Vector3d q = inner_closest(b, world.uav.p, kEscapeMargin);
                    const double d = (q - world.uav.p).squaredNorm();
                    if (d < best) {
                        best = d;
                        goal = q;
                        box = b;
                    }
                }
                mcfg.slack = true;
            }
            pr.reference.assign(mcfg.N + 1, Eigen::Vector4d(goal.x(), goal.y(), goal.z(), yaw_ref));
            if (std::isfinite(box.volume()) && box.valid()) pr.step_polytopes.assign(mcfg.N + 1, box_to_polytope(box));
        }
        const TrackResult tr = track_step(seed_sol, pr, mcfg);
        prev = tr.solution;
        have_prev = true;
        if (tr.replan) need_replan = true;
        world.u_last = tr.u0;

        if (trace.is_open()) {
            json rec;
            rec["t"] = t;
            rec["mode"] = mode_name(mode);
            rec["target"] = vec_json(target);
            rec["p"] = vec_json(world.uav.p);
            rec["v"] = vec_json(world.uav.v);
            rec["att"] = vec_json(world.uav.att);
            rec["u"] = json::array({tr.u0.rate_cmd.x(), tr.u0.rate_cmd.y(), tr.u0.rate_cmd.z(), tr.u0.thrust_cmd});
            json agents = json::array();
            for (const auto& a : world.scenario.agents) {
                agents.push_back({{"class", a.class_name}, {"p", vec_json(a.p)}, {"half", vec_json(a.half_extent)}});
            }
            rec["agents"] = agents;
            json un = json::array();
            for (const auto& r : regions) {
                un.push_back({{"class", r.region.semantic_class}, {"box", box_json(inflate(r.region))}, {"z_min", r.z_min}});
                if (r.floor) {
                    un.push_back({{"class", r.floor->semantic_class}, {"box", box_json(inflate(*r.floor))}, {"z_min", r.z_min}});
                }
            }
            rec["unsafe"] = un;
            json active = json::array();
            std::vector<Polytope> distinct;
            for (std::size_t k = 1; k < pr.step_polytopes.size(); ++k) {
                const Polytope& poly = pr.step_polytopes[k];
                const bool dup = std::any_of(distinct.begin(), distinct.end(), [&](const Polytope& q) {
                    return q.b == poly.b;
                });
                if (dup) continue;
                distinct.push_back(poly);
                // box rows: +e_d then -e_d
                active.push_back(box_json(AxisBox{-poly.b.tail<3>(), poly.b.head<3>()}));
            }
            rec["boxes"] = active;
            json specs = json::array();
            for (const auto& s : became_available) {
                specs.push_back({{"is_dynamic", s.is_dynamic}, {"z_min", s.z_min}, {"buffer", s.buffer_radius},
                                 {"class", s.matched_class}, {"source", to_string(s.source)}, {"issued_at", s.issued_at}});
            }
            rec["specs"] = specs;
            rec["mpc"] = {{"status", to_string(tr.solution.status)}, {"sqp", tr.solution.sqp_iters},
                          {"qp", tr.solution.qp_iters}, {"cost", tr.solution.cost}};
            trace << rec.dump() << '\n';
        }

        // (d) advance and check termination
        step_world(world, dt, params);
        TraceTick tt{world.time, world.uav.p, world.uav.v, {}, {}};
        for (const auto& a : world.scenario.agents) {
            tt.agents.push_back(a.p);
            tt.agent_half_extents.push_back(a.half_extent);
        }
        ticks.push_back(std::move(tt));
        outcome = classify_outcome({ticks.back()}, scenario);
        if (outcome.collision || outcome.touchdown) break;
    }

    outcome = classify_outcome(ticks, scenario);
    result.success = outcome.success;
    result.close_call = outcome.close_call;
    result.collision = outcome.collision;
    result.touchdown = outcome.touchdown;
    result.touchdown_error = outcome.touchdown_error;
    result.min_agent_distance = outcome.min_agent_distance;
    result.duration = ticks.empty() ? 0.0 : ticks.back().t;
    return result;
}

ExperimentResult run_experiment(const Scenario& scenario, int n_trials, std::uint64_t base_seed,
                                const std::vector<Variant>& variants, const PipelineConfig& config,
                                const KnowledgeBase& kb, int jobs, const std::string& trace_dir) {
    if (n_trials < 1) throw std::invalid_argument("n_trials must be >= 1");
    struct Task {
        Variant variant;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    for (Variant v : variants) {
        for (int i = 0; i < n_trials; ++i) tasks.push_back({v, base_seed + static_cast<std::uint64_t>(i)});
    }
    std::vector<TrialResult> results(tasks.size());
    std::vector<std::string> errors(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
            PipelineConfig c = config;
            c.variant = tasks[i].variant;
            if (!trace_dir.empty()) {
                c.trace_path = trace_dir + "/" + to_string(c.variant) + "_" + std::to_string(tasks[i].seed) + ".jsonl";
            }
            try {
                results[i] = run_trial(scenario, tasks[i].seed, c, kb);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (const auto& e : errors) {
        if (!e.empty()) throw ScenarioInfeasible(e);
    }

    ExperimentResult out;
    out.trials = results;
    for (Variant v : variants) {
        VariantMetrics m;
        m.variant = v;
        int touchdowns = 0;
        double err = 0.0;
        for (const auto& r : results) {
            if (r.variant != v) continue;
            ++m.trials;
            m.success_rate += r.success ? 1.0 : 0.0;
            m.close_call_rate += r.close_call ? 1.0 : 0.0;
            m.mean_replans += r.replan_count;
            if (r.touchdown) {
                ++touchdowns;
                err += r.touchdown_error;
            }
        }
        m.success_rate /= m.trials;
        m.close_call_rate /= m.trials;
        m.mean_replans /= m.trials;
        m.mean_touchdown_error = touchdowns > 0 ? err / touchdowns : std::numeric_limits<double>::quiet_NaN();
        out.metrics.push_back(m);
    }
    return out;
}

std::string metrics_csv(const std::vector<VariantMetrics>& metrics) {
    std::string out = "variant,trials,success_rate,close_call_rate,mean_touchdown_error_m,mean_replans\n";
    char buf[256];
    for (const auto& m : metrics) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%.4f,%.4f,%.4f,%.4f\n", to_string(m.variant), m.trials, m.success_rate,
                      m.close_call_rate, m.mean_touchdown_error, m.mean_replans);
        out += buf;
    }
    return out;
}

}  // namespace semland
