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

// Closed-loop landing world: UAV dynamics, moving agents, caption proxy,
// perception latency, replanning, outcome classification, Monte Carlo runs.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "semland/dynamics.hpp"
#include "semland/geometry.hpp"
#include "semland/mpc.hpp"
#include "semland/search.hpp"
#include "semland/semantics.hpp"

namespace semland {

inline constexpr int kScenarioSchemaVersion = 1;

struct Camera {
    double fov_deg{120.0};
    double range_m{15.0};
    double tilt_deg{45.0};  ///< below horizontal
};

struct AgentMotion {
    enum class Kind { Waypoints, RandomWalk };
    Kind kind{Kind::Waypoints};
    std::vector<Eigen::Vector3d> waypoints;
    bool loop{false};
    double sigma{0.3};  ///< random-walk heading noise per step, rad
    AxisBox bounds{Eigen::Vector3d::Constant(-1e3), Eigen::Vector3d::Constant(1e3)};
};

struct DynamicAgent {
    std::string class_name{"person"};
    Eigen::Vector3d p{Eigen::Vector3d::Zero()};  ///< footprint center
    double speed{0.0};
    AgentMotion motion;
    Eigen::Vector3d half_extent{0.25, 0.25, 0.9};

    // runtime
    std::size_t next_waypoint{0};
    double heading{0.0};
    Eigen::Vector3d velocity{Eigen::Vector3d::Zero()};

    [[nodiscard]] AxisBox footprint() const { return AxisBox::centered(p, half_extent); }
};

struct StaticObstacle {
    AxisBox box;
    std::string class_name;
};

/// Per-seed randomization of the first agent: it is sent across the descent
/// path so that it reaches the crossing point at a random time.
struct Intercept {
    double cross_lo{0.6}, cross_hi{1.0};      ///< fraction along start->target (xy)
    double arrival_lo{1.0}, arrival_hi{5.0};  ///< s
    double speed_lo{1.0}, speed_hi{1.5};      ///< m/s
    double angle_lo{-0.5}, angle_hi{0.5};     ///< rad, about the path normal
    double overshoot{8.0};                    ///< m walked past the crossing point
};

struct Scenario {
    int schema_version{kScenarioSchemaVersion};
    std::string name{"scenario"};
    AxisBox world_bounds;
    Eigen::Vector3d target{Eigen::Vector3d::Zero()};
    State start;
    std::vector<StaticObstacle> static_obstacles;
    std::vector<DynamicAgent> agents;
    Corridor corridor;
    double perception_period{0.5};
    double perception_latency{1.5};
    Camera camera;
    double trial_timeout{30.0};
    double dt{0.05};
    std::uint64_t seed{0};
    std::map<std::string, double> kb_buffer_overrides;
    std::optional<Intercept> intercept;
    DynamicsParams dynamics;  ///< plant and MPC model
};

enum class Variant { Baseline, NoisyReasoner, Full };
const char* to_string(Variant v);
Variant variant_from_string(const std::string& s);

enum class BackendKind { Deterministic, Remote, Malformed };

struct PipelineConfig {
    Variant variant{Variant::Full};
    BackendKind backend{BackendKind::Deterministic};
    RemoteConfig remote;
    std::optional<double> latency;  ///< overrides the scenario latency (semantic variants)
    double baseline_inflation{0.3};
    double baseline_latency{0.1};
    double noise_probability{0.5};
    double floor_margin{1.0};       ///< altitude floor reaches this far beyond the buffer
    double z_max{10.0};
    PlannerConfig planner;
    MpcConfig mpc;
    std::string trace_path;         ///< empty: no trace

    static PipelineConfig defaults();
};

struct TrialResult {
    std::uint64_t seed{0};
    Variant variant{Variant::Full};
    bool success{false};
    bool close_call{false};
    bool collision{false};
    bool touchdown{false};
    double touchdown_error{0.0};
    double duration{0.0};
    double min_agent_distance{0.0};
    int replan_count{0};
    std::vector<SafetySpec> spec_log;
    std::string trace_path;
};

class ScenarioInfeasible : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Caption {
    std::string text;
    double capture_time{0.0};
};

/// Camera frame of the UAV: position plus the tilted viewing axis.
Eigen::Vector3d camera_axis(const State& uav, const Camera& camera);
bool in_view(const State& uav, const Camera& camera, const Eigen::Vector3d& point);

struct World {
    Scenario scenario;
    State uav;
    ControlInput u_last;
    double time{0.0};
    std::mt19937_64 rng;
};

Caption generate_caption(const World& world);
/// Agents move, then the UAV integrates the last command.
void step_world(World& world, double dt, const DynamicsParams& params);

/// Applies the intercept block for `seed` (no-op without one).
Scenario randomize(const Scenario& base, std::uint64_t seed);

KnowledgeBase make_kb(const std::vector<KnowledgeEntry>& entries, const Scenario& scenario);

TrialResult run_trial(const Scenario& scenario, std::uint64_t seed, const PipelineConfig& config,
                      const KnowledgeBase& kb);

struct TraceTick {
    double t{0.0};
    Eigen::Vector3d p{Eigen::Vector3d::Zero()};
    Eigen::Vector3d v{Eigen::Vector3d::Zero()};
    std::vector<Eigen::Vector3d> agents;
    std::vector<Eigen::Vector3d> agent_half_extents;
};

struct Outcome {
    bool success{false};
    bool close_call{false};
    bool collision{false};
    bool touchdown{false};
    double touchdown_error{0.0};
    double min_agent_distance{0.0};
};

/// Outcome from the trace alone: collision, close call (< 1 m to an agent
/// center), touchdown within 0.5 m of the target.
Outcome classify_outcome(const std::vector<TraceTick>& trace, const Scenario& scenario);

inline constexpr double kCloseCallRadius = 1.0;
inline constexpr double kSuccessRadius = 0.5;

struct VariantMetrics {
    Variant variant{Variant::Full};
    int trials{0};
    double success_rate{0.0};
    double close_call_rate{0.0};
    double mean_touchdown_error{0.0};
    double mean_replans{0.0};
};

struct ExperimentResult {
    std::vector<VariantMetrics> metrics;
    std::vector<TrialResult> trials;  ///< sorted by (variant, seed)
};

/// Trials base_seed .. base_seed+n-1 per variant. `trace_dir` empty: no traces.
ExperimentResult run_experiment(const Scenario& scenario, int n_trials, std::uint64_t base_seed,
                                const std::vector<Variant>& variants, const PipelineConfig& config,
                                const KnowledgeBase& kb, int jobs = 1, const std::string& trace_dir = "");

std::string metrics_csv(const std::vector<VariantMetrics>& metrics);

}  // namespace semland
