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

// Kinodynamic front end: best-first search over double-integrator motion
// primitives inside the corridor, with hard collision checks against the
// inflated unsafe boxes and a corridor-distance penalty folded into the
// heuristic.

#pragma once

#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "semland/geometry.hpp"

namespace semland {

struct PlannerConfig {
    double a_max{2.0};          ///< m/s^2, per axis
    double v_max{2.0};          ///< m/s, speed bound
    double tau{0.4};            ///< primitive duration, s
    double rho{10.0};           ///< time weight, cost per second
    double lambda{5.0};         ///< penalty weight in the heuristic
    double eps{1e-3};           ///< m^2
    double goal_tol{0.2};       ///< m
    double goal_vel_tol{1.0};   ///< m/s, speed allowed at the goal
    int max_expansions{20000};
    double clearance_radius{0.4};
    double pos_resolution{0.1};  ///< dedup grid, m
    double vel_resolution{0.2};  ///< dedup grid, m/s
    double check_resolution{0.05};
    double collision_margin{0.01};
    /// Width of the soft band around each inflated unsafe box where the
    /// penalty is positive. Zero gives the plain corridor reading.
    double penalty_margin{0.5};
    double sample_dt{0.05};      ///< densify step used by plan()
    /// Inflation of h0 in the priority. 1 keeps the search optimal; larger
    /// values trade optimality for fewer expansions.
    double heuristic_weight{1.0};
};

struct Primitive {
    Eigen::Vector3d p0{Eigen::Vector3d::Zero()};
    Eigen::Vector3d v0{Eigen::Vector3d::Zero()};
    Eigen::Vector3d a{Eigen::Vector3d::Zero()};
    double duration{0.0};

    [[nodiscard]] Eigen::Vector3d position(double s) const { return p0 + v0 * s + 0.5 * a * s * s; }
    [[nodiscard]] Eigen::Vector3d velocity(double s) const { return v0 + a * s; }
};

struct PrimitivePath {
    Eigen::Vector3d start{Eigen::Vector3d::Zero()};
    std::vector<Primitive> segments;
    double cost{0.0};
    int expansions{0};

    [[nodiscard]] double duration() const;
    [[nodiscard]] Eigen::Vector3d end() const;
};

struct RefSample {
    double t{0.0};
    Eigen::Vector3d p{Eigen::Vector3d::Zero()};
    double yaw{0.0};
};

struct ReferenceTrajectory {
    std::vector<RefSample> samples;
    /// Corridor box assigned to each sample.
    std::vector<AxisBox> boxes;
    double cost{0.0};
};

struct StartState {
    Eigen::Vector3d p{Eigen::Vector3d::Zero()};
    Eigen::Vector3d v{Eigen::Vector3d::Zero()};
    double yaw{0.0};
};

class PlanningError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class NoPath : public PlanningError {
public:
    NoPath() : PlanningError("no path") {}
};
class StartBlocked : public PlanningError {
public:
    StartBlocked() : PlanningError("start lies inside an unsafe region") {}
};
class GoalBlocked : public PlanningError {
public:
    GoalBlocked() : PlanningError("goal lies inside an unsafe region") {}
};

/// Admissible remaining-time cost: rho * (distance beyond goal_tol) / v_max.
double h0(const Eigen::Vector3d& p, const Eigen::Vector3d& goal, const PlannerConfig& cfg);

/// Safe boxes used by the heuristic penalty: the corridor with every unsafe
/// box (inflated, then grown by penalty_margin) carved out.
std::vector<AxisBox> penalty_safe_boxes(const Corridor& corridor,
                                        const std::vector<UnsafeRegion>& unsafe,
                                        const PlannerConfig& cfg);

PrimitivePath plan_primitives(const StartState& start, const Eigen::Vector3d& goal,
                              const Corridor& corridor, const std::vector<UnsafeRegion>& unsafe,
                              const PlannerConfig& cfg);

ReferenceTrajectory densify(const PrimitivePath& path, double dt, double yaw = 0.0);

/// Plans and densifies at cfg.sample_dt; samples get a corridor box assigned
/// from the carved (maximal) safe set.
ReferenceTrajectory plan(const StartState& start, const Eigen::Vector3d& goal,
                         const Corridor& corridor, const std::vector<UnsafeRegion>& unsafe,
                         const PlannerConfig& cfg);

/// Gives each sample from `first` on a box of `free_boxes` that contains it,
/// keeping the previous sample's box while it still does. Returns false if
/// some sample lies in none of them (its box is left unchanged).
bool assign_boxes(ReferenceTrajectory& traj, const std::vector<AxisBox>& free_boxes, std::size_t first = 0);

/// Re-validation: true if any consecutive pair of samples touches an
/// inflated unsafe box.
bool trajectory_hits_unsafe(const ReferenceTrajectory& traj, const std::vector<UnsafeRegion>& unsafe);

}  // namespace semland
