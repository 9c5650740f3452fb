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

// Receding-horizon tracker: condensed SQP over input perturbations with the
// ADMM solver from qp.hpp underneath.

#pragma once

#include <vector>

#include <Eigen/Dense>

#include "semland/dynamics.hpp"
#include "semland/geometry.hpp"
#include "semland/qp.hpp"
#include "semland/search.hpp"

namespace semland {

struct MpcConfig {
    int N{20};
    double dt{0.05};
    /// Tracking weights on (x, y, z, yaw).
    Eigen::Vector4d Q{20.0, 20.0, 20.0, 2.0};
    /// Effort weights on (roll rate, pitch rate, yaw rate, thrust) about hover.
    Eigen::Vector4d R{0.5, 0.5, 0.5, 0.2};
    Eigen::Vector4d R_delta{1.0, 1.0, 1.0, 0.5};
    Eigen::Vector4d Q_N{100.0, 100.0, 100.0, 10.0};
    int sqp_max_iters{10};
    double sqp_tol{1e-6};  ///< relative cost decrease that ends the SQP loop
    double qp_eps_abs{1e-6};
    double qp_eps_rel{1e-6};
    int qp_max_iters{4000};
    double violation_tol{1e-4};
    /// Soft position rows: one slack per step with this quadratic weight.
    bool slack{false};
    double slack_weight{1e4};
    DynamicsParams dynamics;
};

struct MpcBounds {
    Eigen::Vector4d u_lo{-3.0, -3.0, -3.0, 2.0};
    Eigen::Vector4d u_hi{3.0, 3.0, 3.0, 20.0};
    double v_max{3.0};    ///< per-axis speed bound, m/s
    double att_max{0.8};  ///< roll/pitch bound, rad

    static MpcBounds from(const DynamicsParams& params, double v_max = 3.0, double att_max = 0.8);
};

struct MpcProblem {
    State x0;
    /// N+1 entries of (x, y, z, yaw); entry 0 pairs with x0 and carries no cost.
    std::vector<Eigen::Vector4d> reference;
    /// Empty, or N+1 position polytopes; entry k constrains p_k for k >= 1.
    std::vector<Polytope> step_polytopes;
    MpcBounds bounds;
    /// Input applied on the previous tick, the seam of the variation term.
    ControlInput u_prev;
};

enum class MpcStatus { Optimal, MaxIters, Infeasible };
const char* to_string(MpcStatus status);

struct MpcSolution {
    std::vector<State> states;
    std::vector<ControlInput> inputs;
    double cost{0.0};
    int sqp_iters{0};
    int qp_iters{0};
    double primal_residual{0.0};
    double dual_residual{0.0};
    double kkt_residual{0.0};
    /// Largest hard-constraint violation of the returned trajectory.
    double violation{0.0};
    /// Largest polytope overshoot absorbed by slacks (slack mode only).
    double slack{0.0};
    MpcStatus status{MpcStatus::MaxIters};
    /// True cost of every accepted iterate, starting with the initial guess.
    std::vector<double> cost_history;
};

/// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

/// Nonlinear cost of an input sequence; fills the rollout if asked.
double mpc_cost(const MpcProblem& problem, const std::vector<ControlInput>& inputs,
                const MpcConfig& cfg, std::vector<State>* states = nullptr);

MpcSolution solve(const MpcProblem& problem, const MpcConfig& cfg,
                  const std::vector<ControlInput>* initial_inputs = nullptr);

struct TrackResult {
    ControlInput u0;
    MpcSolution solution;
    bool replan{false};
};

/// One receding-horizon step. `prev` is shifted one step to seed the SQP.
/// An infeasible solve returns the hover-hold input with the replan flag.
TrackResult track_step(const MpcSolution* prev, const MpcProblem& problem, const MpcConfig& cfg);

/// Reference and per-step polytopes for the horizon starting `t` seconds into
/// the trajectory (nearest-sample mapping, padded with the last sample).
/// Each step uses the sample's own box unless `free_boxes` offers one that
/// holds both the sample and the position `prev` predicts for that step.
void fill_window(const ReferenceTrajectory& traj, double t, const MpcConfig& cfg, MpcProblem& problem,
                 const std::vector<AxisBox>* free_boxes = nullptr, const MpcSolution* prev = nullptr);

}  // namespace semland
