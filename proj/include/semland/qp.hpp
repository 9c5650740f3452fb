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

// Dense convex QP solver based on operator splitting (ADMM), in the style
// of OSQP: Ruiz equilibration, over-relaxation, adaptive step size, a
// primal-infeasibility certificate from the dual iterates and an optional
// active-set polish of the final iterate.
//
//   minimize    1/2 x' H x + f' x
//   subject to  l <= A x <= u
//
// Bounds at or beyond +-kQpInfinity are treated as absent.

#pragma once

#include <Eigen/Dense>

namespace semland {

inline constexpr double kQpInfinity = 1e19;

struct QpSettings {
    double rho{0.1};
    double sigma{1e-6};
    double alpha{1.6};
    int max_iters{4000};
    double eps_abs{1e-6};
    double eps_rel{1e-6};
    double eps_pinf{1e-7};
    int check_interval{5};
    int scaling_iters{10};
    bool adaptive_rho{true};
    int adaptive_rho_interval{25};
    bool polish{true};
    /// Added to the diagonal of H before solving.
    double regularization{1e-8};
};

enum class QpStatus { Solved, MaxIters, PrimalInfeasible };

const char* to_string(QpStatus status);

struct QpResult {
    Eigen::VectorXd x;
    /// Multipliers with the convention H x + f + A' y = 0.
    Eigen::VectorXd y;
    QpStatus status{QpStatus::MaxIters};
    int iters{0};
    double primal_residual{0.0};
    double dual_residual{0.0};
    double objective{0.0};
    bool polished{false};
};

struct QpWarmStart {
    Eigen::VectorXd x;
    Eigen::VectorXd y;
};

QpResult qp_solve(const Eigen::MatrixXd& H, const Eigen::VectorXd& f, const Eigen::MatrixXd& A,
                  const Eigen::VectorXd& l, const Eigen::VectorXd& u,
                  const QpSettings& settings = {}, const QpWarmStart* warm = nullptr);

/// ||H x + f + A' y||_inf on the unregularized problem.
double kkt_stationarity(const Eigen::MatrixXd& H, const Eigen::VectorXd& f,
                        const Eigen::MatrixXd& A, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& y);

}  // namespace semland
