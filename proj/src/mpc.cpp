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

#include "semland/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace semland {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Vec9 = StateVec<double>;
using Vec4 = InputVec<double>;

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMeritWeight = 1e4;
constexpr double kMinStep = 1.0 / 16.0;

VectorXd stack(const std::vector<ControlInput>& inputs) {
    VectorXd U(4 * static_cast<Eigen::Index>(inputs.size()));
    for (std::size_t k = 0; k < inputs.size(); ++k) U.segment<4>(4 * k) = inputs[k].vec();
    return U;
}

VectorXd clamp_inputs(VectorXd U, const MpcBounds& b) {
    for (Eigen::Index k = 0; k < U.size() / 4; ++k) {
        U.segment<4>(4 * k) = U.segment<4>(4 * k).cwiseMax(b.u_lo).cwiseMin(b.u_hi);
    }
    return U;
}

std::vector<Vec9> rollout(const Vec9& x0, const VectorXd& U, const MpcConfig& cfg) {
    const int N = static_cast<int>(U.size() / 4);
    std::vector<Vec9> xs(N + 1);
    xs[0] = x0;
    for (int k = 0; k < N; ++k) {
        const Vec4 u = U.segment<4>(4 * k);
        xs[k + 1] = step<double>(xs[k], u, cfg.dynamics, cfg.dt);
    }
    return xs;
}

Eigen::Vector4d tracking_error(const Vec9& x, const Eigen::Vector4d& ref) {
    return Eigen::Vector4d(x(0) - ref(0), x(1) - ref(1), x(2) - ref(2), wrap_angle(x(8) - ref(3)));
}

bool has_polytopes(const MpcProblem& problem) { return !problem.step_polytopes.empty(); }

double overshoot(const Polytope& poly, const Vec9& x) {
    if (poly.rows() == 0) return 0.0;
    return std::max(0.0, (poly.A * x.head<3>() - poly.b).maxCoeff());
}

double cost_of(const MpcProblem& problem, const MpcConfig& cfg, const VectorXd& U, const std::vector<Vec9>& xs) {
    const int N = cfg.N;
    double J = 0.0;
    for (int k = 1; k <= N; ++k) {
        const Eigen::Vector4d e = tracking_error(xs[k], problem.reference[k]);
        J += e.dot((k == N ? cfg.Q_N : cfg.Q).cwiseProduct(e));
    }
    const Vec4 hover = ControlInput::hover(cfg.dynamics).vec();
    Vec4 prev = problem.u_prev.vec();
    for (int k = 0; k < N; ++k) {
        const Vec4 u = U.segment<4>(4 * k);
        J += (u - hover).dot(cfg.R.cwiseProduct(u - hover));
        J += (u - prev).dot(cfg.R_delta.cwiseProduct(u - prev));
        prev = u;
    }
    if (cfg.slack && has_polytopes(problem)) {
        for (int k = 1; k <= N; ++k) {
            const double s = overshoot(problem.step_polytopes[k], xs[k]);
            J += cfg.slack_weight * s * s;
        }
    }
    return J;
}

// Largest violation of the hard state rows.
double violation_of(const MpcProblem& problem, const MpcConfig& cfg, const std::vector<Vec9>& xs) {
    const MpcBounds& b = problem.bounds;
    double worst = 0.0;
    for (int k = 1; k <= cfg.N; ++k) {
        worst = std::max(worst, xs[k].segment<3>(3).cwiseAbs().maxCoeff() - b.v_max);
        worst = std::max(worst, xs[k].segment<2>(6).cwiseAbs().maxCoeff() - b.att_max);
        if (!cfg.slack && has_polytopes(problem)) worst = std::max(worst, overshoot(problem.step_polytopes[k], xs[k]));
    }
    return std::max(0.0, worst);
}

struct Qp {
    MatrixXd H;
    VectorXd f;
    MatrixXd A;
    VectorXd l, u;
};

Qp assemble(const MpcProblem& problem, const MpcConfig& cfg, const VectorXd& U, const std::vector<Vec9>& xs) {
    const int N = cfg.N;
    const Eigen::Index nU = 4 * N;
    const Eigen::Index ns = cfg.slack && has_polytopes(problem) ? N : 0;
    const Eigen::Index n = nU + ns;

    // G[k] = d x_k / d U; only the first 4k columns are nonzero
    std::vector<Eigen::Matrix<double, 9, Eigen::Dynamic>> G(N + 1, Eigen::Matrix<double, 9, Eigen::Dynamic>::Zero(9, nU));
    for (int k = 0; k < N; ++k) {
        const Linearization lin = linearize(xs[k], Vec4(U.segment<4>(4 * k)), cfg.dynamics, cfg.dt);
        if (k > 0) G[k + 1].leftCols(4 * k).noalias() = lin.A * G[k].leftCols(4 * k);
        G[k + 1].middleCols(4 * k, 4) = lin.B;
    }

    Qp qp;
    qp.H = MatrixXd::Zero(n, n);
    qp.f = VectorXd::Zero(n);

    for (int k = 1; k <= N; ++k) {
        const Eigen::Index c = 4 * k;
        Eigen::Matrix<double, 4, Eigen::Dynamic> Je(4, c);
        Je.topRows(3) = G[k].topLeftCorner(3, c);
        Je.row(3) = G[k].block(8, 0, 1, c);
        const Eigen::Vector4d w = k == N ? cfg.Q_N : cfg.Q;
        const Eigen::Vector4d e = tracking_error(xs[k], problem.reference[k]);
        qp.H.topLeftCorner(c, c).noalias() += 2.0 * Je.transpose() * w.asDiagonal() * Je;
        qp.f.head(c).noalias() += 2.0 * Je.transpose() * w.cwiseProduct(e);
    }
    const Vec4 hover = ControlInput::hover(cfg.dynamics).vec();
    Vec4 prev = problem.u_prev.vec();
    for (int k = 0; k < N; ++k) {
        const Vec4 uk = U.segment<4>(4 * k);
        for (int i = 0; i < 4; ++i) {
            const Eigen::Index a = 4 * k + i;
            qp.H(a, a) += 2.0 * cfg.R(i);
            qp.f(a) += 2.0 * cfg.R(i) * (uk(i) - hover(i));
            // variation to the previous input (the applied one for k = 0)
            const double d = uk(i) - prev(i);
            qp.H(a, a) += 2.0 * cfg.R_delta(i);
            qp.f(a) += 2.0 * cfg.R_delta(i) * d;
            if (k > 0) {
                const Eigen::Index b = a - 4;
                qp.H(b, b) += 2.0 * cfg.R_delta(i);
                qp.H(a, b) -= 2.0 * cfg.R_delta(i);
                qp.H(b, a) -= 2.0 * cfg.R_delta(i);
                qp.f(b) -= 2.0 * cfg.R_delta(i) * d;
            }
        }
        prev = uk;
    }
    for (Eigen::Index s = 0; s < ns; ++s) qp.H(nU + s, nU + s) = 2.0 * cfg.slack_weight;

    Eigen::Index poly_rows = 0;
    if (has_polytopes(problem)) {
        for (int k = 1; k <= N; ++k) poly_rows += problem.step_polytopes[k].rows();
    }
    const Eigen::Index m = nU + 5 * N + poly_rows + ns;
    qp.A = MatrixXd::Zero(m, n);
    qp.l.resize(m);
    qp.u.resize(m);
    const MpcBounds& bd = problem.bounds;
    Eigen::Index r = 0;
    for (int k = 0; k < N; ++k) {
        for (int i = 0; i < 4; ++i, ++r) {
            qp.A(r, 4 * k + i) = 1.0;
            qp.l(r) = bd.u_lo(i) - U(4 * k + i);
            qp.u(r) = bd.u_hi(i) - U(4 * k + i);
        }
    }
    for (int k = 1; k <= N; ++k) {
        const Eigen::Index c = 4 * k;
        for (int i = 0; i < 3; ++i, ++r) {
            qp.A.row(r).head(c) = G[k].block(3 + i, 0, 1, c);
            qp.l(r) = -bd.v_max - xs[k](3 + i);
            qp.u(r) = bd.v_max - xs[k](3 + i);
        }
        for (int i = 0; i < 2; ++i, ++r) {
            qp.A.row(r).head(c) = G[k].block(6 + i, 0, 1, c);
            qp.l(r) = -bd.att_max - xs[k](6 + i);
            qp.u(r) = bd.att_max - xs[k](6 + i);
        }
    }
    if (has_polytopes(problem)) {
        for (int k = 1; k <= N; ++k) {
            const Polytope& poly = problem.step_polytopes[k];
            const Eigen::Index c = 4 * k;
            for (Eigen::Index j = 0; j < poly.rows(); ++j, ++r) {
                qp.A.row(r).head(c).noalias() = poly.A.row(j) * G[k].topLeftCorner(3, c);
                if (ns > 0) qp.A(r, nU + k - 1) = -1.0;
                qp.l(r) = -kInf;
                qp.u(r) = poly.b(j) - poly.A.row(j).dot(xs[k].head<3>());
            }
        }
    }
    for (Eigen::Index s = 0; s < ns; ++s, ++r) {
        qp.A(r, nU + s) = 1.0;
        qp.l(r) = 0.0;
        qp.u(r) = kInf;
    }
    return qp;
}

}  // namespace

const char* to_string(MpcStatus status) {
    switch (status) {
        case MpcStatus::Optimal: return "optimal";
        case MpcStatus::MaxIters: return "max_iters";
        case MpcStatus::Infeasible: return "infeasible";
    }
    return "unknown";
}

MpcBounds MpcBounds::from(const DynamicsParams& params, double v_max, double att_max) {
    MpcBounds b;
    b.u_lo = Eigen::Vector4d(-params.rate_max, -params.rate_max, -params.rate_max, params.thrust_min);
    b.u_hi = Eigen::Vector4d(params.rate_max, params.rate_max, params.rate_max, params.thrust_max);
    b.v_max = v_max;
    b.att_max = att_max;
    return b;
}

double wrap_angle(double a) {
    a = std::remainder(a, 2.0 * M_PI);
    if (a <= -M_PI) a += 2.0 * M_PI;
    return a;
}

double mpc_cost(const MpcProblem& problem, const std::vector<ControlInput>& inputs, const MpcConfig& cfg,
                std::vector<State>* states) {
    const VectorXd U = stack(inputs);
    const auto xs = rollout(problem.x0.vec(), U, cfg);
    if (states != nullptr) {
        states->clear();
        for (const auto& x : xs) states->push_back(State::from_vec(x));
    }
    return cost_of(problem, cfg, U, xs);
}

MpcSolution solve(const MpcProblem& problem, const MpcConfig& cfg, const std::vector<ControlInput>* initial_inputs) {
    const int N = cfg.N;
    if (N < 2 || static_cast<int>(problem.reference.size()) != N + 1) {
        throw std::invalid_argument("mpc: reference window must hold N+1 entries");
    }
    if (has_polytopes(problem) && static_cast<int>(problem.step_polytopes.size()) != N + 1) {
        throw std::invalid_argument("mpc: polytope window must hold N+1 entries");
    }
    const Eigen::Index nU = 4 * N;
    VectorXd U(nU);
    if (initial_inputs != nullptr && static_cast<int>(initial_inputs->size()) == N) {
        U = stack(*initial_inputs);
    } else {
        for (int k = 0; k < N; ++k) U.segment<4>(4 * k) = ControlInput::hover(cfg.dynamics).vec();
    }
    U = clamp_inputs(U, problem.bounds);

    const Vec9 x0 = problem.x0.vec();
    std::vector<Vec9> xs = rollout(x0, U, cfg);
    double J = cost_of(problem, cfg, U, xs);
    double viol = violation_of(problem, cfg, xs);

    MpcSolution sol;
    sol.cost_history.push_back(J);
    QpSettings qs;
    qs.eps_abs = cfg.qp_eps_abs;
    qs.eps_rel = cfg.qp_eps_rel;
    qs.max_iters = cfg.qp_max_iters;

    for (int it = 0; it < cfg.sqp_max_iters; ++it) {
        const Qp qp = assemble(problem, cfg, U, xs);
        const QpResult res = qp_solve(qp.H, qp.f, qp.A, qp.l, qp.u, qs);
        sol.sqp_iters = it + 1;
        sol.qp_iters += res.iters;
        sol.primal_residual = res.primal_residual;
        sol.dual_residual = res.dual_residual;
        sol.kkt_residual = kkt_stationarity(qp.H, qp.f, qp.A, res.x, res.y);
        if (res.status == QpStatus::PrimalInfeasible) {
            sol.status = MpcStatus::Infeasible;
            break;
        }
        const VectorXd dU = res.x.head(nU);

        // backtracking: a feasible iterate must stay feasible and not raise the
        // cost; an infeasible one must lower cost + weighted violation
        bool accepted = false;
        VectorXd U_new;
        std::vector<Vec9> xs_new;
        double J_new = J, viol_new = viol;
        for (double alpha = 1.0; alpha >= kMinStep; alpha *= 0.5) {
            U_new = clamp_inputs(U + alpha * dU, problem.bounds);
            xs_new = rollout(x0, U_new, cfg);
            J_new = cost_of(problem, cfg, U_new, xs_new);
            viol_new = violation_of(problem, cfg, xs_new);
            if (viol <= cfg.violation_tol) {
                accepted = viol_new <= cfg.violation_tol && J_new <= J;
            } else {
                accepted = J_new + kMeritWeight * viol_new < J + kMeritWeight * viol;
            }
            if (accepted) break;
        }
        const bool qp_ok = res.status == QpStatus::Solved;
        if (!accepted) {
            // no descent along the QP direction: the current iterate is stationary
            if (qp_ok && viol <= cfg.violation_tol) sol.status = MpcStatus::Optimal;
            break;
        }
        const double decrease = J - J_new;
        U = U_new;
        xs = std::move(xs_new);
        J = J_new;
        viol = viol_new;
        sol.cost_history.push_back(J);
        if (qp_ok && viol <= cfg.violation_tol && std::abs(decrease) <= cfg.sqp_tol * (1.0 + std::abs(J))) {
            sol.status = MpcStatus::Optimal;
            break;
        }
    }

    sol.cost = J;
    sol.violation = viol;
    sol.inputs.resize(N);
    for (int k = 0; k < N; ++k) sol.inputs[k] = ControlInput::from_vec(U.segment<4>(4 * k));
    sol.states.resize(N + 1);
    for (int k = 0; k <= N; ++k) sol.states[k] = State::from_vec(xs[k]);
    if (cfg.slack && has_polytopes(problem)) {
        for (int k = 1; k <= N; ++k) sol.slack = std::max(sol.slack, overshoot(problem.step_polytopes[k], xs[k]));
    }
    return sol;
}

TrackResult track_step(const MpcSolution* prev, const MpcProblem& problem, const MpcConfig& cfg) {
    std::vector<ControlInput> seed;
    if (prev != nullptr && static_cast<int>(prev->inputs.size()) == cfg.N && prev->status != MpcStatus::Infeasible) {
        seed.assign(prev->inputs.begin() + 1, prev->inputs.end());
        seed.push_back(prev->inputs.back());
    }
    TrackResult out;
    out.solution = solve(problem, cfg, seed.empty() ? nullptr : &seed);
    if (out.solution.status == MpcStatus::Infeasible) {
        out.u0 = ControlInput::hover(cfg.dynamics);
        out.replan = true;
    } else {
        out.u0 = clamp(out.solution.inputs.front(), cfg.dynamics);
    }
    return out;
}

void fill_window(const ReferenceTrajectory& traj, double t, const MpcConfig& cfg, MpcProblem& problem,
                 const std::vector<AxisBox>* free_boxes, const MpcSolution* prev) {
    if (traj.samples.empty()) throw std::invalid_argument("mpc: empty reference trajectory");
    const int N = cfg.N;
    const auto& samples = traj.samples;
    const double t0 = samples.front().t;
    const double sample_dt = samples.size() > 1 ? samples[1].t - samples[0].t : cfg.dt;
    const bool boxes = traj.boxes.size() == samples.size();
    problem.reference.assign(N + 1, Eigen::Vector4d::Zero());
    problem.step_polytopes.clear();
    if (boxes) problem.step_polytopes.resize(N + 1);
    for (int k = 0; k <= N; ++k) {
        const double tk = t + k * cfg.dt;
        const long idx = std::clamp<long>(std::lround((tk - t0) / sample_dt), 0, static_cast<long>(samples.size()) - 1);
        const RefSample& s = samples[idx];
        problem.reference[k] << s.p, s.yaw;
        if (!boxes) continue;
        const AxisBox* chosen = &traj.boxes[idx];
        // predicted position of step k under the shifted previous plan
        if (free_boxes != nullptr && prev != nullptr && k + 1 < static_cast<int>(prev->states.size())) {
            const Eigen::Vector3d& guess = prev->states[k + 1].p;
            if (!chosen->contains(guess)) {
                for (const auto& b : *free_boxes) {
                    if (b.contains(s.p, 1e-9) && b.contains(guess)) {
                        chosen = &b;
                        break;
                    }
                }
            }
        }
        problem.step_polytopes[k] = box_to_polytope(*chosen);
    }
}

}  // namespace semland
