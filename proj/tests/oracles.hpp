// Independent reference computations shared by the unit and acceptance
// suites. Nothing here calls into the code path it is used to check.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "semland/dynamics.hpp"
#include "semland/geometry.hpp"

namespace oracle {

using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;

inline Eigen::Matrix3d axis_rotation(int axis, double angle) {
    return Eigen::AngleAxisd(angle, Eigen::Vector3d::Unit(axis)).toRotationMatrix();
}

// Richardson-extrapolated explicit Euler with n and 2n sub-steps.
inline semland::StateVec<double> euler_rollout(const semland::StateVec<double>& x0,
                                               const semland::InputVec<double>& u,
                                               const semland::DynamicsParams& params, double dt,
                                               int substeps) {
    auto run = [&](int n) {
        semland::StateVec<double> x = x0;
        const double h = dt / n;
        for (int i = 0; i < n; ++i) {
            const double roll = x(6), pitch = x(7), yaw = x(8);
            const Eigen::Matrix3d R = axis_rotation(2, yaw) * axis_rotation(1, pitch) *
                                      axis_rotation(0, roll);
            semland::StateVec<double> dx;
            dx.segment<3>(0) = x.segment<3>(3);
            dx.segment<3>(3) = R.col(2) * u(3) - Eigen::Vector3d(0, 0, params.g);
            dx.segment<3>(6) = u.head<3>();
            x += h * dx;
        }
        return x;
    };
    return 2.0 * run(2 * substeps) - run(substeps);
}

template <typename F>
MatrixXd central_difference(const F& fn, const VectorXd& at, double h) {
    const VectorXd f0 = fn(at);
    MatrixXd J(f0.size(), at.size());
    for (Eigen::Index j = 0; j < at.size(); ++j) {
        VectorXd plus = at, minus = at;
        plus(j) += h;
        minus(j) -= h;
        J.col(j) = (fn(plus) - fn(minus)) / (2.0 * h);
    }
    return J;
}

inline double closest_point_distance_sq(const Vector3d& p, const semland::AxisBox& box) {
    Vector3d c = p;
    for (int d = 0; d < 3; ++d) c(d) = std::min(std::max(p(d), box.lo(d)), box.hi(d));
    return (p - c).squaredNorm();
}

inline double penalty(const Vector3d& p, const std::vector<semland::AxisBox>& safe,
                      const std::vector<semland::AxisBox>& clearance, double eps) {
    for (const auto& c : clearance) {
        if (closest_point_distance_sq(p, c) == 0.0) return 0.0;
    }
    double best = std::numeric_limits<double>::infinity();
    for (const auto& b : safe) best = std::min(best, closest_point_distance_sq(p, b));
    return best == 0.0 ? 0.0 : best + eps;
}

inline bool in_box(const Vector3d& p, const semland::AxisBox& b) {
    for (int d = 0; d < 3; ++d) {
        if (p(d) < b.lo(d) || p(d) > b.hi(d)) return false;
    }
    return true;
}

inline bool in_open_box(const Vector3d& p, const semland::AxisBox& b) {
    for (int d = 0; d < 3; ++d) {
        if (p(d) <= b.lo(d) || p(d) >= b.hi(d)) return false;
    }
    return true;
}

inline semland::AxisBox random_box(std::mt19937_64& rng, double lo, double hi, double min_size = 0.05) {
    std::uniform_real_distribution<double> pos(lo, hi);
    semland::AxisBox b;
    for (int d = 0; d < 3; ++d) {
        double a = pos(rng), c = pos(rng);
        if (a > c) std::swap(a, c);
        if (c - a < min_size) c = a + min_size;
        b.lo(d) = a;
        b.hi(d) = c;
    }
    return b;
}

struct QpOracleResult {
    VectorXd x;
    double objective{std::numeric_limits<double>::infinity()};
};

// Enumerates every assignment {inactive, at lower, at upper} of the
// constraints, solves the equality-constrained KKT system for each and keeps
// the primal-feasible candidate with the lowest objective.
inline std::optional<QpOracleResult> qp_enumerate(const MatrixXd& H, const VectorXd& f,
                                                  const MatrixXd& A, const VectorXd& l,
                                                  const VectorXd& u) {
    const int n = static_cast<int>(H.rows());
    const int m = static_cast<int>(A.rows());
    int total = 1;
    for (int i = 0; i < m; ++i) total *= 3;
    std::optional<QpOracleResult> best;
    for (int code = 0; code < total; ++code) {
        std::vector<int> rows;
        std::vector<double> rhs;
        int c = code;
        for (int i = 0; i < m; ++i) {
            const int s = c % 3;
            c /= 3;
            if (s == 1 && std::isfinite(l(i))) {
                rows.push_back(i);
                rhs.push_back(l(i));
            } else if (s == 2 && std::isfinite(u(i))) {
                rows.push_back(i);
                rhs.push_back(u(i));
            } else if (s != 0) {
                rows.clear();
                rows.push_back(-1);
                break;
            }
        }
        if (!rows.empty() && rows.front() == -1) continue;
        const int k = static_cast<int>(rows.size());
        MatrixXd K = MatrixXd::Zero(n + k, n + k);
        VectorXd b(n + k);
        K.topLeftCorner(n, n) = H;
        b.head(n) = -f;
        for (int r = 0; r < k; ++r) {
            K.block(n + r, 0, 1, n) = A.row(rows[r]);
            K.block(0, n + r, n, 1) = A.row(rows[r]).transpose();
            b(n + r) = rhs[r];
        }
        Eigen::FullPivLU<MatrixXd> lu(K);
        if (lu.rank() < n + k) continue;
        const VectorXd sol = lu.solve(b);
        const VectorXd x = sol.head(n);
        const VectorXd Ax = A * x;
        bool feasible = true;
        for (int i = 0; i < m; ++i) {
            if (Ax(i) < l(i) - 1e-9 || Ax(i) > u(i) + 1e-9) feasible = false;
        }
        if (!feasible) continue;
        const double obj = 0.5 * x.dot(H * x) + f.dot(x);
        if (!best || obj < best->objective - 1e-12) best = QpOracleResult{x, obj};
    }
    return best;
}

// Finite-horizon LQ tracking for a 1-D double integrator
//   s_{k+1} = Ad s_k + Bd w_k,  s = [pos, vel]
// with cost sum_{k=1}^{N-1} qp (pos_k - r_k)^2 + qN (pos_N - r_N)^2
//          + sum_k ru w_k^2 + sum_{k>=1} rd (w_k - w_{k-1})^2 + rd (w_0 - w_prev)^2
// solved by a backward Riccati recursion on the input-augmented state
// [pos, vel, w_{k-1}, 1]. Returns the optimal position sequence pos_0..pos_N.
// Optimal (position, velocity) sequence.
inline std::vector<Eigen::Vector2d> riccati_double_integrator_states(const Eigen::Matrix2d& Ad,
                                                                    const Eigen::Vector2d& Bd,
                                                                    const Eigen::Vector2d& s0, double w_prev,
                                                                    const std::vector<double>& ref, double qp,
                                                                    double qN, double ru, double rd, int N) {
    using M4 = Eigen::Matrix4d;
    using V4 = Eigen::Vector4d;
    // augmented dynamics: z = [pos, vel, w_prev, 1], input w
    M4 F = M4::Zero();
    F.topLeftCorner<2, 2>() = Ad;
    F(3, 3) = 1.0;
    V4 G = V4::Zero();
    G.head<2>() = Bd;
    G(2) = 1.0;

    // value function V_k(z) = z' S_k z
    std::vector<M4> S(N + 1);
    auto state_cost = [&](int k) {
        M4 Qk = M4::Zero();
        const double w = (k == N) ? qN : (k == 0 ? 0.0 : qp);
        // (pos - r)^2 = [1 0 0 -r] z squared
        V4 e(1.0, 0.0, 0.0, -ref[k]);
        Qk += w * e * e.transpose();
        return Qk;
    };
    S[N] = state_cost(N);
    std::vector<Eigen::RowVector4d> K(N);
    for (int k = N - 1; k >= 0; --k) {
        // stage: state_cost(k) + ru w^2 + rd (w - z2)^2, next z' = F z + G w
        const M4 Qk = state_cost(k);
        V4 e2 = V4::Zero();
        e2(2) = 1.0;
        // cost in (z, w): z'Qz + ru w^2 + rd (w^2 - 2 w z2 + z2^2) + (Fz+Gw)'S(Fz+Gw)
        const M4 Qzz = Qk + rd * e2 * e2.transpose() + F.transpose() * S[k + 1] * F;
        const double Rww = ru + rd + G.dot(S[k + 1] * G);
        const V4 Nzw = -rd * e2 + F.transpose() * S[k + 1] * G;
        K[k] = -(Nzw / Rww).transpose();
        S[k] = Qzz - Nzw * Nzw.transpose() / Rww;
    }
    std::vector<Eigen::Vector2d> xs(N + 1);
    V4 z(s0(0), s0(1), w_prev, 1.0);
    xs[0] = z.head<2>();
    for (int k = 0; k < N; ++k) {
        const double w = K[k] * z;
        z = F * z + G * w;
        z(2) = w;
        xs[k + 1] = z.head<2>();
    }
    return xs;
}

inline std::vector<double> riccati_double_integrator(const Eigen::Matrix2d& Ad, const Eigen::Vector2d& Bd,
                                                     const Eigen::Vector2d& s0, double w_prev,
                                                     const std::vector<double>& ref, double qp, double qN,
                                                     double ru, double rd, int N) {
    std::vector<double> pos;
    for (const auto& x : riccati_double_integrator_states(Ad, Bd, s0, w_prev, ref, qp, qN, ru, rd, N)) {
        pos.push_back(x(0));
    }
    return pos;
}

// Exhaustive depth-limited search over the 1-D primitive tree, with
// branch-and-bound on cost. Obstacles are closed x-intervals; a primitive is
// rejected if its swept x-range touches one (the quadratic's extremum is
// included) or leaves [lo, hi].
struct Search1d {
    double a_max{2.0}, v_max{2.0}, tau{0.4}, rho{10.0};
    double goal_tol{0.2}, goal_vel_tol{1.0};
    double lo{-10.0}, hi{10.0};
    std::vector<std::pair<double, double>> obstacles;
};

inline std::optional<double> search_1d(const Search1d& s, double x0, double v0, double goal, int depth) {
    double best = std::numeric_limits<double>::infinity();
    std::function<void(double, double, double, int)> dfs = [&](double x, double v, double g, int left) {
        if (g >= best) return;
        if (std::abs(x - goal) <= s.goal_tol && std::abs(v) <= s.goal_vel_tol) {
            best = g;
            return;
        }
        if (left == 0) return;
        for (double a : {-s.a_max, 0.0, s.a_max}) {
            const double v1 = v + a * s.tau;
            if (std::abs(v1) > s.v_max + 1e-9) continue;
            const double x1 = x + v * s.tau + 0.5 * a * s.tau * s.tau;
            double xmin = std::min(x, x1), xmax = std::max(x, x1);
            if (a != 0.0) {
                const double ts = -v / a;
                if (ts > 0.0 && ts < s.tau) {
                    const double xs = x + v * ts + 0.5 * a * ts * ts;
                    xmin = std::min(xmin, xs);
                    xmax = std::max(xmax, xs);
                }
            }
            if (xmin < s.lo || xmax > s.hi) continue;
            bool hit = false;
            for (const auto& [olo, ohi] : s.obstacles) hit = hit || (xmax >= olo && xmin <= ohi);
            if (hit) continue;
            dfs(x1, v1, g + (a * a + s.rho) * s.tau, left - 1);
        }
    };
    dfs(x0, v0, 0.0, depth);
    if (!std::isfinite(best)) return std::nullopt;
    return best;
}

}  // namespace oracle
