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

#include "semland/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace semland {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr double kRhoEqScale = 1e3;

double inf_norm(const VectorXd& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

bool is_inf(double bound) { return std::abs(bound) >= kQpInfinity; }

struct Scaling {
    VectorXd D;  // variables
    VectorXd E;  // constraints
    double c{1.0};
};

// Modified Ruiz equilibration of the KKT matrix [H A'; A 0] plus cost scaling.
Scaling equilibrate(MatrixXd& P, VectorXd& q, MatrixXd& A, int iters) {
    const Eigen::Index n = P.rows(), m = A.rows();
    Scaling s{VectorXd::Ones(n), VectorXd::Ones(m), 1.0};
    for (int it = 0; it < iters; ++it) {
        VectorXd dcol(n), erow(m);
        for (Eigen::Index j = 0; j < n; ++j) {
            double norm = P.col(j).cwiseAbs().maxCoeff();
            if (m > 0) norm = std::max(norm, A.col(j).cwiseAbs().maxCoeff());
            dcol(j) = norm < 1e-4 ? 1.0 : 1.0 / std::sqrt(std::min(norm, 1e4));
        }
        if (m > 0) {
            const VectorXd row_norm = A.cwiseAbs().rowwise().maxCoeff();
            for (Eigen::Index i = 0; i < m; ++i) {
                erow(i) = row_norm(i) < 1e-4 ? 1.0 : 1.0 / std::sqrt(std::min(row_norm(i), 1e4));
            }
        }
        P.array().colwise() *= dcol.array();
        P.array().rowwise() *= dcol.transpose().array();
        q.array() *= dcol.array();
        A.array().colwise() *= erow.array();
        A.array().rowwise() *= dcol.transpose().array();
        s.D.array() *= dcol.array();
        s.E.array() *= erow.array();

        double mean_col = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) mean_col += P.col(j).cwiseAbs().maxCoeff();
        mean_col /= std::max<Eigen::Index>(n, 1);
        double gamma = std::max(mean_col, inf_norm(q));
        gamma = gamma < 1e-4 ? 1.0 : 1.0 / std::min(gamma, 1e4);
        P *= gamma;
        q *= gamma;
        s.c *= gamma;
    }
    return s;
}

VectorXd project(const VectorXd& v, const VectorXd& l, const VectorXd& u) {
    return v.cwiseMax(l).cwiseMin(u);
}

double objective(const MatrixXd& H, const VectorXd& f, const VectorXd& x) {
    return 0.5 * x.dot(H * x) + f.dot(x);
}

struct Residuals {
    double prim{0.0}, dual{0.0};
    double prim_scale{0.0}, dual_scale{0.0};
};

Residuals unscaled_residuals(const MatrixXd& H, const VectorXd& f, const MatrixXd& A,
                             const VectorXd& l, const VectorXd& u, const VectorXd& x,
                             const VectorXd& y) {
    Residuals r;
    const VectorXd Ax = A * x;
    const VectorXd z = project(Ax, l, u);
    const VectorXd Hx = H * x;
    const VectorXd Aty = A.transpose() * y;
    r.prim = inf_norm(Ax - z);
    r.dual = inf_norm(Hx + f + Aty);
    r.prim_scale = std::max(inf_norm(Ax), inf_norm(z));
    r.dual_scale = std::max({inf_norm(Hx), inf_norm(Aty), inf_norm(f)});
    return r;
}

// Solve the equality-constrained problem on the guessed active set and
// return {x, y} on the full constraint index set.
bool polish(const MatrixXd& H, const VectorXd& f, const MatrixXd& A, const VectorXd& l,
            const VectorXd& u, const VectorXd& z, const VectorXd& y, VectorXd& x_out,
            VectorXd& y_out) {
    const Eigen::Index n = H.rows(), m = A.rows();
    std::vector<Eigen::Index> rows;
    std::vector<double> rhs;
    std::vector<int> side;
    for (Eigen::Index i = 0; i < m; ++i) {
        const bool lower = !is_inf(l(i)) && z(i) - l(i) < -y(i);
        const bool upper = !is_inf(u(i)) && u(i) - z(i) < y(i);
        const bool equality = u(i) - l(i) < 1e-10;
        if (lower || upper) {
            rows.push_back(i);
            rhs.push_back(lower ? l(i) : u(i));
            side.push_back(equality ? 0 : (lower ? -1 : 1));
        }
    }
    const Eigen::Index k = static_cast<Eigen::Index>(rows.size());
    constexpr double delta = 1e-9;
    MatrixXd K = MatrixXd::Zero(n + k, n + k);
    K.topLeftCorner(n, n) = H;
    K.topLeftCorner(n, n).diagonal().array() += delta;
    VectorXd b(n + k);
    b.head(n) = -f;
    for (Eigen::Index r = 0; r < k; ++r) {
        K.block(n + r, 0, 1, n) = A.row(rows[r]);
        K.block(0, n + r, n, 1) = A.row(rows[r]).transpose();
        K(n + r, n + r) = -delta;
        b(n + r) = rhs[r];
    }
    // regularized KKT with iterative refinement against the exact system
    MatrixXd K_exact = K;
    K_exact.topLeftCorner(n, n).diagonal().array() -= delta;
    for (Eigen::Index r = 0; r < k; ++r) K_exact(n + r, n + r) = 0.0;
    Eigen::PartialPivLU<MatrixXd> lu(K);
    VectorXd sol = lu.solve(b);
    for (int it = 0; it < 5; ++it) {
        const VectorXd res = b - K_exact * sol;
        sol += lu.solve(res);
    }
    if (!sol.allFinite()) return false;
    x_out = sol.head(n);
    y_out = VectorXd::Zero(m);
    for (Eigen::Index r = 0; r < k; ++r) {
        const double yr = sol(n + r);
        if (side[r] * yr < -1e-7) return false;  // wrong multiplier sign: bad active set
        y_out(rows[r]) = yr;
    }
    return true;
}

}  // namespace

const char* to_string(QpStatus status) {
    switch (status) {
        case QpStatus::Solved: return "solved";
        case QpStatus::MaxIters: return "max_iters";
        case QpStatus::PrimalInfeasible: return "primal_infeasible";
    }
    return "unknown";
}

double kkt_stationarity(const MatrixXd& H, const VectorXd& f, const MatrixXd& A,
                        const VectorXd& x, const VectorXd& y) {
    VectorXd r = H * x + f;
    if (A.rows() > 0) r += A.transpose() * y;
    return inf_norm(r);
}

QpResult qp_solve(const MatrixXd& H, const VectorXd& f, const MatrixXd& A_in, const VectorXd& l_in,
                  const VectorXd& u_in, const QpSettings& settings, const QpWarmStart* warm) {
    const Eigen::Index n = H.rows();
    const Eigen::Index m = A_in.rows();
    MatrixXd A = m > 0 ? A_in : MatrixXd::Zero(0, n);
    const VectorXd l = l_in.cwiseMax(-kQpInfinity);
    const VectorXd u = u_in.cwiseMin(kQpInfinity);

    MatrixXd Hreg = H;
    Hreg.diagonal().array() += settings.regularization;

    // scaled problem data
    MatrixXd P = Hreg;
    VectorXd q = f;
    MatrixXd As = A;
    const Scaling sc = equilibrate(P, q, As, settings.scaling_iters);
    VectorXd ls = l, us = u;
    for (Eigen::Index i = 0; i < m; ++i) {
        if (!is_inf(ls(i))) ls(i) *= sc.E(i);
        if (!is_inf(us(i))) us(i) *= sc.E(i);
    }

    double rho = settings.rho;
    auto rho_vector = [&](double base) {
        VectorXd r(m);
        for (Eigen::Index i = 0; i < m; ++i) {
            if (is_inf(l(i)) && is_inf(u(i))) {
                r(i) = kRhoMin;
            } else if (u(i) - l(i) < 1e-10) {
                r(i) = kRhoEqScale * base;
            } else {
                r(i) = base;
            }
        }
        return r;
    };
    VectorXd rho_vec = rho_vector(rho);

    Eigen::LLT<MatrixXd> kkt;
    auto factor = [&]() {
        MatrixXd K = P;
        K.diagonal().array() += settings.sigma;
        if (m > 0) {
            const MatrixXd W = As.transpose() * rho_vec.cwiseSqrt().asDiagonal();
            K.selfadjointView<Eigen::Lower>().rankUpdate(W);
        }
        kkt.compute(K);
    };
    factor();

    VectorXd x = VectorXd::Zero(n);
    VectorXd z = VectorXd::Zero(m);
    VectorXd y = VectorXd::Zero(m);
    if (warm != nullptr) {
        if (warm->x.size() == n) x = sc.D.cwiseInverse().asDiagonal() * warm->x;
        if (warm->y.size() == m) y = sc.c * (sc.E.cwiseInverse().asDiagonal() * warm->y);
        z = project(As * x, ls, us);
    }

    QpResult result;
    result.status = QpStatus::MaxIters;

    auto unscale_x = [&](const VectorXd& xs) -> VectorXd { return sc.D.asDiagonal() * xs; };
    auto unscale_y = [&](const VectorXd& ys) -> VectorXd {
        return (sc.E.asDiagonal() * ys) / sc.c;
    };

    VectorXd best_x = unscale_x(x), best_y = unscale_y(y);
    double best_merit = std::numeric_limits<double>::infinity();
    Residuals best_res;

    VectorXd y_prev = y;
    int iter = 0;
    for (iter = 1; iter <= settings.max_iters; ++iter) {
        y_prev = y;
        VectorXd rhs = settings.sigma * x - q;
        if (m > 0) rhs.noalias() += As.transpose() * (rho_vec.cwiseProduct(z) - y);
        const VectorXd x_tilde = kkt.solve(rhs);
        const VectorXd z_tilde = As * x_tilde;
        x = settings.alpha * x_tilde + (1.0 - settings.alpha) * x;
        const VectorXd z_relaxed = settings.alpha * z_tilde + (1.0 - settings.alpha) * z;
        const VectorXd z_next = project(z_relaxed + y.cwiseQuotient(rho_vec), ls, us);
        y += rho_vec.cwiseProduct(z_relaxed - z_next);
        z = z_next;

        const bool check = iter % settings.check_interval == 0 || iter == settings.max_iters;
        if (!check) continue;

        const VectorXd xu = unscale_x(x);
        const VectorXd yu = unscale_y(y);
        const Residuals res = unscaled_residuals(H, f, A, l, u, xu, yu);
        const double eps_prim = settings.eps_abs + settings.eps_rel * res.prim_scale;
        const double eps_dual = settings.eps_abs + settings.eps_rel * res.dual_scale;
        const double merit = std::max(res.prim / eps_prim, res.dual / eps_dual);
        if (merit < best_merit) {
            best_merit = merit;
            best_x = xu;
            best_y = yu;
            best_res = res;
        }
        if (res.prim <= eps_prim && res.dual <= eps_dual) {
            result.status = QpStatus::Solved;
            break;
        }

        // infeasibility certificate from the change in the dual iterate
        if (m > 0) {
            const VectorXd dy = sc.E.asDiagonal() * (y - y_prev);
            const double dy_norm = inf_norm(dy);
            if (dy_norm > 1e-12) {
                const double at_dy = inf_norm(A.transpose() * dy);
                double support = 0.0;
                bool bounded = true;
                for (Eigen::Index i = 0; i < m && bounded; ++i) {
                    if (dy(i) > 0.0) {
                        if (is_inf(u(i))) bounded = false;
                        else support += u(i) * dy(i);
                    } else if (dy(i) < 0.0) {
                        if (is_inf(l(i))) bounded = false;
                        else support += l(i) * dy(i);
                    }
                }
                if (bounded && at_dy <= settings.eps_pinf * dy_norm &&
                    support <= -settings.eps_pinf * dy_norm) {
                    result.status = QpStatus::PrimalInfeasible;
                    break;
                }
            }
        }

        if (settings.adaptive_rho && m > 0 && iter % settings.adaptive_rho_interval == 0) {
            const VectorXd Axs = As * x;
            const double prim_s = inf_norm(Axs - z) / std::max({inf_norm(Axs), inf_norm(z), 1e-10});
            const VectorXd Px = P * x;
            const VectorXd Aty = As.transpose() * y;
            const double dual_s = inf_norm(Px + q + Aty) /
                                  std::max({inf_norm(Px), inf_norm(Aty), inf_norm(q), 1e-10});
            const double rho_new =
                std::clamp(rho * std::sqrt(prim_s / std::max(dual_s, 1e-10)), kRhoMin, kRhoMax);
            if (rho_new > 5.0 * rho || rho_new < 0.2 * rho) {
                rho = rho_new;
                rho_vec = rho_vector(rho);
                factor();
            }
        }
    }
    result.iters = std::min(iter, settings.max_iters);

    if (result.status == QpStatus::PrimalInfeasible) {
        result.x = best_x;
        result.y = best_y;
        result.primal_residual = best_res.prim;
        result.dual_residual = best_res.dual;
        result.objective = objective(H, f, result.x);
        return result;
    }

    result.x = best_x;
    result.y = best_y;
    result.primal_residual = best_res.prim;
    result.dual_residual = best_res.dual;

    if (settings.polish) {
        VectorXd xp, yp;
        const VectorXd z_best = project(A * best_x, l, u);
        if (polish(H, f, A, l, u, z_best, best_y, xp, yp)) {
            const Residuals pr = unscaled_residuals(H, f, A, l, u, xp, yp);
            bool sign_ok = true;
            for (Eigen::Index i = 0; i < m; ++i) {
                if (yp(i) > 1e-9 && is_inf(u(i))) sign_ok = false;
                if (yp(i) < -1e-9 && is_inf(l(i))) sign_ok = false;
            }
            if (sign_ok && pr.prim <= std::max(best_res.prim, settings.eps_abs) &&
                pr.dual <= std::max(best_res.dual, settings.eps_abs)) {
                result.x = xp;
                result.y = yp;
                result.primal_residual = pr.prim;
                result.dual_residual = pr.dual;
                result.polished = true;
                const double eps_prim = settings.eps_abs + settings.eps_rel * pr.prim_scale;
                const double eps_dual = settings.eps_abs + settings.eps_rel * pr.dual_scale;
                if (pr.prim <= eps_prim && pr.dual <= eps_dual) result.status = QpStatus::Solved;
            }
        }
    }
    result.objective = objective(H, f, result.x);
    return result;
}

}  // namespace semland
