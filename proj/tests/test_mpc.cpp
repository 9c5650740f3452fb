#include <algorithm>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "semland/mpc.hpp"

using namespace semland;
using Eigen::Vector3d;
using Eigen::Vector4d;

namespace {

MpcProblem hover_problem(const MpcConfig& cfg, const Vector3d& p) {
    MpcProblem pr;
    pr.x0.p = p;
    pr.reference.assign(cfg.N + 1, Vector4d(p.x(), p.y(), p.z(), 0.0));
    pr.bounds = MpcBounds::from(cfg.dynamics);
    pr.u_prev = ControlInput::hover(cfg.dynamics);
    return pr;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

bool non_increasing(const std::vector<double>& h) {
    for (std::size_t i = 1; i < h.size(); ++i) {
        if (h[i] > h[i - 1]) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("wrap_angle") {
    CHECK(wrap_angle(0.0) == 0.0);
    CHECK(wrap_angle(M_PI) == doctest::Approx(M_PI));
    CHECK(wrap_angle(-M_PI) == doctest::Approx(M_PI));
    CHECK(wrap_angle(3 * M_PI / 2) == doctest::Approx(-M_PI / 2));
    CHECK(wrap_angle(-7.0) == doctest::Approx(-7.0 + 2 * M_PI));
}

TEST_CASE("hover reference holds hover") {
    const MpcConfig cfg;
    const MpcProblem pr = hover_problem(cfg, Vector3d(1, 2, 3));
    const MpcSolution sol = solve(pr, cfg);
    CHECK(sol.status == MpcStatus::Optimal);
    CHECK(sol.cost <= 1e-6);
    for (const auto& u : sol.inputs) {
        CHECK(u.rate_cmd.norm() <= 1e-6);
        CHECK(std::abs(u.thrust_cmd - cfg.dynamics.g) <= 1e-6);
    }
}

TEST_CASE("vertical step matches the Riccati oracle") {
    MpcConfig cfg;
    cfg.sqp_tol = 1e-12;
    for (double step : {0.05, 0.1, -0.1}) {
        MpcProblem pr = hover_problem(cfg, Vector3d(0, 0, 1));
        std::vector<double> ref(cfg.N + 1, 1.0 + step);
        ref[0] = 1.0;
        for (int k = 0; k <= cfg.N; ++k) pr.reference[k].z() = ref[k];
        const MpcSolution sol = solve(pr, cfg);
        REQUIRE(sol.status == MpcStatus::Optimal);
        for (const auto& u : sol.inputs) {
            CHECK(u.thrust_cmd > cfg.dynamics.thrust_min);
            CHECK(u.thrust_cmd < cfg.dynamics.thrust_max);
        }
        const double dt = cfg.dt;
        Eigen::Matrix2d Ad;
        Ad << 1, dt, 0, 1;
        const Eigen::Vector2d Bd(0.5 * dt * dt, dt);
        const auto pos = oracle::riccati_double_integrator(Ad, Bd, Eigen::Vector2d(1.0, 0.0), 0.0, ref, cfg.Q(2),
                                                           cfg.Q_N(2), cfg.R(3), cfg.R_delta(3), cfg.N);
        for (int k = 0; k <= cfg.N; ++k) {
            CHECK(std::abs(sol.states[k].p.z() - pos[k]) <= 1e-3);
            CHECK(sol.states[k].p.head<2>().norm() <= 1e-9);
        }
    }
}

TEST_CASE("position polytopes are respected") {
    const MpcConfig cfg;
    MpcProblem pr = hover_problem(cfg, Vector3d(0, 0, 1));
    for (int k = 1; k <= cfg.N; ++k) pr.reference[k] = Vector4d(0.05 * k, 0.0, 1.0, 0.0);
    const AxisBox wall{Vector3d(-5, -5, 0), Vector3d(0.3, 5, 5)};
    pr.step_polytopes.assign(cfg.N + 1, box_to_polytope(wall));
    const MpcSolution sol = solve(pr, cfg);
    CHECK(sol.status == MpcStatus::Optimal);
    double reach = 0.0;
    for (int k = 1; k <= cfg.N; ++k) {
        const Polytope& poly = pr.step_polytopes[k];
        CHECK((poly.A * sol.states[k].p - poly.b).maxCoeff() <= 1e-4);
        reach = std::max(reach, sol.states[k].p.x());
    }
    CHECK(reach > 0.25);  // pushed against the face, not parked
    CHECK(sol.kkt_residual <= 1e-5);
}

TEST_CASE("inputs stay within bounds and states within limits") {
    const MpcConfig cfg;
    MpcProblem pr = hover_problem(cfg, Vector3d(0, 0, 1));
    for (int k = 1; k <= cfg.N; ++k) pr.reference[k] = Vector4d(3.0, -2.0, 2.0, 1.0);
    const MpcSolution sol = solve(pr, cfg);
    CHECK(sol.status != MpcStatus::Infeasible);
    for (const auto& u : sol.inputs) {
        CHECK((u.vec().array() >= pr.bounds.u_lo.array()).all());
        CHECK((u.vec().array() <= pr.bounds.u_hi.array()).all());
    }
    for (const auto& s : sol.states) {
        CHECK(s.v.cwiseAbs().maxCoeff() <= pr.bounds.v_max + 1e-4);
        CHECK(s.att.head<2>().cwiseAbs().maxCoeff() <= pr.bounds.att_max + 1e-4);
    }
}

TEST_CASE("infeasible start triggers hover-hold and replan, slack mode absorbs it") {
    MpcConfig cfg;
    MpcProblem pr = hover_problem(cfg, Vector3d(0, 0, 1));
    const AxisBox far{Vector3d(2, 2, 2), Vector3d(3, 3, 3)};
    pr.step_polytopes.assign(cfg.N + 1, box_to_polytope(far));
    const TrackResult hard = track_step(nullptr, pr, cfg);
    CHECK(hard.solution.status == MpcStatus::Infeasible);
    CHECK(hard.replan);
    CHECK(hard.u0 == ControlInput::hover(cfg.dynamics));

    cfg.slack = true;
    const TrackResult soft = track_step(nullptr, pr, cfg);
    CHECK(soft.solution.status != MpcStatus::Infeasible);
    CHECK_FALSE(soft.replan);
    CHECK(soft.solution.slack > 0.0);
}

TEST_CASE("repeated hover tracking settles") {
    const MpcConfig cfg;
    const MpcProblem pr = hover_problem(cfg, Vector3d(0, 0, 2));
    MpcSolution prev;
    const MpcSolution* seed = nullptr;
    ControlInput u0;
    for (int call = 0; call < 3; ++call) {
        const TrackResult r = track_step(seed, pr, cfg);
        prev = r.solution;
        seed = &prev;
        u0 = r.u0;
    }
    CHECK((u0.vec() - ControlInput::hover(cfg.dynamics).vec()).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("reference window pads with the final sample") {
    MpcConfig cfg;
    ReferenceTrajectory traj;
    for (int i = 0; i < 5; ++i) {
        traj.samples.push_back(RefSample{0.05 * i, Vector3d(0.1 * i, 0, 1), 0.2});
        traj.boxes.push_back(AxisBox{Vector3d(-1, -1, 0), Vector3d(2, 1, 2)});
    }
    MpcProblem pr;
    fill_window(traj, 0.1, cfg, pr);
    REQUIRE(pr.reference.size() == static_cast<std::size_t>(cfg.N + 1));
    REQUIRE(pr.step_polytopes.size() == static_cast<std::size_t>(cfg.N + 1));
    CHECK(pr.reference[0].x() == doctest::Approx(0.2));
    CHECK(pr.reference[1].x() == doctest::Approx(0.3));
    for (int k = 2; k <= cfg.N; ++k) CHECK(pr.reference[k] == Vector4d(0.4, 0, 1, 0.2));
}

TEST_CASE("closed loop: warm starts, monotone cost, KKT") {
    MpcConfig cfg;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> warm_iters, cold_iters;
    int optimal = 0;
    State x;
    x.p = Vector3d(0, 0, 1);
    ControlInput applied = ControlInput::hover(cfg.dynamics);
    MpcSolution prev;
    bool have_prev = false;
    Vector3d goal(1.0, 0.5, 1.5);
    for (int tick = 0; tick < 100; ++tick) {
        if (tick % 25 == 0) goal = Vector3d(u(rng), u(rng), 1.5 + 0.5 * u(rng));
        MpcProblem pr;
        pr.x0 = x;
        pr.bounds = MpcBounds::from(cfg.dynamics);
        pr.u_prev = applied;
        for (int k = 0; k <= cfg.N; ++k) {
            const double s = std::min(1.0, 0.05 * k);
            const Vector3d p = x.p + s * (goal - x.p);
            pr.reference.emplace_back(p.x(), p.y(), p.z(), 0.1);
        }
        const MpcSolution cold = solve(pr, cfg);
        const TrackResult warm = track_step(have_prev ? &prev : nullptr, pr, cfg);
        cold_iters.push_back(cold.sqp_iters);
        warm_iters.push_back(warm.solution.sqp_iters);
        for (const MpcSolution* s : {&cold, &warm.solution}) {
            CHECK(non_increasing(s->cost_history));
            if (s->status == MpcStatus::Optimal) {
                ++optimal;
                CHECK(s->kkt_residual <= 1e-5);
            }
        }
        prev = warm.solution;
        have_prev = true;
        applied = warm.u0;
        x = step(x, applied, cfg.dynamics, cfg.dt);
    }
    MESSAGE("median sqp iterations warm " << median(warm_iters) << " cold " << median(cold_iters));
    CHECK(median(warm_iters) <= median(cold_iters));
    CHECK(optimal >= 150);
    CHECK((x.p - goal).norm() < 0.5);
}
